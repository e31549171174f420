//! Decomposition of a state near a sum of travelling solitons.
//!
//! The ansatz is linear in the kernel coefficients, so enforcing energy
//! orthogonality of the remainder to every kernel direction is one Gram
//! solve. The same pairings give the exponential coordinates `z±` and the
//! well-prepared data whose modulation has `a = b = 0` and a prescribed `z⁺`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{promote, Field, FieldError, FieldPair, Point4, ScalarField, Symmetry};
use crate::interaction::{localized_pairing, log_rate, InteractionError, KernelSet, MultiSolitonConfig, Soliton};
use crate::lorentz::{exp_directions, pair_vector, shift_x1, ExpDirection, LorentzError};
use crate::quadrature::{Quadrature, QuadError, QuadratureSpec};
use crate::spectrum::{radial_unstable_mode, SpectrumError, UnstableMode};
use crate::states::{apply_generator, ground_state, Generator};

/// Default largest admissible condition number of the Gram matrix.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;
/// Default bound on `‖u − ΣQₙ‖_𝓗` accepted by [`ModulationBasis::decompose`].
pub const DEFAULT_SMALLNESS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ModulationError {
    #[error("Gram matrix condition number {0:.3e} exceeds the limit (solitons too close or t too small)")]
    IllConditioned(f64),
    #[error("deviation {norm:.3e} exceeds the smallness bound {bound}")]
    NotClose { norm: f64, bound: f64 },
    #[error("unstable amplitude {norm:.3e} exceeds T^(-7/2) = {bound:.3e}")]
    AmplitudeTooLarge { norm: f64, bound: f64 },
    #[error("expected {expected} values, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("need log t > 0, got t = {0}")]
    EarlyTime(f64),
    #[error("need at least 3 uniformly spaced samples")]
    ShortTrajectory,
    #[error("soliton {0} has no kernel direction ψ")]
    MissingKernel(usize),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Which kernel coefficient a direction carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Psi(usize),
    Phi(usize, usize),
}

/// Soliton configuration plus the unstable modes and numerical settings.
#[derive(Clone, Debug)]
pub struct ModulationSetup {
    pub cfg: MultiSolitonConfig,
    /// Unstable modes of each soliton's profile.
    pub modes: Vec<Vec<UnstableMode>>,
    pub spec: QuadratureSpec,
    pub max_condition: f64,
    pub smallness: f64,
}

impl ModulationSetup {
    pub fn new(cfg: MultiSolitonConfig, modes: Vec<Vec<UnstableMode>>, spec: QuadratureSpec) -> Result<Self, ModulationError> {
        if modes.len() != cfg.len() {
            return Err(ModulationError::Shape { expected: cfg.len(), found: modes.len() });
        }
        Ok(ModulationSetup { cfg, modes, spec, max_condition: DEFAULT_MAX_CONDITION, smallness: DEFAULT_SMALLNESS })
    }

    pub fn basis(&self, t: f64) -> Result<ModulationBasis, ModulationError> {
        ModulationBasis::new(self, t)
    }
}

/// Ground-state solitons of sign `+1` at the given speeds, restricted to the
/// sector of fields symmetric in `x₂, x₃` and odd-or-even in `x₄`.
///
/// Kernel directions are `Ω̃₄W` (the `ψ` slot), `ΛW` and `∂₁W`; the unstable
/// mode is the radial ground state of the linearized operator.
pub fn ground_state_setup(speeds: &[f64], spec: QuadratureSpec) -> Result<ModulationSetup, ModulationError> {
    let w = ground_state();
    let gen = |g| promote(apply_generator(w.clone(), g), Symmetry::Bicylindrical);
    let kernel = KernelSet {
        psi: apply_generator(w.clone(), Generator::Conformal(3)),
        phis: vec![gen(Generator::Dilation)?, gen(Generator::Translation(0))?],
    };
    let solitons = speeds
        .iter()
        .map(|&l| Ok(Soliton::new(w.clone(), 1.0, l)?.with_kernel(kernel.clone())))
        .collect::<Result<Vec<_>, ModulationError>>()?;
    let cfg = MultiSolitonConfig::new(solitons)?;
    let mode = radial_unstable_mode(&w, 30.0, 1500)?;
    ModulationSetup::new(cfg, vec![vec![mode]; speeds.len()], spec)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Energy,
    L2,
}

#[derive(Clone, Copy, Default)]
struct NodeValue {
    v1: f64,
    g1: Point4,
    v2: f64,
}

fn node_values(pairs: &[&FieldPair], x: &Point4, kind: Kind) -> Vec<NodeValue> {
    pairs
        .iter()
        .map(|p| NodeValue {
            v1: if kind == Kind::L2 { p.first.value(x) } else { 0.0 },
            g1: if kind == Kind::Energy { p.first.gradient(x) } else { [0.0; 4] },
            v2: p.second.value(x),
        })
        .collect()
}

fn pair(a: &NodeValue, b: &NodeValue, kind: Kind) -> f64 {
    match kind {
        Kind::Energy => a.g1.iter().zip(&b.g1).map(|(p, q)| p * q).sum::<f64>() + a.v2 * b.v2,
        Kind::L2 => a.v1 * b.v1 + a.v2 * b.v2,
    }
}

/// Pairing matrix `(rowsᵢ, colsⱼ)` on one quadrature rule.
fn pairing_matrix(rule: &Quadrature, rows: &[&FieldPair], cols: &[&FieldPair], kind: Kind) -> DMatrix<f64> {
    let (m, n) = (rows.len(), cols.len());
    let flat = rule.integrate_many(m * n, |x, out| {
        let r = node_values(rows, x, kind);
        let c = node_values(cols, x, kind);
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = pair(&r[i], &c[j], kind);
            }
        }
    });
    DMatrix::from_row_slice(m, n, &flat)
}

/// All directions of the ansatz frozen at time `t`, with their pairings.
#[derive(Clone, Debug)]
pub struct ModulationBasis {
    pub t: f64,
    pub speeds: Vec<f64>,
    pub centers: Vec<f64>,
    /// `Q⃗ₙ = (Qₙ, −ℓₙ∂₁Qₙ)`.
    pub solitons: Vec<FieldPair>,
    /// Kernel directions `Ψ⃗ₙ`, `Φ⃗ₙₖ` in coefficient order.
    pub kernel: Vec<(Slot, FieldPair)>,
    /// Exponential directions `(n, j)` centred on their soliton.
    pub exp: Vec<(usize, ExpDirection)>,
    pub psi: Vec<Option<Field>>,
    pub symmetry: Symmetry,
    pub spec: QuadratureSpec,
    /// Energy Gram matrix of the kernel directions.
    pub gram: DMatrix<f64>,
    pub condition: f64,
    /// `L²` pairings of kernel directions with `[Z⁺…, Z⁻…]`.
    pub kernel_z: DMatrix<f64>,
    /// Energy pairings of `Z⁺` with the kernel directions.
    pub zplus_kernel: DMatrix<f64>,
    /// `L²` pairings among the `Z⁺`.
    pub zplus_gram: DMatrix<f64>,
    rule: Quadrature,
    smallness: f64,
}

impl ModulationBasis {
    fn new(setup: &ModulationSetup, t: f64) -> Result<Self, ModulationError> {
        let cfg = &setup.cfg;
        cfg.frame(t)?;
        let speeds = cfg.speeds();
        let centers: Vec<f64> = speeds.iter().map(|l| l * t).collect();
        let mv = |p: FieldPair, c: f64| FieldPair::joined(shift_x1(p.first, c), shift_x1(p.second, c));
        let mut solitons = Vec::new();
        let mut kernel = Vec::new();
        let mut exp = Vec::new();
        let mut psi = Vec::new();
        let mut symmetry = Symmetry::Cylindrical;
        for (n, s) in cfg.solitons.iter().enumerate() {
            let c = centers[n];
            let q = mv(pair_vector(&s.profile, s.speed, s.sign), c);
            symmetry = symmetry.join(q.symmetry());
            solitons.push(q);
            match &s.kernel {
                Some(k) => {
                    let p = mv(pair_vector(&k.psi, s.speed, 1.0), c);
                    psi.push(Some(p.first.clone()));
                    kernel.push((Slot::Psi(n), p));
                    for (j, f) in k.phis.iter().enumerate() {
                        kernel.push((Slot::Phi(n, j), mv(pair_vector(f, s.speed, 1.0), c)));
                    }
                }
                None => psi.push(None),
            }
            for m in &setup.modes[n] {
                exp.push((n, exp_directions(m.spline.clone(), m.rate, s.speed)?.centred_at(c)));
            }
        }
        for (_, p) in &kernel {
            symmetry = symmetry.join(p.symmetry());
        }
        for (_, e) in &exp {
            symmetry = symmetry.join(e.z_plus.symmetry());
        }
        let mut unique = centers.clone();
        unique.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let spec = setup.spec.clone().with_centers(unique);
        let rule = Quadrature::new(symmetry, &spec)?;

        let dirs: Vec<&FieldPair> = kernel.iter().map(|(_, p)| p).collect();
        let zp: Vec<&FieldPair> = exp.iter().map(|(_, e)| &e.z_plus).collect();
        let zm: Vec<&FieldPair> = exp.iter().map(|(_, e)| &e.z_minus).collect();
        let (m, j) = (dirs.len(), zp.len());
        let rows: Vec<&FieldPair> = dirs.iter().chain(&zp).copied().collect();
        let energy = pairing_matrix(&rule, &rows, &dirs, Kind::Energy);
        let cols: Vec<&FieldPair> = zp.iter().chain(&zm).copied().collect();
        let l2 = pairing_matrix(&rule, &rows, &cols, Kind::L2);
        let mut gram = energy.rows(0, m).into_owned();
        gram = 0.5 * (&gram + gram.transpose());
        let condition = if m == 0 {
            1.0
        } else {
            let sv = gram.singular_values();
            sv.max() / sv.min()
        };
        if !(condition <= setup.max_condition) {
            return Err(ModulationError::IllConditioned(condition));
        }
        Ok(ModulationBasis {
            t,
            speeds,
            centers,
            solitons,
            kernel,
            exp,
            psi,
            symmetry,
            spec,
            gram,
            condition,
            kernel_z: l2.rows(0, m).into_owned(),
            zplus_kernel: energy.rows(m, j).into_owned(),
            zplus_gram: l2.view((m, 0), (j, j)).into_owned(),
            rule,
            smallness: setup.smallness,
        })
    }

    /// `ΣQ⃗ₙ`.
    pub fn sum(&self) -> FieldPair {
        let terms: Vec<(f64, FieldPair)> = self.solitons.iter().map(|q| (1.0, q.clone())).collect();
        FieldPair::combination(&terms)
    }

    fn rule_for(&self, data: Symmetry) -> Result<Quadrature, QuadError> {
        if self.symmetry.admits(data) {
            Ok(self.rule.clone())
        } else {
            Quadrature::new(self.symmetry.join(data), &self.spec)
        }
    }

    fn split(&self, coeffs: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.solitons.len();
        let mut a = vec![0.0; n];
        let mut b: Vec<Vec<f64>> = vec![Vec::new(); n];
        for ((slot, _), c) in self.kernel.iter().zip(coeffs) {
            match *slot {
                Slot::Psi(i) => a[i] = *c,
                Slot::Phi(i, _) => b[i].push(*c),
            }
        }
        (a, b)
    }

    fn group_z(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut z: Vec<Vec<f64>> = vec![Vec::new(); self.solitons.len()];
        for ((n, _), v) in self.exp.iter().zip(values) {
            z[*n].push(*v);
        }
        z
    }

    /// Decomposes a full state `u⃗`.
    pub fn decompose(&self, u: &FieldPair) -> Result<Decomposition, ModulationError> {
        let sum = self.sum();
        let dev = FieldPair::combination(&[(1.0, u.clone()), (-1.0, sum)]);
        self.decompose_deviation(&dev)
    }

    /// Decomposes a deviation `u⃗ − ΣQ⃗ₙ` given directly, e.g. from a grid
    /// snapshot that stores only the departure from the ansatz.
    pub fn decompose_deviation(&self, dev: &FieldPair) -> Result<Decomposition, ModulationError> {
        let rule = self.rule_for(dev.symmetry())?;
        let dirs: Vec<&FieldPair> = self.kernel.iter().map(|(_, p)| p).collect();
        let mut cols = dirs.clone();
        cols.push(dev);
        let energy = pairing_matrix(&rule, &[dev], &cols, Kind::Energy);
        let m = dirs.len();
        let rhs = DVector::from_iterator(m, energy.row(0).iter().take(m).copied());
        let dev_norm2 = energy[(0, m)];
        let dev_norm = dev_norm2.max(0.0).sqrt();
        if dev_norm >= self.smallness {
            return Err(ModulationError::NotClose { norm: dev_norm, bound: self.smallness });
        }
        let coeffs = self.solve(&rhs)?;
        let orthogonality = (&self.gram * &coeffs - &rhs).amax();
        let phi_norm = (dev_norm2 - coeffs.dot(&rhs)).max(0.0).sqrt();

        let zp: Vec<&FieldPair> = self.exp.iter().map(|(_, e)| &e.z_plus).collect();
        let zm: Vec<&FieldPair> = self.exp.iter().map(|(_, e)| &e.z_minus).collect();
        let zcols: Vec<&FieldPair> = zp.iter().chain(&zm).copied().collect();
        let dz = pairing_matrix(&rule, &[dev], &zcols, Kind::L2);
        let j = zp.len();
        let z: Vec<f64> = (0..2 * j).map(|c| dz[(0, c)] - (0..m).map(|i| coeffs[i] * self.kernel_z[(i, c)]).sum::<f64>()).collect();

        let mut terms = vec![(1.0, dev.clone())];
        terms.extend(self.kernel.iter().zip(coeffs.iter()).map(|((_, p), c)| (-c, p.clone())));
        let remainder = FieldPair::combination(&terms);
        let (a, b) = self.split(coeffs.as_slice());
        let state = ModulationState {
            t: self.t,
            a,
            b,
            z_plus: self.group_z(&z[..j]),
            z_minus: self.group_z(&z[j..]),
            c: None,
            phi_norm,
            deviation_norm: dev_norm,
            orthogonality,
            condition: self.condition,
        };
        Ok(Decomposition { state, remainder })
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, ModulationError> {
        if rhs.is_empty() {
            return Ok(DVector::zeros(0));
        }
        self.gram.clone().lu().solve(rhs).ok_or(ModulationError::IllConditioned(f64::INFINITY))
    }

    /// `z±ₙⱼ = (φ⃗, Z⃗±ₙⱼ)_{L²}` as `(z⁺, z⁻)`.
    pub fn compute_z(&self, phi: &FieldPair) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ModulationError> {
        let rule = self.rule_for(phi.symmetry())?;
        let zp: Vec<&FieldPair> = self.exp.iter().map(|(_, e)| &e.z_plus).collect();
        let zm: Vec<&FieldPair> = self.exp.iter().map(|(_, e)| &e.z_minus).collect();
        let cols: Vec<&FieldPair> = zp.iter().chain(&zm).copied().collect();
        let row = pairing_matrix(&rule, &[phi], &cols, Kind::L2);
        let v: Vec<f64> = row.iter().copied().collect();
        let j = zp.len();
        Ok((self.group_z(&v[..j]), self.group_z(&v[j..])))
    }

    /// Energy pairing `(p, q)_𝓗` on the basis rule.
    pub fn energy_pairing(&self, p: &FieldPair, q: &FieldPair) -> Result<f64, ModulationError> {
        let rule = self.rule_for(p.symmetry().join(q.symmetry()))?;
        Ok(pairing_matrix(&rule, &[p], &[q], Kind::Energy)[(0, 0)])
    }

    /// `L²` pairing `(p, q)` on the basis rule.
    pub fn l2_pairing(&self, p: &FieldPair, q: &FieldPair) -> Result<f64, ModulationError> {
        let rule = self.rule_for(p.symmetry().join(q.symmetry()))?;
        Ok(pairing_matrix(&rule, &[p], &[q], Kind::L2)[(0, 0)])
    }

    /// `cₙ = (φ₁, Ψₙξₙ)_{L²} / (σₙ log t)`.
    pub fn compute_c(&self, phi1: &dyn ScalarField, n: usize, sigma: f64) -> Result<f64, ModulationError> {
        if self.t <= 1.0 {
            return Err(ModulationError::EarlyTime(self.t));
        }
        let psi = self.psi[n].as_ref().ok_or(ModulationError::MissingKernel(n))?;
        let l = self.speeds[n];
        let p = localized_pairing(phi1, psi.as_ref(), l, self.t, sigma, &self.spec)?;
        Ok(p.value / (log_rate(l) * self.t.ln()))
    }

    /// Data `ΣQ⃗ₙ + φ⃗` whose modulation has `a = b = 0` and `z⁺ = z`.
    ///
    /// `φ⃗ = Σ z̃ Z⃗⁺ + Σ ã Ψ⃗ + Σ b̃ Φ⃗` is fixed by energy orthogonality to
    /// the kernel directions and the prescribed `L²` pairings with `Z⃗⁺`.
    pub fn build_initial_data(&self, z: &[Vec<f64>]) -> Result<InitialData, ModulationError> {
        let flat: Vec<f64> = z.iter().flatten().copied().collect();
        let j = self.exp.len();
        if flat.len() != j {
            return Err(ModulationError::Shape { expected: j, found: flat.len() });
        }
        let norm = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = self.t.powf(-3.5);
        if norm > bound * (1.0 + 1e-12) {
            return Err(ModulationError::AmplitudeTooLarge { norm, bound });
        }
        let m = self.kernel.len();
        let mut sys = DMatrix::zeros(m + j, j + m);
        for i in 0..m {
            for c in 0..j {
                sys[(i, c)] = self.zplus_kernel[(c, i)];
            }
            for k in 0..m {
                sys[(i, j + k)] = self.gram[(k, i)];
            }
        }
        for l in 0..j {
            for c in 0..j {
                sys[(m + l, c)] = self.zplus_gram[(c, l)];
            }
            for k in 0..m {
                sys[(m + l, j + k)] = self.kernel_z[(k, l)];
            }
        }
        let mut rhs = DVector::zeros(m + j);
        for (l, v) in flat.iter().enumerate() {
            rhs[m + l] = *v;
        }
        let x = sys.lu().solve(&rhs).ok_or(ModulationError::IllConditioned(f64::INFINITY))?;
        let z_coeff: Vec<f64> = x.iter().take(j).copied().collect();
        let k_coeff: Vec<f64> = x.iter().skip(j).copied().collect();
        let mut terms: Vec<(f64, FieldPair)> =
            self.exp.iter().zip(&z_coeff).map(|((_, e), c)| (*c, e.z_plus.clone())).collect();
        terms.extend(self.kernel.iter().zip(&k_coeff).map(|((_, p), c)| (*c, p.clone())));
        let phi = if terms.is_empty() {
            FieldPair::combination(&[(0.0, self.solitons[0].clone())])
        } else {
            FieldPair::combination(&terms)
        };
        let state = FieldPair::combination(&[(1.0, self.sum()), (1.0, phi.clone())]);
        let (a, b) = self.split(&k_coeff);
        let size = x.iter().map(|v| v.abs()).sum::<f64>();
        Ok(InitialData { state, phi, z_coeff: self.group_z(&z_coeff), a, b, constant: size / bound })
    }
}

/// Modulation parameters of one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationState {
    pub t: f64,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub z_plus: Vec<Vec<f64>>,
    pub z_minus: Vec<Vec<f64>>,
    /// Localized averages `cₙ`, when computed.
    pub c: Option<Vec<f64>>,
    /// `‖φ⃗‖_𝓗` of the remainder.
    pub phi_norm: f64,
    /// `‖u⃗ − ΣQ⃗ₙ‖_𝓗`.
    pub deviation_norm: f64,
    /// Largest energy pairing of the remainder with a kernel direction.
    pub orthogonality: f64,
    pub condition: f64,
}

impl ModulationState {
    pub fn a_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn b_norm(&self) -> f64 {
        self.b.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub state: ModulationState,
    pub remainder: FieldPair,
}

/// Output of [`ModulationBasis::build_initial_data`].
#[derive(Clone, Debug)]
pub struct InitialData {
    pub state: FieldPair,
    pub phi: FieldPair,
    /// Coefficients of `Z⃗⁺` in `φ⃗`.
    pub z_coeff: Vec<Vec<f64>>,
    /// Coefficients of `Ψ⃗` in `φ⃗`.
    pub a: Vec<f64>,
    /// Coefficients of `Φ⃗` in `φ⃗`.
    pub b: Vec<Vec<f64>>,
    /// `(|Z̃| + |Ã| + |B̃|) T^{7/2}`.
    pub constant: f64,
}

/// Second-order central differences at interior samples of a uniform grid.
pub fn central_difference(times: &[f64], values: &[f64]) -> Result<Vec<f64>, ModulationError> {
    if times.len() < 3 || values.len() != times.len() {
        return Err(ModulationError::ShortTrajectory);
    }
    let dt = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) || dt <= 0.0 {
        return Err(ModulationError::ShortTrajectory);
    }
    Ok(values.windows(3).map(|w| (w[2] - w[0]) / (2.0 * dt)).collect())
}

/// Time derivatives of the parameters compared with their majorants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    pub a_dot: f64,
    pub b_dot: f64,
    /// `‖φ⃗‖_𝓗 + |a|² + |b|² + t⁻⁴`.
    pub majorant: f64,
    pub ratio: f64,
    /// `|ȧₙ + ċₙ|` divided by `‖φ⃗‖_𝓗 log^{-1/2} t + |a|² + |b|² + t⁻⁴`.
    pub refined: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    pub max_ratio: f64,
    pub max_refined: Option<f64>,
}

fn guarded(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn modulation_residuals(trajectory: &[ModulationState]) -> Result<ResidualTable, ModulationError> {
    let times: Vec<f64> = trajectory.iter().map(|s| s.t).collect();
    let n = trajectory.first().map_or(0, |s| s.a.len());
    let series = |f: &dyn Fn(&ModulationState) -> f64| -> Result<Vec<f64>, ModulationError> {
        central_difference(&times, &trajectory.iter().map(f).collect::<Vec<_>>())
    };
    let mut a_dot = vec![vec![0.0; times.len() - 2.min(times.len())]; n];
    for (i, row) in a_dot.iter_mut().enumerate() {
        *row = series(&|s| s.a[i])?;
    }
    let kb: Vec<usize> = trajectory[0].b.iter().map(|b| b.len()).collect();
    let mut b_dot_sq = vec![0.0; times.len().saturating_sub(2)];
    for (i, &k) in kb.iter().enumerate() {
        for j in 0..k {
            for (acc, d) in b_dot_sq.iter_mut().zip(series(&|s| s.b[i][j])?) {
                *acc += d * d;
            }
        }
    }
    let c_dot: Option<Vec<Vec<f64>>> = if trajectory.iter().all(|s| s.c.is_some()) {
        Some((0..n).map(|i| series(&|s| s.c.as_ref().expect("checked")[i])).collect::<Result<_, _>>()?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for k in 1..times.len() - 1 {
        let s = &trajectory[k];
        let t = s.t;
        let ad = (0..n).map(|i| a_dot[i][k - 1].powi(2)).sum::<f64>().sqrt();
        let bd = b_dot_sq[k - 1].sqrt();
        let small = s.a_norm().powi(2) + s.b_norm().powi(2) + t.powi(-4);
        let majorant = s.phi_norm + small;
        let refined = c_dot.as_ref().map(|cd| {
            let m = s.phi_norm / t.ln().max(f64::MIN_POSITIVE).sqrt() + small;
            (0..n).map(|i| guarded((a_dot[i][k - 1] + cd[i][k - 1]).abs(), m)).collect()
        });
        rows.push(ResidualRow { t, a_dot: ad, b_dot: bd, majorant, ratio: guarded(ad + bd, majorant), refined });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_refined = rows
        .iter()
        .map(|r| r.refined.as_ref().map(|v| v.iter().copied().fold(0.0, f64::max)))
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max));
    Ok(ResidualTable { rows, max_ratio, max_refined })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> ModulationSetup {
        let mut spec = QuadratureSpec::coarse();
        spec.r_max = 60.0;
        spec.angular_nodes = 8;
        ground_state_setup(&[-0.5, 0.5], spec).unwrap()
    }

    #[test]
    fn exact_sum_has_zero_parameters() {
        let basis = setup().basis(20.0).unwrap();
        let d = basis.decompose(&basis.sum()).unwrap();
        assert!(d.state.a_norm() < 1e-14 && d.state.b_norm() < 1e-14 && d.state.phi_norm < 1e-12);
        assert!(d.state.z_plus.iter().flatten().all(|z| z.abs() < 1e-14));
    }

    #[test]
    fn recovers_kernel_coefficient() {
        let basis = setup().basis(20.0).unwrap();
        let u = FieldPair::combination(&[(1.0, basis.sum()), (0.004, basis.kernel[0].1.clone())]);
        let d = basis.decompose(&u).unwrap();
        assert!((d.state.a[0] - 0.004).abs() < 1e-10, "{:?}", d.state.a);
        assert!(d.state.phi_norm < 1e-6);
    }

    #[test]
    fn build_then_decompose_round_trip() {
        let basis = setup().basis(20.0).unwrap();
        let amp = 0.5 * 20f64.powf(-3.5);
        let z = vec![vec![amp], vec![-0.5 * amp]];
        let built = basis.build_initial_data(&z).unwrap();
        let d = basis.decompose(&built.state).unwrap();
        let scale = amp;
        assert!(d.state.a.iter().chain(d.state.b.iter().flatten()).all(|v| v.abs() < 1e-8 * scale));
        for (got, want) in d.state.z_plus.iter().flatten().zip(z.iter().flatten()) {
            assert!((got - want).abs() < 1e-8 * scale, "{got} vs {want}");
        }
        let zero = basis.build_initial_data(&[vec![0.0], vec![0.0]]).unwrap();
        assert!(zero.constant == 0.0);
        assert!(basis.build_initial_data(&[vec![1.0], vec![0.0]]).is_err());
    }

    #[test]
    fn differencer_is_second_order() {
        let err = |dt: f64| {
            let ts: Vec<f64> = (0..3).map(|k| 10.0 + dt * k as f64).collect();
            let v: Vec<f64> = ts.iter().map(|t| t.powi(-2)).collect();
            (central_difference(&ts, &v).unwrap()[0] + 2.0 * (10.0 + dt).powi(-3)).abs()
        };
        let order = (err(0.2) / err(0.1)).log2();
        assert!((order - 2.0).abs() < 0.1, "{order}");
        assert!(central_difference(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }
}
