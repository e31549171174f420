//! Verification studies that combine several modules: stationary profiles,
//! kernel generators, the unstable spectrum and the exponential directions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, fd::StencilOrder, Field, FieldError, FieldPair, FnField, Point4, Symmetry};
use crate::fit::observed_orders;
use crate::lorentz::{apply_h, exp_directions, pair_vector, LorentzError, Speed};
use crate::modulation::{ModulationError, ModulationSetup};
use crate::norms::NormError;
use crate::quadrature::{FullScheme, QuadError, Quadrature, QuadratureSpec};
use crate::spectrum::{decay_rate, negative_spectrum, radial_unstable_mode, Sector, SpectrumError, UnstableMode};
use crate::states::{apply_generator, check_decay, dilate, kelvin, linearized_residual, DecayFit, Generator, StateError};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("refinement ladder needs at least two steps")]
    ShortLadder,
    #[error("no negative eigenvalue found")]
    NoUnstableMode,
    #[error("shooting bracket [{0}, {1}] does not isolate a decaying solution")]
    ShootingBracket(f64, f64),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
}

/// Norms below this are treated as exact zeros polluted by rounding.
pub const ROUNDING_FLOOR: f64 = 1e-10;

/// Norms measured along a sequence of halved steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub steps: Vec<f64>,
    pub norms: Vec<f64>,
    pub orders: Vec<f64>,
}

impl Ladder {
    fn new(steps: Vec<f64>, norms: Vec<f64>) -> Self {
        let orders = observed_orders(&norms);
        Ladder { steps, norms, orders }
    }

    /// Smallest observed order, `+∞` when every norm vanishes.
    pub fn min_order(&self) -> f64 {
        if self.identically_zero() {
            return f64::INFINITY;
        }
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Every norm is at rounding level, as for generators that annihilate the profile.
    pub fn identically_zero(&self) -> bool {
        self.norms.iter().all(|&n| n <= ROUNDING_FLOOR)
    }
}

fn halving(h0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| h0 / 2f64.powi(k as i32)).collect()
}

/// `‖−ΔQ − Q³‖` with the three-point radial stencil, on nodes `r = kh ≤ r_max`
/// weighted by the volume of `S³`.
pub fn radial_residual_ladder(profile: &Field, r_max: f64, h0: f64, levels: usize) -> Result<Ladder, SuiteError> {
    if levels < 2 {
        return Err(SuiteError::ShortLadder);
    }
    let q = |r: f64| profile.value(&[r, 0.0, 0.0, 0.0]);
    let steps = halving(h0, levels);
    let norms = steps
        .iter()
        .map(|&h| {
            let n = (r_max / h).round() as usize;
            let sum: f64 = (1..=n)
                .map(|k| {
                    let r = k as f64 * h;
                    let (m, c, p) = (q(r - h), q(r), q(r + h));
                    let lap = (p - 2.0 * c + m) / (h * h) + 3.0 / r * (p - m) / (2.0 * h);
                    let res = -lap - c * c * c;
                    res * res * r.powi(3)
                })
                .sum();
            (2.0 * std::f64::consts::PI.powi(2) * h * sum).sqrt()
        })
        .collect();
    Ok(Ladder::new(steps, norms))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KelvinCheck {
    pub points: usize,
    pub max_error: f64,
    pub worst: Point4,
}

/// Compares `K Q` with `λ Q(λ·)` at random points of the box `[-box, box]⁴`.
pub fn kelvin_check(profile: &Field, scale: f64, points: usize, half_width: f64, seed: u64) -> Result<KelvinCheck, SuiteError> {
    let k = kelvin(profile.clone())?;
    let d = dilate(profile.clone(), scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = KelvinCheck { points, max_error: 0.0, worst: [0.0; 4] };
    for _ in 0..points {
        let x: Point4 = std::array::from_fn(|_| rng.gen_range(-half_width..half_width));
        let err = (k.value(&x) - d.value(&x)).abs();
        if err > out.max_error {
            out.max_error = err;
            out.worst = x;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub label: String,
    pub expected: f64,
    pub fit: DecayFit,
}

impl DecayRow {
    pub fn passes(&self, tol: f64) -> bool {
        self.fit.matches(self.expected, tol)
    }
}

/// Power-law decay fits of labelled fields over `[r0, 100 r0]`.
pub fn decay_table(fields: &[(String, Field, f64)], r0: f64) -> Result<Vec<DecayRow>, SuiteError> {
    let radii = crate::fit::geometric(r0, 10f64.powf(0.25), 9);
    fields
        .iter()
        .map(|(label, f, p)| {
            Ok(DecayRow { label: label.clone(), expected: *p, fit: check_decay(f.as_ref(), &radii)? })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResidual {
    pub generator: String,
    pub ladder: Ladder,
}

/// `‖𝓛_Q g‖_{L²(B_R)}` for each generator, with the second-order four-dimensional
/// Laplacian stencil at each step of the ladder.
pub fn generator_residuals(
    profile: &Field,
    generators: &[Generator],
    ball: f64,
    h0: f64,
    levels: usize,
) -> Result<Vec<GeneratorResidual>, SuiteError> {
    if levels < 2 {
        return Err(SuiteError::ShortLadder);
    }
    let spec = QuadratureSpec {
        r_max: ball,
        full: FullScheme::Hyperspherical,
        angular_nodes: 8,
        min_panel: 0.5,
        growth: 1.0,
        ..QuadratureSpec::default()
    };
    let quad = Quadrature::new(Symmetry::Full, &spec)?;
    let steps = halving(h0, levels);
    generators
        .iter()
        .map(|&g| {
            let field = apply_generator(profile.clone(), g);
            let norms = steps
                .iter()
                .map(|&h| {
                    quad.integrate(|x| {
                        let r = linearized_residual(profile.as_ref(), field.as_ref(), x, h, StencilOrder::Second);
                        r * r
                    })
                    .max(0.0)
                    .sqrt()
                })
                .collect();
            Ok(GeneratorResidual { generator: g.to_string(), ladder: Ladder::new(steps.clone(), norms) })
        })
        .collect()
}

/// `(f₁f₂f₃, Q)_{L²}` together with `∫|f₁f₂f₃Q|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cancellation {
    pub value: f64,
    pub scale: f64,
}

impl Cancellation {
    pub fn ratio(&self) -> f64 {
        if self.scale > 0.0 {
            self.value.abs() / self.scale
        } else {
            0.0
        }
    }
}

pub fn cancellation_spec() -> QuadratureSpec {
    QuadratureSpec { full: FullScheme::Hyperspherical, angular_nodes: 12, r_max: 400.0, ..QuadratureSpec::default() }
}

pub fn verify_cancellation(f1: &Field, f2: &Field, f3: &Field, q: &Field, spec: &QuadratureSpec) -> Result<Cancellation, SuiteError> {
    let quad = Quadrature::new(Symmetry::Full, spec)?;
    let out = quad.integrate_many(2, |x, out| {
        let v = f1.value(x) * f2.value(x) * f3.value(x) * q.value(x);
        out[0] = v;
        out[1] = v.abs();
    });
    Ok(Cancellation { value: out[0], scale: out[1] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancellationStudy {
    pub samples: Vec<Cancellation>,
    pub worst_ratio: f64,
    /// Third factor replaced by a bump that is not in the kernel.
    pub control: Cancellation,
}

fn random_kernel_field(profile: &Field, rng: &mut ChaCha8Rng) -> Field {
    let terms = Generator::all()
        .into_iter()
        .map(|g| (rng.gen_range(-1.0..1.0), promote_full(apply_generator(profile.clone(), g))))
        .collect();
    field::combination(terms)
}

fn promote_full(f: Field) -> Field {
    field::promote(f, Symmetry::Full).expect("every tag promotes to full")
}

pub fn cancellation_study(profile: &Field, triples: usize, seed: u64, spec: &QuadratureSpec) -> Result<CancellationStudy, SuiteError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(triples);
    let mut last = None;
    for _ in 0..triples {
        let f: Vec<Field> = (0..3).map(|_| random_kernel_field(profile, &mut rng)).collect();
        samples.push(verify_cancellation(&f[0], &f[1], &f[2], profile, spec)?);
        last = Some(f);
    }
    let bump: Field = FnField::new("bump", Symmetry::Full, |x| {
        let d = [x[0] - 0.7, x[1] + 0.3, x[2], x[3] - 0.5];
        (-field::dot4(&d, &d)).exp()
    })
    .into_field();
    let control = match last {
        Some(f) => verify_cancellation(&f[0], &f[1], &bump, profile, spec)?,
        None => {
            let g = promote_full(apply_generator(profile.clone(), Generator::Dilation));
            verify_cancellation(&g, &g, &bump, profile, spec)?
        }
    };
    let worst_ratio = samples.iter().map(Cancellation::ratio).fold(0.0, f64::max);
    Ok(CancellationStudy { samples, worst_ratio, control })
}

/// Radial eigenvalue problem summary for one profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSuite {
    pub r_max: f64,
    pub cells: usize,
    /// Lowest eigenvalues of the radial operator.
    pub eigenvalues: Vec<f64>,
    pub negative_count: usize,
    pub rate: f64,
    /// Fitted exponential decay rate of the unstable mode.
    pub decay_rate: f64,
    pub decay_window: (f64, f64),
    /// `(cells, rate)` under grid refinement.
    pub refinement: Vec<(usize, f64)>,
}

impl SpectralSuite {
    pub fn decay_error(&self) -> f64 {
        (self.decay_rate / self.rate - 1.0).abs()
    }
}

pub fn spectral_suite(profile: &Field, r_max: f64, cells: usize) -> Result<SpectralSuite, SuiteError> {
    let res = negative_spectrum(profile, Sector::Radial { r_max, cells }, 4)?;
    let eigenvalues: Vec<f64> = res.modes.iter().map(|m| m.eigenvalue).collect();
    let negative_count = res.negative().count();
    let mode = res.modes.first().filter(|m| m.eigenvalue < 0.0).ok_or(SuiteError::NoUnstableMode)?;
    let rate = mode.rate();
    let window = (0.2 * r_max, 0.6 * r_max);
    let fitted = decay_rate(mode, window.0, window.1);
    let refinement = [cells / 4, cells / 2, cells]
        .iter()
        .map(|&c| Ok((c, radial_unstable_mode(profile, r_max, c)?.rate)))
        .collect::<Result<Vec<_>, SuiteError>>()?;
    Ok(SpectralSuite { r_max, cells, eigenvalues, negative_count, rate, decay_rate: fitted, decay_window: window, refinement })
}

/// Rate `λ` of the decaying solution of `−Y'' − (3/r)Y' − 3Q²Y = −λ²Y`,
/// found by counting sign changes of the regular solution and bisecting.
pub fn shooting_rate(profile: &Field, r_max: f64, bracket: (f64, f64), tol: f64) -> Result<f64, SuiteError> {
    let q2 = |r: f64| profile.value(&[r, 0.0, 0.0, 0.0]).powi(2);
    // True when the regular solution changes sign before blowing up, i.e. λ too small.
    let crosses = |lam: f64| {
        let rhs = |r: f64, y: [f64; 2]| [y[1], -3.0 / r * y[1] + (lam * lam - 3.0 * q2(r)) * y[0]];
        let r0 = 1e-4;
        let c = lam * lam - 3.0 * q2(0.0);
        let mut y = [1.0 + c * r0 * r0 / 8.0, c * r0 / 4.0];
        let h = 2e-3;
        let mut r = r0;
        while r < r_max {
            let k1 = rhs(r, y);
            let k2 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            r += h;
            if y[0] < 0.0 {
                return true;
            }
            if y[0] > 1e12 {
                return false;
            }
        }
        y[1] < 0.0
    };
    let (mut lo, mut hi) = bracket;
    if !crosses(lo) || crosses(hi) {
        return Err(SuiteError::ShootingBracket(lo, hi));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if crosses(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Identities of the exponential directions at one speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpIdentityRow {
    pub speed: f64,
    pub alpha: f64,
    /// `‖H_ℓΥ⁺ − Z⁺‖ / ‖Z⁺‖`.
    pub plus_residual: f64,
    /// `‖H_ℓΥ⁻ − Z⁻‖ / ‖Z⁻‖`.
    pub minus_residual: f64,
    /// `(label, pairing, integrand scale)` for each kernel pair against `Z⁺` and `Z⁻`.
    pub pairings: Vec<(String, Cancellation)>,
}

impl ExpIdentityRow {
    pub fn worst_pairing(&self) -> f64 {
        self.pairings.iter().map(|(_, c)| c.ratio()).fold(0.0, f64::max)
    }
}

/// `∫ p·q` and `∫ |p₁q₁| + |p₂q₂|` on one tensor rule for the joined tag.
fn pair_cancellation(p: &FieldPair, q: &FieldPair, spec: &QuadratureSpec) -> Result<Cancellation, SuiteError> {
    let quad = Quadrature::new(p.symmetry().join(q.symmetry()), spec)?;
    let out = quad.integrate_many(2, |x, out| {
        let (a, b) = (p.first.value(x) * q.first.value(x), p.second.value(x) * q.second.value(x));
        out[0] = a + b;
        out[1] = a.abs() + b.abs();
    });
    Ok(Cancellation { value: out[0], scale: out[1] })
}

fn pair_l2_norm(p: &FieldPair, spec: &QuadratureSpec) -> Result<f64, SuiteError> {
    Ok(pair_cancellation(p, p, spec)?.value.max(0.0).sqrt())
}

/// `H_ℓΥ± = Z±` and the `L²` orthogonality of the boosted kernel pairs to `Z±`.
///
/// `kernel` lists the unboosted kernel fields; `fd_step` is the width of the
/// fourth-order Laplacian stencil inside `H_ℓ`.
pub fn exp_identities(
    profile: &Field,
    mode: &UnstableMode,
    speeds: &[f64],
    kernel: &[(String, Field)],
    fd_step: f64,
    spec: &QuadratureSpec,
) -> Result<Vec<ExpIdentityRow>, SuiteError> {
    speeds
        .iter()
        .map(|&l| {
            let speed = Speed::new(l)?;
            let dirs = exp_directions(Arc::clone(&mode.spline), mode.rate, speed)?;
            let residual = |ups: &FieldPair, z: &FieldPair| -> Result<f64, SuiteError> {
                let h = apply_h(ups, speed, profile, fd_step);
                let diff = FieldPair::combination(&[(1.0, h), (-1.0, z.clone())]);
                Ok(pair_l2_norm(&diff, spec)? / pair_l2_norm(z, spec)?)
            };
            let plus_residual = residual(&dirs.upsilon_plus, &dirs.z_plus)?;
            let minus_residual = residual(&dirs.upsilon_minus, &dirs.z_minus)?;
            let mut pairings = Vec::new();
            for (name, f) in kernel {
                let kp = pair_vector(f, speed, 1.0);
                for (tag, z) in [("+", &dirs.z_plus), ("-", &dirs.z_minus)] {
                    pairings.push((format!("({name}, Z{tag})"), pair_cancellation(&kp, z, spec)?));
                }
            }
            Ok(ExpIdentityRow { speed: l, alpha: dirs.alpha(), plus_residual, minus_residual, pairings })
        })
        .collect()
}

/// `(|Z̃| + |Ã| + |B̃|) T^{7/2}` for prescribed unstable data of size `fraction · T^{−7/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataConstants {
    pub times: Vec<f64>,
    pub constants: Vec<f64>,
    /// Largest relative error of the recovered `z⁺` over all times.
    pub round_trip: f64,
    /// Largest `|a| + |b|` recovered, relative to the prescribed amplitude.
    pub kernel_leak: f64,
}

impl InitialDataConstants {
    /// `max C / min C`.
    pub fn spread(&self) -> f64 {
        let max = self.constants.iter().copied().fold(0.0, f64::max);
        let min = self.constants.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

pub fn initial_data_constants(setup: &ModulationSetup, times: &[f64], fraction: f64) -> Result<InitialDataConstants, SuiteError> {
    let mut out = InitialDataConstants { times: times.to_vec(), constants: Vec::new(), round_trip: 0.0, kernel_leak: 0.0 };
    for &t in times {
        let basis = setup.basis(t)?;
        let amp = fraction * t.powf(-3.5);
        let n = basis.exp.len();
        // Alternating signs, normalized so the prescribed vector has norm `amp`.
        let z: Vec<Vec<f64>> = (0..n).map(|k| vec![amp * (-0.5f64).powi(k as i32)]).collect();
        let norm = z.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let z: Vec<Vec<f64>> = z.iter().map(|v| v.iter().map(|c| c * amp / norm).collect()).collect();
        let built = basis.build_initial_data(&z)?;
        let d = basis.decompose(&built.state)?;
        for (got, want) in d.state.z_plus.iter().flatten().zip(z.iter().flatten()) {
            out.round_trip = out.round_trip.max((got - want).abs() / want.abs());
        }
        let leak = d.state.a.iter().chain(d.state.b.iter().flatten()).map(|v| v.abs()).sum::<f64>();
        out.kernel_leak = out.kernel_leak.max(leak / amp);
        out.constants.push(built.constant);
    }
    Ok(out)
}

/// Allowed `‖H_ℓΥ± − Z±‖/‖Z±‖`: the `O(h²)` error of the sampled mode plus the
/// `O(s⁴)` error of the Laplacian stencil of width `s`, each with constant 10.
pub fn exp_residual_tolerance(mode_step: f64, fd_step: f64) -> f64 {
    10.0 * mode_step.powi(2) + 10.0 * fd_step.powi(4)
}
