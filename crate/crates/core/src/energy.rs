//! Energy functionals of the remainder, localized norms and coercivity probes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, Field, FieldPair, FnField, Point4, ScalarField, Symmetry};
use crate::fit::{power_fit, FitError, PowerFit};
use crate::interaction::{InteractionError, MultiSolitonConfig};
use crate::lorentz::{boost, exp_directions, pair_vector, LorentzError, Speed};
use crate::quadrature::{integrate_with_decay, Quadrature, QuadError, QuadratureSpec};
use crate::spectrum::UnstableMode;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("speeds must be strictly increasing inside (-1, 1): {0:?}")]
    BadSpeeds(Vec<f64>),
    #[error("weight exponent must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("time must be positive, got {0}")]
    BadTime(f64),
    #[error("projection system is singular")]
    SingularProjection,
    #[error("kernel directions are linearly dependent in the energy norm (smallest normalized Gram eigenvalue {0:.3e})")]
    DependentKernel(f64),
    #[error("projected form negative on sample {index}: ratio {ratio:.3e}")]
    NotCoercive { index: usize, ratio: f64 },
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Piecewise-linear interpolation of the soliton speeds in `x₁/t`.
///
/// The plateau around soliton `n` is `[ℓ̲ₙ t, ℓ̄ₙ t]` and consecutive
/// plateaus are joined by ramps of slope `1/((1−2δ)t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedCutoff {
    pub speeds: Vec<f64>,
    pub delta: f64,
    /// `ℓ̄ₙ = ℓₙ + δ(ℓₙ₊₁ − ℓₙ)`, `n < N`.
    pub upper: Vec<f64>,
    /// `ℓ̲ₙ₊₁ = ℓₙ₊₁ − δ(ℓₙ₊₁ − ℓₙ)`, `n < N`.
    pub lower: Vec<f64>,
}

impl SpeedCutoff {
    pub fn new(speeds: &[f64]) -> Result<Self, EnergyError> {
        if speeds.is_empty() || speeds.windows(2).any(|w| w[1] <= w[0]) || speeds.iter().any(|l| l.abs() >= 1.0) {
            return Err(EnergyError::BadSpeeds(speeds.to_vec()));
        }
        let bar = speeds.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let gap = speeds.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let delta = if speeds.len() > 1 { (1.0 - bar) * gap / 40.0 } else { 0.0 };
        let upper = speeds.windows(2).map(|w| w[0] + delta * (w[1] - w[0])).collect();
        let lower = speeds.windows(2).map(|w| w[1] - delta * (w[1] - w[0])).collect();
        Ok(SpeedCutoff { speeds: speeds.to_vec(), delta, upper, lower })
    }

    /// `ℓ̄ = max(|ℓ₁|, |ℓ_N|)`.
    pub fn bar(&self) -> f64 {
        self.speeds[0].abs().max(self.speeds[self.speeds.len() - 1].abs())
    }

    pub fn value(&self, t: f64, x1: f64) -> f64 {
        let s = x1 / t;
        for n in 0..self.upper.len() {
            if s <= self.upper[n] {
                return self.speeds[n];
            }
            if s < self.lower[n] {
                let (a, b) = (self.speeds[n], self.speeds[n + 1]);
                return x1 / ((1.0 - 2.0 * self.delta) * t) - self.delta / (1.0 - 2.0 * self.delta) * (a + b);
            }
        }
        self.speeds[self.speeds.len() - 1]
    }

    /// `∂ₓ₁χ`: `1/((1−2δ)t)` on the ramps, zero on the plateaus.
    pub fn slope(&self, t: f64, x1: f64) -> f64 {
        if self.in_ramps(t, x1) {
            1.0 / ((1.0 - 2.0 * self.delta) * t)
        } else {
            0.0
        }
    }

    /// The ramps `(ℓ̄ₙt, ℓ̲ₙ₊₁t)` whose union times R³ is `Ω(t)`.
    pub fn slabs(&self, t: f64) -> Vec<(f64, f64)> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| (u * t, l * t)).collect()
    }

    pub fn in_ramps(&self, t: f64, x1: f64) -> bool {
        self.slabs(t).iter().any(|(a, b)| x1 > *a && x1 < *b)
    }
}

/// `ζ(x) = ⟨x − c e₁⟩^{−γ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightZeta {
    pub gamma: f64,
}

impl WeightZeta {
    pub fn new(gamma: f64) -> Result<Self, EnergyError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EnergyError::BadGamma(gamma));
        }
        Ok(WeightZeta { gamma })
    }

    fn bracket(x: &Point4, c: f64) -> f64 {
        1.0 + (x[0] - c).powi(2) + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]
    }

    pub fn value(&self, x: &Point4, c: f64) -> f64 {
        Self::bracket(x, c).powf(-0.5 * self.gamma)
    }

    /// `∇ζ = −γ (x − c e₁) ζ / ⟨x − c e₁⟩²`.
    pub fn gradient(&self, x: &Point4, c: f64) -> Point4 {
        let b = Self::bracket(x, c);
        let z = b.powf(-0.5 * self.gamma);
        let y = [x[0] - c, x[1], x[2], x[3]];
        y.map(|v| -self.gamma * v * z / b)
    }

    /// `Δζ = −γ((2−γ)|y|² + 4) ζ / ⟨y⟩⁴`.
    pub fn laplacian(&self, x: &Point4, c: f64) -> f64 {
        let b = Self::bracket(x, c);
        let z = b.powf(-0.5 * self.gamma);
        -self.gamma * ((2.0 - self.gamma) * (b - 1.0) + 4.0) * z / (b * b)
    }
}

fn decay_of(f: &dyn ScalarField) -> Option<f64> {
    f.decay()
}

/// `(E, P₁)` with `E = ½∫(|∇u|² + v² − ¼u⁴)` and `P = ∫ v ∇u`.
pub fn conserved_ep(u: &FieldPair, spec: &QuadratureSpec) -> Result<(f64, f64), EnergyError> {
    let sym = u.symmetry();
    let (a, b) = (&u.first, &u.second);
    let decay = match (decay_of(a.as_ref()), decay_of(b.as_ref())) {
        (Some(p), Some(q)) => Some((2.0 * p + 2.0).min(2.0 * q).min(4.0 * p)),
        _ => None,
    };
    let e = integrate_with_decay(
        &|x| {
            let g = a.gradient(x);
            let (uv, vv) = (a.value(x), b.value(x));
            0.5 * (field::dot4(&g, &g) + vv * vv - 0.25 * uv.powi(4))
        },
        sym,
        decay,
        spec,
    )?;
    let p = integrate_with_decay(&|x| b.value(x) * a.gradient(x)[0], sym, decay, spec)?;
    Ok((e.value, p.value))
}

/// The flow invariant `½∫(|∇u|² + v²) − ¼∫u⁴` on a quadrature rule.
pub fn hamiltonian_energy(u: &FieldPair, spec: &QuadratureSpec) -> Result<f64, EnergyError> {
    let rule = Quadrature::new(u.symmetry(), spec)?;
    Ok(rule.integrate(|x| {
        let g = u.first.gradient(x);
        let (uv, vv) = (u.first.value(x), u.second.value(x));
        0.5 * (field::dot4(&g, &g) + vv * vv) - 0.25 * uv.powi(4)
    }))
}

/// Functionals of a decomposed state at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e: f64,
    pub p: f64,
    pub g: f64,
    pub j: Vec<f64>,
    pub j_total: f64,
    /// `𝓔 + 𝓟 + 𝓖 + 𝓙` from the parts.
    pub k: f64,
    /// The same sum accumulated node by node.
    pub k_single_pass: f64,
    pub n_omega: f64,
    pub n_omega_c: f64,
    /// `∫_Ω (|∇φ₁|² + φ₂²)`, the lower-bound side of the `𝓝_Ω` estimate.
    pub omega_plain: f64,
}

/// `𝓔, 𝓟, 𝓖, 𝓙ₙ, 𝒦` and the localized norms for the remainder `φ⃗` of a
/// state modulated around `cfg` (which carries `a`, `b`) at time `t`.
pub fn energy_report(phi: &FieldPair, cfg: &MultiSolitonConfig, t: f64, spec: &QuadratureSpec) -> Result<EnergyReport, EnergyError> {
    let frame = cfg.frame(t)?;
    let cutoff = SpeedCutoff::new(&cfg.speeds())?;
    let slabs = cutoff.slabs(t);
    let breaks: Vec<f64> = slabs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let sym = frame.symmetry.join(phi.symmetry());
    let mut centers = frame.centers.clone();
    centers.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let rule = Quadrature::with_breaks(sym, &spec.clone().with_centers(centers), &breaks)?;
    let n = cfg.len();
    let speeds = cfg.speeds();
    let dpsi: Vec<Option<Field>> = frame.psi.iter().map(|p| p.clone().map(|f| crate::lorentz::partial(f, 0))).collect();
    let a = cfg.a.clone();
    // Outputs: E, P, G, K, NΩ, NΩᶜ, plain, J₁..J_N.
    let out = rule.integrate_many(7 + n, |x, out| {
        let (q, s) = frame.local(x);
        let total: f64 = q.iter().chain(&s).sum();
        let (p1, p2) = (phi.first.value(x), phi.second.value(x));
        let g = phi.first.gradient(x);
        let grad2 = field::dot4(&g, &g);
        let chi = cutoff.value(t, x[0]);
        let e = grad2 + p2 * p2 - 3.0 * total * total * p1 * p1 - 2.0 * total * p1.powi(3) - 0.5 * p1.powi(4);
        let mom = 2.0 * chi * g[0] * p2;
        let g2: f64 = q.iter().zip(&s).map(|(qn, sn)| 3.0 * qn * sn * sn).sum();
        let gg = -2.0 * p1 * g2;
        let mut jsum = 0.0;
        for k in 0..n {
            let jk = match &dpsi[k] {
                Some(d) if a[k] != 0.0 => 2.0 * a[k] * (speeds[k] * g[0] - p2) * (speeds[k] - chi) * d.value(x),
                _ => 0.0,
            };
            out[7 + k] = jk;
            jsum += jk;
        }
        out[0] = e;
        out[1] = mom;
        out[2] = gg;
        out[3] = e + mom + gg + jsum;
        if slabs.iter().any(|(lo, hi)| x[0] > *lo && x[0] < *hi) {
            out[4] = grad2 + p2 * p2 + 2.0 * chi * g[0] * p2;
            out[6] = grad2 + p2 * p2;
        } else {
            out[5] = grad2 + p2 * p2;
        }
    });
    let j: Vec<f64> = out[7..].to_vec();
    let j_total = j.iter().sum();
    Ok(EnergyReport {
        t,
        e: out[0],
        p: out[1],
        g: out[2],
        k: out[0] + out[1] + out[2] + j_total,
        j,
        j_total,
        k_single_pass: out[3],
        n_omega: out[4],
        n_omega_c: out[5],
        omega_plain: out[6],
    })
}

/// `(𝓝_Ω, 𝓝_Ωᶜ)` of a pair at time `t`.
pub fn localized_norms(phi: &FieldPair, cutoff: &SpeedCutoff, t: f64, spec: &QuadratureSpec) -> Result<(f64, f64), EnergyError> {
    if t <= 0.0 {
        return Err(EnergyError::BadTime(t));
    }
    let slabs = cutoff.slabs(t);
    let breaks: Vec<f64> = slabs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let rule = Quadrature::with_breaks(phi.symmetry(), spec, &breaks)?;
    let out = rule.integrate_many(2, |x, out| {
        let g = phi.first.gradient(x);
        let p2 = phi.second.value(x);
        let plain = field::dot4(&g, &g) + p2 * p2;
        if slabs.iter().any(|(lo, hi)| x[0] > *lo && x[0] < *hi) {
            out[0] = plain + 2.0 * cutoff.value(t, x[0]) * g[0] * p2;
        } else {
            out[1] = plain;
        }
    });
    Ok((out[0], out[1]))
}

/// Decay of the weight overlaps with the ramp region, sampled along the axis
/// where every weight is largest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZetaSmallness {
    pub gamma: f64,
    pub times: Vec<f64>,
    /// `sup_Ω Σζₙ²`.
    pub omega_sup: Vec<f64>,
    /// `Σₙ sup |(χ − ℓₙ) ζₙ²|`.
    pub chi_sup: Vec<f64>,
    pub omega_fit: PowerFit,
    pub chi_fit: PowerFit,
}

pub fn zeta_smallness(cutoff: &SpeedCutoff, zeta: WeightZeta, times: &[f64]) -> Result<ZetaSmallness, EnergyError> {
    let mut omega_sup = Vec::new();
    let mut chi_sup = Vec::new();
    for &t in times {
        let lo = cutoff.speeds[0] * t - 4.0 * t;
        let hi = cutoff.speeds[cutoff.speeds.len() - 1] * t + 4.0 * t;
        let m = 200_000;
        let (mut so, mut sc) = (0.0f64, vec![0.0f64; cutoff.speeds.len()]);
        for i in 0..=m {
            let x1 = lo + (hi - lo) * i as f64 / m as f64;
            let x = [x1, 0.0, 0.0, 0.0];
            let z2: Vec<f64> = cutoff.speeds.iter().map(|l| zeta.value(&x, l * t).powi(2)).collect();
            if cutoff.in_ramps(t, x1) {
                so = so.max(z2.iter().sum());
            }
            let chi = cutoff.value(t, x1);
            for (k, l) in cutoff.speeds.iter().enumerate() {
                sc[k] = sc[k].max(((chi - l) * z2[k]).abs());
            }
        }
        omega_sup.push(so);
        chi_sup.push(sc.iter().sum());
    }
    Ok(ZetaSmallness {
        gamma: zeta.gamma,
        times: times.to_vec(),
        omega_fit: power_fit(times, &omega_sup)?,
        chi_fit: power_fit(times, &chi_sup)?,
        omega_sup,
        chi_sup,
    })
}

/// Smooth cylindrical random field: a few Gaussian bumps on the `e₁` axis,
/// each modulated by `1 + β|x̄|²`.
fn random_bumps(rng: &mut ChaCha8Rng, count: usize, spread: f64) -> Field {
    let bumps: Vec<[f64; 5]> = (0..count)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-spread..spread),
                rng.gen_range(0.4..spread.max(0.5)),
                rng.gen_range(0.4..spread.max(0.5)),
                rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    let bumps = Arc::new(bumps);
    let bg = bumps.clone();
    FnField::new("bumps", Symmetry::Cylindrical, move |x| {
        let r2 = x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
        bumps
            .iter()
            .map(|[c, x0, w1, w, beta]| c * (1.0 + beta * r2) * (-(x[0] - x0).powi(2) / (2.0 * w1 * w1) - r2 / (2.0 * w * w)).exp())
            .sum()
    })
    .with_gradient(move |x| {
        let r2 = x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
        let mut g = [0.0; 4];
        for [c, x0, w1, w, beta] in bg.iter() {
            let e = c * (-(x[0] - x0).powi(2) / (2.0 * w1 * w1) - r2 / (2.0 * w * w)).exp();
            let poly = 1.0 + beta * r2;
            g[0] += -poly * e * (x[0] - x0) / (w1 * w1);
            for i in 1..4 {
                g[i] += e * x[i] * (2.0 * beta - poly / (w * w));
            }
        }
        g
    })
    .with_decay(f64::INFINITY)
    .into_field()
}

/// Settings of a coercivity probe around one boosted soliton at the origin.
#[derive(Clone, Debug)]
pub struct CoercivityProbe {
    pub speed: Speed,
    pub profile: Field,
    pub mode: UnstableMode,
    /// Kernel generators of the profile in the probe's sector (unboosted).
    pub kernel: Vec<Field>,
    pub samples: usize,
    pub seed: u64,
    pub spread: f64,
    pub gammas: Vec<f64>,
    pub spec: QuadratureSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedProbe {
    pub gamma: f64,
    /// Smallest ζ-weighted form over the weighted norm, after projection.
    pub min_ratio: f64,
    /// Largest relative mismatch of the commutator identity over samples.
    pub identity_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub speed: f64,
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub argmin: usize,
    /// Form of `(Y, 0)` over its energy norm, without projection.
    pub negative_control: f64,
    /// Largest form ratio over the kernel pairs themselves.
    pub kernel_ratio: f64,
    pub weighted: Vec<WeightedProbe>,
}

impl ProbeReport {
    pub fn coercive(&self) -> bool {
        self.min_ratio > 0.0
    }
}

/// Values at one node needed by every bilinear form.
struct Node {
    v1: f64,
    g1: Point4,
    v2: f64,
}

/// Bilinear forms accumulated over a list of pairs, per weight exponent.
struct Forms {
    n: usize,
    gammas: usize,
}

impl Forms {
    // Blocks: 0 form, 1 energy, 2 L², then per γ: weighted LHS, weighted
    // norm, ∫v²ζΔζ, ℓ∫(v z) ζ∂₁ζ, 3∫Q²v²(1−ζ²), form of ζv.
    const BASE: usize = 3;
    const PER_GAMMA: usize = 6;

    fn blocks(&self) -> usize {
        Self::BASE + Self::PER_GAMMA * self.gammas
    }

    fn len(&self) -> usize {
        self.blocks() * self.n * self.n
    }

    fn matrix(&self, flat: &[f64], block: usize) -> DMatrix<f64> {
        let nn = self.n * self.n;
        DMatrix::from_row_slice(self.n, self.n, &flat[block * nn..(block + 1) * nn])
    }
}

impl CoercivityProbe {
    fn directions(&self) -> Result<(Vec<FieldPair>, FieldPair, FieldPair, FieldPair, FieldPair), EnergyError> {
        let kernel: Vec<FieldPair> = self.kernel.iter().map(|g| pair_vector(g, self.speed, 1.0)).collect();
        let e = exp_directions(self.mode.spline.clone(), self.mode.rate, self.speed)?;
        Ok((kernel, e.upsilon_plus, e.upsilon_minus, e.z_plus, e.z_minus))
    }

    fn forms(&self, pairs: &[FieldPair], q: &Field, zetas: &[WeightZeta]) -> Result<Vec<f64>, EnergyError> {
        let sym = pairs.iter().fold(Symmetry::Cylindrical, |s, p| s.join(p.symmetry()));
        let rule = Quadrature::new(sym, &self.spec)?;
        let layout = Forms { n: pairs.len(), gammas: zetas.len() };
        let l = self.speed.get();
        let n = pairs.len();
        let nn = n * n;
        Ok(rule.integrate_many(layout.len(), |x, out| {
            let nodes: Vec<Node> =
                pairs.iter().map(|p| Node { v1: p.first.value(x), g1: p.first.gradient(x), v2: p.second.value(x) }).collect();
            let q2 = q.value(x).powi(2);
            let zinfo: Vec<(f64, Point4, f64)> =
                zetas.iter().map(|z| (z.value(x, 0.0), z.gradient(x, 0.0), z.laplacian(x, 0.0))).collect();
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (&nodes[i], &nodes[j]);
                    let grad = field::dot4(&a.g1, &b.g1);
                    let cross = l * (a.g1[0] * b.v2 + b.g1[0] * a.v2);
                    let k = i * n + j;
                    out[k] = grad - 3.0 * q2 * a.v1 * b.v1 + a.v2 * b.v2 + cross;
                    out[nn + k] = grad + a.v2 * b.v2;
                    out[2 * nn + k] = a.v1 * b.v1 + a.v2 * b.v2;
                    for (gi, (z, dz, lz)) in zinfo.iter().enumerate() {
                        let base = (Forms::BASE + Forms::PER_GAMMA * gi) * nn + k;
                        let z2 = z * z;
                        out[base] = (grad + a.v2 * b.v2 + cross) * z2 - 3.0 * q2 * a.v1 * b.v1;
                        out[base + nn] = (grad + a.v2 * b.v2) * z2;
                        out[base + 2 * nn] = a.v1 * b.v1 * z * lz;
                        out[base + 3 * nn] = l * (a.v1 * b.v2 + b.v1 * a.v2) * z * dz[0];
                        out[base + 4 * nn] = 3.0 * q2 * a.v1 * b.v1 * (1.0 - z2);
                        let ga: Point4 = std::array::from_fn(|m| z * a.g1[m] + a.v1 * dz[m]);
                        let gb: Point4 = std::array::from_fn(|m| z * b.g1[m] + b.v1 * dz[m]);
                        out[base + 5 * nn] = field::dot4(&ga, &gb) - 3.0 * q2 * z2 * a.v1 * b.v1
                            + z2 * a.v2 * b.v2
                            + l * (ga[0] * z * b.v2 + gb[0] * z * a.v2);
                    }
                }
            }
        }))
    }

    /// Rejects kernels whose normalized energy Gram matrix is nearly singular:
    /// the projection would then amplify rounding without bound.
    fn check_kernel(&self, kernel: &[FieldPair], q: &Field) -> Result<(), EnergyError> {
        if kernel.is_empty() {
            return Ok(());
        }
        let flat = self.forms(kernel, q, &[])?;
        let gram = Forms { n: kernel.len(), gammas: 0 }.matrix(&flat, 1);
        let scale = DVector::from_iterator(kernel.len(), gram.diagonal().iter().map(|d| 1.0 / d.sqrt()));
        let normalized = DMatrix::from_fn(kernel.len(), kernel.len(), |i, j| gram[(i, j)] * scale[i] * scale[j]);
        let smallest = normalized.symmetric_eigenvalues().min();
        if smallest < 1e-8 {
            return Err(EnergyError::DependentKernel(smallest));
        }
        Ok(())
    }

    /// Runs the probe; sample forms are evaluated in parallel.
    pub fn run(&self) -> Result<ProbeReport, EnergyError> {
        let (kernel, up, um, zp, zm) = self.directions()?;
        let q = boost(self.profile.clone(), self.speed);
        let zetas = self.gammas.iter().map(|&g| WeightZeta::new(g)).collect::<Result<Vec<_>, _>>()?;
        let k = kernel.len();
        self.check_kernel(&kernel, &q)?;
        // Correction directions: kernel pairs and Υ±; constraints: energy
        // pairing with kernel pairs and L² pairing with Z±.
        let mut base: Vec<FieldPair> = kernel.clone();
        base.push(up.clone());
        base.push(um);
        base.push(zp);
        base.push(zm);
        let m = k + 2;
        let layout = Forms { n: base.len() + 1, gammas: zetas.len() };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let samples: Vec<FieldPair> = (0..self.samples)
            .map(|_| {
                let count = rng.gen_range(1..=3);
                let a = random_bumps(&mut rng, count, self.spread);
                let count = rng.gen_range(1..=3);
                let b = random_bumps(&mut rng, count, self.spread);
                FieldPair::joined(a, b)
            })
            .collect();

        let results: Vec<Result<(f64, Vec<(f64, f64)>), EnergyError>> = samples
            .par_iter()
            .map(|v| {
                let mut pairs = vec![v.clone()];
                pairs.extend(base.iter().cloned());
                let flat = self.forms(&pairs, &q, &zetas)?;
                let energy = layout.matrix(&flat, 1);
                let l2 = layout.matrix(&flat, 2);
                // Index 0 is the sample, 1..=m the corrections, m+1.. the Z±.
                let mut a = DMatrix::zeros(m, m);
                let mut rhs = DVector::zeros(m);
                for i in 0..m {
                    let (mat, row) = if i < k { (&energy, 1 + i) } else { (&l2, 1 + k + 2 + (i - k)) };
                    rhs[i] = mat[(row, 0)];
                    for j in 0..m {
                        a[(i, j)] = mat[(row, 1 + j)];
                    }
                }
                let c = a.lu().solve(&rhs).ok_or(EnergyError::SingularProjection)?;
                let mut w = DVector::zeros(layout.n);
                w[0] = 1.0;
                for j in 0..m {
                    w[1 + j] = -c[j];
                }
                let quad = |block: usize| {
                    let mat = layout.matrix(&flat, block);
                    w.dot(&(&mat * &w))
                };
                let ratio = quad(0) / quad(1);
                let weighted = (0..zetas.len())
                    .map(|g| {
                        let b0 = Forms::BASE + Forms::PER_GAMMA * g;
                        let lhs = quad(b0);
                        let norm = quad(b0 + 1);
                        let direct = quad(b0 + 5);
                        let rebuilt = lhs - quad(b0 + 2) + quad(b0 + 3) + quad(b0 + 4);
                        let scale = direct.abs().max(norm.abs());
                        (lhs / norm, (direct - rebuilt).abs() / scale)
                    })
                    .collect();
                Ok((ratio, weighted))
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let ratios: Vec<f64> = results.iter().map(|r| r.0).collect();
        let (argmin, min_ratio) =
            ratios.iter().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
        let weighted = zetas
            .iter()
            .enumerate()
            .map(|(g, z)| WeightedProbe {
                gamma: z.gamma,
                min_ratio: results.iter().map(|r| r.1[g].0).fold(f64::INFINITY, f64::min),
                identity_error: results.iter().map(|r| r.1[g].1).fold(0.0, f64::max),
            })
            .collect();

        // Negative control and kernel neutrality use the unboosted form at the same speed.
        let y: Field = self.mode.spline.clone();
        let mut control = vec![FieldPair::joined(y, field::zero(Symmetry::Cylindrical))];
        control.extend(kernel.iter().cloned());
        let flat = self.forms(&control, &q, &[])?;
        let plain = Forms { n: control.len(), gammas: 0 };
        let (form, energy) = (plain.matrix(&flat, 0), plain.matrix(&flat, 1));
        let negative_control = form[(0, 0)] / energy[(0, 0)];
        let kernel_ratio = (1..control.len()).map(|i| (form[(i, i)] / energy[(i, i)]).abs()).fold(0.0, f64::max);
        Ok(ProbeReport { speed: self.speed.get(), ratios, min_ratio, argmin, negative_control, kernel_ratio, weighted })
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::states::ground_state;

    #[test]
    fn cutoff_matches_its_clauses() {
        let c = SpeedCutoff::new(&[-0.5, 0.5]).unwrap();
        assert!((c.delta - 0.0125).abs() < 1e-15);
        let t = 10.0;
        assert_eq!(c.value(t, -6.0), -0.5);
        assert_eq!(c.value(t, 6.0), 0.5);
        let slope = (c.value(t, 0.1) - c.value(t, -0.1)) / 0.2;
        assert!((slope - 1.0 / ((1.0 - 0.025) * t)).abs() < 1e-12);
        assert!((c.slope(t, 0.0) - slope).abs() < 1e-12);
        let (lo, hi) = c.slabs(t)[0];
        assert!((c.value(t, lo) + 0.5).abs() < 1e-12 && (c.value(t, hi) - 0.5).abs() < 1e-12);
        let mut prev = -1.0;
        for i in 0..1000 {
            let v = c.value(t, -10.0 + 0.02 * i as f64);
            assert!(v >= prev - 1e-15 && v.abs() <= c.bar() + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn three_speed_cutoff_is_continuous() {
        let c = SpeedCutoff::new(&[-0.6, 0.1, 0.7]).unwrap();
        for (lo, hi) in c.slabs(5.0) {
            for x in [lo, hi] {
                let (a, b) = (c.value(5.0, x - 1e-9), c.value(5.0, x + 1e-9));
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn weight_derivatives() {
        let z = WeightZeta::new(0.05).unwrap();
        let x = [0.7, -0.3, 0.2, 1.1];
        let h = 1e-4;
        let f = |p: &Point4| z.value(p, 0.3);
        let g = z.gradient(&x, 0.3);
        let num = crate::field::fd::gradient(&f, &x, h);
        let lap = crate::field::fd::laplacian(&f, &x, 1e-3, crate::field::fd::StencilOrder::Fourth);
        for i in 0..4 {
            assert!((g[i] - num[i]).abs() < 1e-9);
        }
        assert!((z.laplacian(&x, 0.3) - lap).abs() < 1e-7);
        assert!(WeightZeta::new(1.5).is_err());
    }

    #[test]
    fn ground_state_energy_and_momentum() {
        let w = ground_state();
        let spec = QuadratureSpec::default();
        let u = FieldPair::joined(w.clone(), field::zero(Symmetry::Cylindrical));
        let (e, p) = conserved_ep(&u, &spec).unwrap();
        assert!((e - 4.0 * PI * PI).abs() < 1e-6, "{e}");
        assert!(p.abs() < 1e-12);
        let boosted = pair_vector(&w, Speed::new(0.5).unwrap(), 1.0);
        let (_, p) = conserved_ep(&boosted, &spec).unwrap();
        assert!(p < 0.0);
    }
}
