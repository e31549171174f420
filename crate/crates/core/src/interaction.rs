//! Nonlinear interaction between travelling solitons and its decay laws.
//!
//! Soliton `n` moves along `e₁` with speed `ℓₙ`: its profile is the boosted
//! state `τₙ Q_{ℓₙ}(x − ℓₙ t e₁)` and its kernel directions are boosted and
//! translated the same way. The interaction term is what remains of the cubic
//! nonlinearity of the full ansatz after removing each soliton's own cube and
//! linear kernel response.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, Field, FnField, Point4, ScalarField, Symmetry};
use crate::fit::{log_fit, power_fit, FitError, LogFit, PowerFit};
use crate::lorentz::{boost, shift_x1, LorentzError, Speed};
use crate::quadrature::{Quadrature, QuadError, QuadratureSpec};

/// Largest admissible `|a| + |b|` of the kernel coefficients.
pub const PARAMETER_THRESHOLD: f64 = 0.1;

/// Default earliest time at which interaction estimates are evaluated.
pub const DEFAULT_T0: f64 = 10.0;

#[derive(Debug, Error)]
pub enum InteractionError {
    #[error("need at least one soliton")]
    Empty,
    #[error("speeds must be strictly increasing, got {0:?}")]
    Unordered(Vec<f64>),
    #[error(transparent)]
    Speed(#[from] LorentzError),
    #[error("parameter shape mismatch: {0}")]
    Shape(String),
    #[error("|a| + |b| = {0} exceeds {PARAMETER_THRESHOLD}")]
    LargeParameters(f64),
    #[error("time {t} precedes T0 = {t0}")]
    TooEarly { t: f64, t0: f64 },
    #[error("kernel direction ψ missing for soliton {0}")]
    MissingKernel(usize),
    #[error("need at least two solitons for a separation scale")]
    NoSeparation,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Kernel directions attached to one profile.
#[derive(Clone, Debug)]
pub struct KernelSet {
    pub psi: Field,
    pub phis: Vec<Field>,
}

impl KernelSet {
    pub fn from_basis(basis: &crate::states::KernelBasis) -> Self {
        KernelSet { psi: basis.psi.clone(), phis: basis.phis.iter().map(|(_, f)| f.clone()).collect() }
    }
}

#[derive(Clone, Debug)]
pub struct Soliton {
    pub profile: Field,
    pub sign: f64,
    pub speed: Speed,
    pub kernel: Option<KernelSet>,
}

impl Soliton {
    pub fn new(profile: Field, sign: f64, speed: f64) -> Result<Self, InteractionError> {
        Ok(Soliton { profile, sign: sign.signum(), speed: Speed::new(speed)?, kernel: None })
    }

    pub fn with_kernel(mut self, kernel: KernelSet) -> Self {
        self.kernel = Some(kernel);
        self
    }

    fn k(&self) -> usize {
        self.kernel.as_ref().map_or(0, |k| k.phis.len())
    }
}

/// Solitons with increasing speeds and small kernel coefficients `a`, `b`.
#[derive(Clone, Debug)]
pub struct MultiSolitonConfig {
    pub solitons: Vec<Soliton>,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub t0: f64,
}

impl MultiSolitonConfig {
    pub fn new(solitons: Vec<Soliton>) -> Result<Self, InteractionError> {
        if solitons.is_empty() {
            return Err(InteractionError::Empty);
        }
        let speeds: Vec<f64> = solitons.iter().map(|s| s.speed.get()).collect();
        if speeds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(InteractionError::Unordered(speeds));
        }
        let a = vec![0.0; solitons.len()];
        let b = solitons.iter().map(|s| vec![0.0; s.k()]).collect();
        Ok(MultiSolitonConfig { solitons, a, b, t0: DEFAULT_T0 })
    }

    pub fn with_parameters(mut self, a: Vec<f64>, b: Vec<Vec<f64>>) -> Result<Self, InteractionError> {
        let n = self.solitons.len();
        if a.len() != n || b.len() != n {
            return Err(InteractionError::Shape(format!("expected {n} soliton entries")));
        }
        for (i, (s, bn)) in self.solitons.iter().zip(&b).enumerate() {
            if bn.len() != s.k() {
                return Err(InteractionError::Shape(format!("soliton {i} has K = {}, got {}", s.k(), bn.len())));
            }
            if a[i] != 0.0 && s.kernel.is_none() {
                return Err(InteractionError::MissingKernel(i));
            }
        }
        let size = a.iter().chain(b.iter().flatten()).map(|v| v.abs()).sum::<f64>();
        if size > PARAMETER_THRESHOLD {
            return Err(InteractionError::LargeParameters(size));
        }
        self.a = a;
        self.b = b;
        Ok(self)
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn len(&self) -> usize {
        self.solitons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solitons.is_empty()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.solitons.iter().map(|s| s.speed.get()).collect()
    }

    /// `σ = min |ℓₙ − ℓₙ'| / 10`.
    pub fn sigma(&self) -> Result<f64, InteractionError> {
        let l = self.speeds();
        l.windows(2).map(|w| (w[1] - w[0]) / 10.0).reduce(f64::min).ok_or(InteractionError::NoSeparation)
    }

    /// Euclidean sizes `(|a|, |b|)`.
    pub fn parameter_sizes(&self) -> (f64, f64) {
        let a = self.a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let b = self.b.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        (a, b)
    }

    /// All moving fields at time `t`.
    pub fn frame(&self, t: f64) -> Result<Frame, InteractionError> {
        if t < self.t0 {
            return Err(InteractionError::TooEarly { t, t0: self.t0 });
        }
        Ok(self.frame_unchecked(t))
    }

    pub(crate) fn frame_unchecked(&self, t: f64) -> Frame {
        let mv = |f: &Field, s: &Soliton| shift_x1(boost(f.clone(), s.speed), s.speed.get() * t);
        let mut q = Vec::new();
        let mut psi = Vec::new();
        let mut phi = Vec::new();
        let mut symmetry = Symmetry::Cylindrical;
        for (n, s) in self.solitons.iter().enumerate() {
            let qn = field::scaled(s.sign, mv(&s.profile, s));
            symmetry = symmetry.join(qn.symmetry());
            q.push(qn);
            match &s.kernel {
                Some(k) => {
                    let p = mv(&k.psi, s);
                    if self.a[n] != 0.0 {
                        symmetry = symmetry.join(p.symmetry());
                    }
                    psi.push(Some(p));
                    let ph: Vec<Field> = k.phis.iter().map(|f| mv(f, s)).collect();
                    for (f, &c) in ph.iter().zip(&self.b[n]) {
                        if c != 0.0 {
                            symmetry = symmetry.join(f.symmetry());
                        }
                    }
                    phi.push(ph);
                }
                None => {
                    psi.push(None);
                    phi.push(Vec::new());
                }
            }
        }
        Frame {
            t,
            centers: self.speeds().iter().map(|l| l * t).collect(),
            q,
            psi,
            phi,
            a: self.a.clone(),
            b: self.b.clone(),
            symmetry,
        }
    }
}

/// The moving profiles and kernel directions frozen at one time.
#[derive(Clone, Debug)]
pub struct Frame {
    pub t: f64,
    pub centers: Vec<f64>,
    pub q: Vec<Field>,
    pub psi: Vec<Option<Field>>,
    pub phi: Vec<Vec<Field>>,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub symmetry: Symmetry,
}

/// Pointwise values of every part of the interaction term.
#[derive(Clone, Debug, PartialEq)]
pub struct GValues {
    pub g1: f64,
    pub g2: Vec<f64>,
    pub g3: [f64; 4],
}

impl GValues {
    pub fn g2_total(&self) -> f64 {
        self.g2.iter().sum()
    }

    pub fn g3_total(&self) -> f64 {
        self.g3.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.g1 + self.g2_total() + self.g3_total()
    }
}

impl Frame {
    /// Soliton values `Qₙ(x)` and kernel corrections `aₙΨₙ + Σₖ bₙₖΦₙₖ`.
    pub fn local(&self, x: &Point4) -> (Vec<f64>, Vec<f64>) {
        let q = self.q.iter().map(|f| f.value(x)).collect();
        let s = (0..self.q.len())
            .map(|n| {
                let mut v = 0.0;
                if self.a[n] != 0.0 {
                    v += self.a[n] * self.psi[n].as_ref().map_or(0.0, |p| p.value(x));
                }
                for (f, &c) in self.phi[n].iter().zip(&self.b[n]) {
                    if c != 0.0 {
                        v += c * f.value(x);
                    }
                }
                v
            })
            .collect();
        (q, s)
    }

    /// The interaction term from its definition.
    pub fn g(&self, x: &Point4) -> f64 {
        let (q, s) = self.local(x);
        let total: f64 = q.iter().chain(&s).sum();
        let own: f64 = q.iter().zip(&s).map(|(qn, sn)| qn.powi(3) + 3.0 * qn * qn * sn).sum();
        total.powi(3) - own
    }

    /// The interaction term split into its pure-interaction, self-quadratic
    /// and mixed parts.
    pub fn parts(&self, x: &Point4) -> GValues {
        let (q, s) = self.local(x);
        let n = q.len();
        let r: f64 = q.iter().sum();
        let u: f64 = s.iter().sum();
        let mut g1 = 0.0;
        let (mut g31, mut g33a, mut g33b, mut g34) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                g1 += 3.0 * q[i] * q[i] * q[j];
                g31 += 3.0 * q[i] * s[j] * s[j];
                g33a += 3.0 * q[i] * q[i] * s[j];
                g33b += 3.0 * q[i] * q[j];
                g34 += s[i] * s[j];
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    g1 += 6.0 * q[i] * q[j] * q[k];
                }
            }
        }
        GValues {
            g1,
            g2: q.iter().zip(&s).map(|(qn, sn)| 3.0 * qn * sn * sn).collect(),
            g3: [g31, u.powi(3), g33a + g33b * u, 3.0 * r * g34],
        }
    }
}

/// Pointwise evaluator of the interaction term at time `t`.
pub fn assemble_g(cfg: &MultiSolitonConfig, t: f64) -> Result<Field, InteractionError> {
    let frame = Arc::new(cfg.frame(t)?);
    let sym = frame.symmetry;
    Ok(FnField::new("G", sym, move |x| frame.g(x)).into_field())
}

/// The parts of the interaction term as separate fields.
#[derive(Clone, Debug)]
pub struct GTerms {
    pub g1: Field,
    pub g2: Vec<Field>,
    pub g3: [Field; 4],
}

impl GTerms {
    pub fn value_sum(&self, x: &Point4) -> f64 {
        self.g1.value(x) + self.g2.iter().map(|f| f.value(x)).sum::<f64>() + self.g3.iter().map(|f| f.value(x)).sum::<f64>()
    }
}

pub fn decompose_g(cfg: &MultiSolitonConfig, t: f64) -> Result<GTerms, InteractionError> {
    let frame = Arc::new(cfg.frame(t)?);
    let sym = frame.symmetry;
    let part = |label: String, pick: Arc<dyn Fn(&GValues) -> f64 + Send + Sync>| {
        let fr = frame.clone();
        FnField::new(label, sym, move |x| pick(&fr.parts(x))).into_field()
    };
    let g1 = part("G1".into(), Arc::new(|v| v.g1));
    let g2 = (0..cfg.len()).map(|n| part(format!("G2[{n}]"), Arc::new(move |v: &GValues| v.g2[n]))).collect();
    let g3 = [0, 1, 2, 3].map(|i| part(format!("G3[{}]", i + 1), Arc::new(move |v: &GValues| v.g3[i])));
    Ok(GTerms { g1, g2, g3 })
}

fn spec_for(spec: &QuadratureSpec, centers: &[f64]) -> QuadratureSpec {
    let mut c = centers.to_vec();
    c.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
    c.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    spec.clone().with_centers(c)
}

/// Integrates several outputs on the rule of `spec` and on the rule with two
/// more nodes per panel; returns the finer values and the differences.
fn integrate_pair<F>(sym: Symmetry, spec: &QuadratureSpec, breaks: &[f64], n_out: usize, f: F) -> Result<(Vec<f64>, Vec<f64>), QuadError>
where
    F: Fn(&Point4, &mut [f64]) + Sync,
{
    let lo = Quadrature::with_breaks(sym, spec, breaks)?.integrate_many(n_out, &f);
    let hi = Quadrature::with_breaks(sym, &spec.clone().with_nodes(spec.nodes_per_panel + 2), breaks)?
        .integrate_many(n_out, &f);
    let err = lo.iter().zip(&hi).map(|(a, b)| (a - b).abs()).collect();
    if hi.iter().any(|v| !v.is_finite()) {
        return Err(QuadError::NonFinite { point: [f64::NAN; 4] });
    }
    Ok((hi, err))
}

/// Value of a space integral with an error estimate from rule refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `∫ |f₁(x − ℓ₁t e₁)|^{α₁} |f₂(x − ℓ₂t e₁)|^{α₂} dx`.
///
/// The truncation radius grows with the separation so the neglected tail is
/// a fixed small fraction of the value at every time.
pub fn interaction_integral(
    f1: &Field,
    f2: &Field,
    alphas: (f64, f64),
    speeds: (f64, f64),
    t: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate, InteractionError> {
    let (c1, c2) = (speeds.0 * t, speeds.1 * t);
    let g1 = shift_x1(f1.clone(), c1);
    let g2 = shift_x1(f2.clone(), c2);
    let sym = g1.symmetry().join(g2.symmetry());
    let sep = (c1 - c2).abs();
    let spec = spec_for(spec, &[c1, c2]).with_r_max(spec.r_max.max(20.0 * sep));
    let mid = 0.5 * (c1 + c2);
    let (v, e) = integrate_pair(sym, &spec, &[mid], 1, |x, out| {
        out[0] = g1.value(x).abs().powf(alphas.0) * g2.value(x).abs().powf(alphas.1);
    })?;
    Ok(Estimate { value: v[0], error: e[0] })
}

/// Which branch of the two-soliton integral law applies to `α₁ ≤ α₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateCase {
    /// `α₂ > 2`: decay `t^{−2α₁}`.
    Fast,
    /// `α₂ < 2`: decay `t^{4 − 2(α₁+α₂)}`.
    Slow,
    /// `α₂ = 2`: decay `t^{−2α₁} log t`.
    Critical,
}

impl RateCase {
    pub fn classify(a2: f64) -> RateCase {
        if (a2 - 2.0).abs() < 1e-12 {
            RateCase::Critical
        } else if a2 > 2.0 {
            RateCase::Fast
        } else {
            RateCase::Slow
        }
    }

    /// Predicted power-law exponent, ignoring the logarithm.
    pub fn exponent(self, a1: f64, a2: f64) -> f64 {
        match self {
            RateCase::Fast | RateCase::Critical => -2.0 * a1,
            RateCase::Slow => 4.0 - 2.0 * (a1 + a2),
        }
    }
}

/// Result of a rate study of the two-soliton integral.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateStudy {
    pub alphas: (f64, f64),
    pub case: RateCase,
    pub expected_slope: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub power: PowerFit,
    /// For the critical case, the fit of `value · t^{2α₁}` against `log t`.
    pub log: Option<LogFit>,
}

impl RateStudy {
    pub fn passes(&self, tol: f64) -> bool {
        match self.case {
            RateCase::Critical => self.log.as_ref().is_some_and(|l| l.significantly_positive(3.0)),
            _ => self.power.within(self.expected_slope, tol),
        }
    }
}

/// Measures the time decay of the two-soliton integral for `f₁ = f₂ = f`.
pub fn rate_study(
    f: &Field,
    alphas: (f64, f64),
    speeds: (f64, f64),
    times: &[f64],
    spec: &QuadratureSpec,
) -> Result<RateStudy, InteractionError> {
    let (a1, a2) = alphas;
    let case = RateCase::classify(a2);
    let mut values = Vec::with_capacity(times.len());
    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let e = interaction_integral(f, f, alphas, speeds, t, spec)?;
        values.push(e.value);
        errors.push(e.error);
    }
    let power = power_fit(times, &values)?;
    let log = match case {
        RateCase::Critical => {
            let scaled: Vec<f64> = times.iter().zip(&values).map(|(t, v)| v * t.powf(2.0 * a1)).collect();
            Some(log_fit(times, &scaled)?)
        }
        _ => None,
    };
    Ok(RateStudy { alphas, case, expected_slope: case.exponent(a1, a2), times: times.to_vec(), values, errors, power, log })
}

/// `L²` norms of the interaction parts at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GNorms {
    pub t: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
}

pub fn g_norms(cfg: &MultiSolitonConfig, t: f64, spec: &QuadratureSpec) -> Result<GNorms, InteractionError> {
    let frame = cfg.frame(t)?;
    let spec = spec_for(spec, &frame.centers);
    let (v, _) = integrate_pair(frame.symmetry, &spec, &[], 3, |x, out| {
        let p = frame.parts(x);
        out[0] = p.g1 * p.g1;
        out[1] = p.g2_total().powi(2);
        out[2] = p.g3_total().powi(2);
    })?;
    Ok(GNorms { t, g1: v[0].max(0.0).sqrt(), g2: v[1].max(0.0).sqrt(), g3: v[2].max(0.0).sqrt() })
}

/// Time study of the interaction norms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GNormReport {
    pub norms: Vec<GNorms>,
    pub g1_fit: PowerFit,
    /// `‖G₂‖ / (|a|² + |b|²)` per time; empty when `a = b = 0`.
    pub g2_ratio: Vec<f64>,
    /// Smallest `C` with `‖G₃‖ ≤ C(|a|² + |b|³ + t⁻⁴)` over the samples.
    pub g3_constant: f64,
    pub g1_monotone: bool,
}

pub fn verify_g_norms(cfg: &MultiSolitonConfig, times: &[f64], spec: &QuadratureSpec) -> Result<GNormReport, InteractionError> {
    let norms = times.iter().map(|&t| g_norms(cfg, t, spec)).collect::<Result<Vec<_>, _>>()?;
    let g1: Vec<f64> = norms.iter().map(|n| n.g1).collect();
    let g1_fit = power_fit(times, &g1)?;
    let (a, b) = cfg.parameter_sizes();
    let quad = a * a + b * b;
    let g2_ratio = if quad > 0.0 { norms.iter().map(|n| n.g2 / quad).collect() } else { Vec::new() };
    let g3_constant = norms.iter().map(|n| n.g3 / (a * a + b.powi(3) + n.t.powi(-4))).fold(0.0, f64::max);
    let g1_monotone = g1.windows(2).all(|w| w[1] <= w[0]);
    Ok(GNormReport { norms, g1_fit, g2_ratio, g3_constant, g1_monotone })
}

/// `∫Qₙ⁴Qₙ'²` split at `|x₁ − ℓₙt| = |ℓₙ − ℓₙ'|t/2` into the part far from
/// soliton `n` (`far`) and the part near it (`near`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSplit {
    pub n: usize,
    pub other: usize,
    pub far: f64,
    pub near: f64,
}

impl PairSplit {
    pub fn norm(&self) -> f64 {
        (self.far + self.near).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub t: f64,
    /// `Σ_{n≠n'} ‖Qₙ²Qₙ'‖_{L²}`.
    pub total: f64,
    pub pairs: Vec<PairSplit>,
}

pub fn pairwise_q_norm(cfg: &MultiSolitonConfig, t: f64, spec: &QuadratureSpec) -> Result<PairwiseReport, InteractionError> {
    let frame = cfg.frame(t)?;
    let spec = spec_for(spec, &frame.centers);
    let mut pairs = Vec::new();
    for n in 0..cfg.len() {
        for m in 0..cfg.len() {
            if n == m {
                continue;
            }
            let half = 0.5 * (frame.centers[n] - frame.centers[m]).abs();
            let (lo, hi) = (frame.centers[n] - half, frame.centers[n] + half);
            let sym = frame.q[n].symmetry().join(frame.q[m].symmetry());
            let (qn, qm) = (&frame.q[n], &frame.q[m]);
            let (v, _) = integrate_pair(sym, &spec, &[lo, hi], 2, |x, out| {
                let v = qn.value(x).powi(4) * qm.value(x).powi(2);
                if x[0] > lo && x[0] < hi {
                    out[1] = v;
                } else {
                    out[0] = v;
                }
            })?;
            pairs.push(PairSplit { n, other: m, far: v[0], near: v[1] });
        }
    }
    Ok(PairwiseReport { t, total: pairs.iter().map(PairSplit::norm).sum(), pairs })
}

/// Smooth cut-off: `1` on `[0,1]`, `0` on `[2,∞)`, cubic in between.
pub fn cutoff(s: f64) -> f64 {
    let u = (s.abs() - 1.0).clamp(0.0, 1.0);
    1.0 - 3.0 * u * u + 2.0 * u * u * u
}

pub fn cutoff_derivative(s: f64) -> f64 {
    let u = s.abs() - 1.0;
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    (6.0 * u * u - 6.0 * u) * s.signum()
}

/// `σₙ = 2π²√(1 − ℓₙ²)`.
pub fn log_rate(l: f64) -> f64 {
    2.0 * PI * PI * (1.0 - l * l).sqrt()
}

/// The localizing weight `ξ(|((x₁ − ℓt)/√(1−ℓ²), x̄)| / (σt))` around a soliton.
pub fn localizer(x: &Point4, l: f64, t: f64, sigma: f64) -> f64 {
    let y1 = (x[0] - l * t) / (1.0 - l * l).sqrt();
    let r = (y1 * y1 + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
    cutoff(r / (sigma * t))
}

/// `∫ f g ξₙ` computed in the rescaled comoving frame of soliton `n`, where
/// the localizer is radial and the quadrature can break at its kinks.
pub fn localized_pairing(
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    l: f64,
    t: f64,
    sigma: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate, InteractionError> {
    let c = (1.0 - l * l).sqrt();
    let rho = sigma * t;
    let spec = QuadratureSpec { r_max: 2.0 * rho, centers: vec![0.0], ..spec.clone() };
    let (v, e) = integrate_pair(Symmetry::Full, &spec, &[], 1, |y, out| {
        let x = [l * t + c * y[0], y[1], y[2], y[3]];
        out[0] = c * f.value(&x) * g.value(&x) * cutoff(field::norm4(y) / rho);
    })?;
    Ok(Estimate { value: v[0], error: e[0] })
}

/// Growth of the self-pairing `(Ψ, Ψξ)` against `log t` and the cross pairing
/// with a second soliton's `Ψ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogLawReport {
    pub speed: f64,
    pub sigma: f64,
    pub times: Vec<f64>,
    pub self_pairing: Vec<f64>,
    pub cross_pairing: Vec<f64>,
    pub fit: LogFit,
    pub expected: f64,
    pub relative_error: f64,
    /// Largest change of the cross pairing over the window.
    pub cross_spread: f64,
}

/// Self pairing of the travelling `ψ` of speed `l`, and its cross pairing
/// with a copy travelling at speed `partner`.
pub fn psi_xi_lawcheck(
    psi: &Field,
    l: f64,
    partner: f64,
    times: &[f64],
    sigma: f64,
    spec: &QuadratureSpec,
) -> Result<LogLawReport, InteractionError> {
    let speed = Speed::new(l)?;
    let other = Speed::new(partner)?;
    let mut self_pairing = Vec::new();
    let mut cross_pairing = Vec::new();
    for &t in times {
        let pn = shift_x1(boost(psi.clone(), speed), l * t);
        let po = shift_x1(boost(psi.clone(), other), other.get() * t);
        self_pairing.push(localized_pairing(&*pn, &*pn, l, t, sigma, spec)?.value);
        cross_pairing.push(localized_pairing(&*po, &*pn, l, t, sigma, spec)?.value);
    }
    let fit = log_fit(times, &self_pairing)?;
    let expected = log_rate(l);
    let (lo, hi) = cross_pairing.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(LogLawReport {
        speed: l,
        sigma,
        times: times.to_vec(),
        relative_error: (fit.log_coefficient - expected).abs() / expected,
        self_pairing,
        cross_pairing,
        fit,
        expected,
        cross_spread: hi - lo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::promote;
    use crate::states::{apply_generator, ground_state, surrogate_closed_form, Generator};

    fn bracket() -> FnField {
        FnField::new("<x>^-2", Symmetry::Cylindrical, |x| 1.0 / (1.0 + field::norm4(x).powi(2))).with_decay(2.0)
    }

    fn two_w(a: f64) -> MultiSolitonConfig {
        let w = ground_state();
        let psi = apply_generator(w.clone(), Generator::Conformal(3));
        let dil = apply_generator(w.clone(), Generator::Dilation);
        let k = KernelSet { psi, phis: vec![promote(dil, Symmetry::Bicylindrical).unwrap()] };
        let s1 = Soliton::new(w.clone(), 1.0, -0.5).unwrap().with_kernel(k.clone());
        let s2 = Soliton::new(w, -1.0, 0.5).unwrap().with_kernel(k);
        MultiSolitonConfig::new(vec![s1, s2]).unwrap().with_parameters(vec![a, -0.5 * a], vec![vec![0.01], vec![0.02]]).unwrap()
    }

    #[test]
    fn decomposition_reconstructs_g() {
        let cfg = two_w(0.03);
        let g = assemble_g(&cfg, 12.0).unwrap();
        let parts = decompose_g(&cfg, 12.0).unwrap();
        for x in [[0.3, 0.2, -0.1, 0.5], [-6.0, 1.0, 0.0, 0.3], [5.5, 0.0, 0.7, -0.2], [0.0, 0.0, 0.0, 2.0]] {
            let (a, b) = (g.value(&x), parts.value_sum(&x));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn single_soliton_has_no_interaction() {
        let s = Soliton::new(ground_state(), 1.0, 0.3).unwrap();
        let cfg = MultiSolitonConfig::new(vec![s]).unwrap();
        let g = assemble_g(&cfg, 10.0).unwrap();
        assert_eq!(g.value(&[3.0, 0.1, 0.2, 0.3]), 0.0);
        assert!(cfg.sigma().is_err());
    }

    #[test]
    fn no_corrections_leaves_pure_interaction() {
        let q = surrogate_closed_form();
        let s = |l| Soliton::new(q.clone(), 1.0, l).unwrap();
        let cfg = MultiSolitonConfig::new(vec![s(-0.5), s(0.5)]).unwrap();
        let frame = cfg.frame(10.0).unwrap();
        let x = [4.0, 0.3, 0.1, 0.6];
        let p = frame.parts(&x);
        assert!(p.g2.iter().all(|v| *v == 0.0) && p.g3.iter().all(|v| *v == 0.0));
        assert!((p.g1 - frame.g(&x)).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let w = ground_state();
        let s = |l| Soliton::new(w.clone(), 1.0, l);
        assert!(s(1.0).is_err());
        assert!(MultiSolitonConfig::new(vec![s(0.5).unwrap(), s(-0.5).unwrap()]).is_err());
        assert!(matches!(two_w(0.0).with_parameters(vec![0.08, 0.0], vec![vec![0.05], vec![0.0]]), Err(InteractionError::LargeParameters(_))));
        assert!(two_w(0.0).frame(5.0).is_err());
    }

    #[test]
    fn integral_is_symmetric_in_equal_exponents() {
        let f = bracket().into_field();
        let spec = QuadratureSpec::coarse();
        let a = interaction_integral(&f, &f, (1.5, 1.5), (-0.5, 0.5), 20.0, &spec).unwrap();
        let b = interaction_integral(&f, &f, (1.5, 1.5), (0.5, -0.5), 20.0, &spec).unwrap();
        assert!((a.value - b.value).abs() < 1e-10 * a.value);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(2.5), 0.0);
        assert!((cutoff(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        let d = (cutoff(1.3 + h) - cutoff(1.3 - h)) / (2.0 * h);
        assert!((d - cutoff_derivative(1.3)).abs() < 1e-6);
    }
}
