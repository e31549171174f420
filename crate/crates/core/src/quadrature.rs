//! Quadrature over R⁴ in the reduced coordinates selected by a symmetry tag.
//!
//! Cylindrical integrals use `(x₁, r)` with weight `4π r²`, bicylindrical
//! ones use `(x₁, x₄, ρ)` with weight `2π ρ`. Full integrals use either a
//! Cartesian tensor grid or hyperspherical coordinates about the origin.
//! Panels are graded geometrically away from feature points on the `x₁`
//! axis and away from the symmetry axes. Sums are reduced in a fixed order,
//! so results do not depend on thread scheduling.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Point4, ScalarField, Symmetry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("tolerance not reached: estimate {estimate}, error {error}")]
    ToleranceNotReached { estimate: f64, error: f64 },
    #[error("non-finite integrand at {point:?}")]
    NonFinite { point: Point4 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    TensorGauss,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FullScheme {
    Cartesian,
    Hyperspherical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub nodes_per_panel: usize,
    /// Truncation radius measured from the outermost feature point.
    pub r_max: f64,
    /// Width of the panels touching a feature point.
    pub min_panel: f64,
    /// Ratio between consecutive panel widths.
    pub growth: f64,
    /// Feature points on the `x₁` axis; grading is centred on each.
    pub centers: Vec<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub full: FullScheme,
    /// Angular nodes per direction for the hyperspherical scheme.
    pub angular_nodes: usize,
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            scheme: Scheme::TensorGauss,
            nodes_per_panel: 8,
            r_max: 200.0,
            min_panel: 0.25,
            growth: 1.6,
            centers: vec![0.0],
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            full: FullScheme::Hyperspherical,
            angular_nodes: 24,
            max_refinements: 3,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), QuadError> {
        let bad = |m: &str| Err(QuadError::InvalidSpec(m.to_string()));
        if self.nodes_per_panel < 2 || self.nodes_per_panel > 64 {
            return bad("nodes_per_panel must lie in 2..=64");
        }
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return bad("r_max must be positive");
        }
        if !(self.min_panel > 0.0) || self.min_panel > self.r_max {
            return bad("min_panel must lie in (0, r_max]");
        }
        if !(self.growth >= 1.0) || self.growth > 8.0 {
            return bad("growth must lie in [1, 8]");
        }
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.centers.is_empty() || self.centers.iter().any(|c| !c.is_finite()) {
            return bad("at least one finite feature point is required");
        }
        if self.angular_nodes < 4 {
            return bad("angular_nodes must be at least 4");
        }
        Ok(())
    }

    pub fn with_centers(mut self, centers: Vec<f64>) -> Self {
        self.centers = centers;
        self
    }

    pub fn with_r_max(mut self, r: f64) -> Self {
        self.r_max = r;
        self
    }

    pub fn with_nodes(mut self, n: usize) -> Self {
        self.nodes_per_panel = n;
        self
    }

    /// A cheaper variant for bulk three-dimensional integrals.
    pub fn coarse() -> Self {
        QuadratureSpec { nodes_per_panel: 5, min_panel: 0.4, growth: 2.0, r_max: 120.0, ..Default::default() }
    }

    fn refined(&self) -> Self {
        QuadratureSpec { min_panel: self.min_panel * 0.5, growth: self.growth.sqrt().max(1.0), ..self.clone() }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn graded_from(center: f64, lo: f64, hi: f64, h0: f64, growth: f64, out: &mut Vec<f64>) {
    out.push(center.clamp(lo, hi));
    for dir in [-1.0, 1.0] {
        let mut pos = center;
        let mut h = h0;
        loop {
            pos += dir * h;
            if pos <= lo || pos >= hi {
                break;
            }
            out.push(pos);
            h *= growth;
        }
    }
}

/// Sorted panel breakpoints on `[lo, hi]` graded about the given points.
pub fn breakpoints(lo: f64, hi: f64, features: &[f64], h0: f64, growth: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    for &c in features {
        if c >= lo && c <= hi {
            graded_from(c, lo, hi, h0, growth, &mut pts);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(&q) if p - q < 0.25 * h0 => {
                if p == hi {
                    *out.last_mut().expect("nonempty") = hi;
                }
            }
            _ => out.push(p),
        }
    }
    out
}

/// One-dimensional composite rule.
#[derive(Clone, Debug, Default)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn composite(breaks: &[f64], n: usize) -> Self {
        let (gx, gw) = gauss_legendre(n);
        let mut nodes = Vec::with_capacity(n * breaks.len());
        let mut weights = Vec::with_capacity(n * breaks.len());
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, wt) in gx.iter().zip(&gw) {
                nodes.push(m + h * x);
                weights.push(h * wt);
            }
        }
        Rule1D { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Precomputed tensor rule for one symmetry class.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub symmetry: Symmetry,
    pub spec: QuadratureSpec,
    axes: Vec<Rule1D>,
    hyperspherical: bool,
}

impl Quadrature {
    pub fn new(symmetry: Symmetry, spec: &QuadratureSpec) -> Result<Self, QuadError> {
        Self::with_breaks(symmetry, spec, &[])
    }

    /// Adds extra breakpoints on the `x₁` axis, e.g. where an integrand has a kink.
    pub fn with_breaks(symmetry: Symmetry, spec: &QuadratureSpec, x1_breaks: &[f64]) -> Result<Self, QuadError> {
        spec.validate()?;
        let n = spec.nodes_per_panel;
        let (h0, g, r) = (spec.min_panel, spec.growth, spec.r_max);
        let cmin = spec.centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let cmax = spec.centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut feats = spec.centers.clone();
        feats.extend_from_slice(x1_breaks);
        let x1 = || {
            let mut b = breakpoints(cmin - r, cmax + r, &feats, h0, g);
            for &k in x1_breaks {
                if k > cmin - r && k < cmax + r && !b.iter().any(|&p| (p - k).abs() < 1e-12) {
                    b.push(k);
                }
            }
            b.sort_by(|a, c| a.partial_cmp(c).expect("finite"));
            Rule1D::composite(&b, n)
        };
        let radial = || Rule1D::composite(&breakpoints(0.0, r, &[0.0], h0, g), n);
        let sym_axis = || Rule1D::composite(&breakpoints(-r, r, &[0.0], h0, g), n);
        let (axes, hyper) = match symmetry {
            Symmetry::Cylindrical => (vec![x1(), radial()], false),
            Symmetry::Bicylindrical => (vec![x1(), sym_axis(), radial()], false),
            Symmetry::Full => match spec.full {
                FullScheme::Cartesian => (vec![x1(), sym_axis(), sym_axis(), sym_axis()], false),
                FullScheme::Hyperspherical => {
                    let m = spec.angular_nodes;
                    let ang = |hi: f64, k: usize| Rule1D::composite(&[0.0, 0.5 * hi, hi], k.div_ceil(2));
                    let phi = Rule1D {
                        nodes: (0..2 * m).map(|i| (i as f64 + 0.5) * PI / m as f64).collect(),
                        weights: vec![PI / m as f64; 2 * m],
                    };
                    (vec![radial(), ang(PI, m), ang(PI, m), phi], true)
                }
            },
        };
        Ok(Quadrature { symmetry, spec: spec.clone(), axes, hyperspherical: hyper })
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    /// Calls `visit(point, weight)` for every node whose outer index is `i`.
    fn visit_slab(&self, i: usize, visit: &mut dyn FnMut(&Point4, f64)) {
        let a0 = &self.axes[0];
        let (u, wu) = (a0.nodes[i], a0.weights[i]);
        if self.hyperspherical {
            let r = u;
            let wr = wu * r * r * r;
            for (chi, wc) in self.axes[1].nodes.iter().zip(&self.axes[1].weights) {
                let (sc, cc) = chi.sin_cos();
                for (th, wt) in self.axes[2].nodes.iter().zip(&self.axes[2].weights) {
                    let (st, ct) = th.sin_cos();
                    let w2 = wr * wc * wt * sc * sc * st;
                    for (ph, wp) in self.axes[3].nodes.iter().zip(&self.axes[3].weights) {
                        let (sp, cp) = ph.sin_cos();
                        let x = [r * cc, r * sc * ct, r * sc * st * cp, r * sc * st * sp];
                        visit(&x, w2 * wp);
                    }
                }
            }
            return;
        }
        match self.symmetry {
            Symmetry::Cylindrical => {
                for (r, wr) in self.axes[1].nodes.iter().zip(&self.axes[1].weights) {
                    visit(&[u, 0.0, 0.0, *r], wu * wr * 4.0 * PI * r * r);
                }
            }
            Symmetry::Bicylindrical => {
                for (x4, w4) in self.axes[1].nodes.iter().zip(&self.axes[1].weights) {
                    for (rho, wr) in self.axes[2].nodes.iter().zip(&self.axes[2].weights) {
                        visit(&[u, *rho, 0.0, *x4], wu * w4 * wr * 2.0 * PI * rho);
                    }
                }
            }
            Symmetry::Full => {
                for (x2, w2) in self.axes[1].nodes.iter().zip(&self.axes[1].weights) {
                    for (x3, w3) in self.axes[2].nodes.iter().zip(&self.axes[2].weights) {
                        for (x4, w4) in self.axes[3].nodes.iter().zip(&self.axes[3].weights) {
                            visit(&[u, *x2, *x3, *x4], wu * w2 * w3 * w4);
                        }
                    }
                }
            }
        }
    }

    /// Integrates several integrands sharing the same nodes.
    pub fn integrate_many<F>(&self, n_out: usize, f: F) -> Vec<f64>
    where
        F: Fn(&Point4, &mut [f64]) + Sync,
    {
        let partials: Vec<Vec<f64>> = (0..self.axes[0].len())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; n_out];
                let mut buf = vec![0.0; n_out];
                self.visit_slab(i, &mut |x, w| {
                    buf.iter_mut().for_each(|b| *b = 0.0);
                    f(x, &mut buf);
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += w * b;
                    }
                });
                acc
            })
            .collect();
        let mut total = vec![0.0; n_out];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }

    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&Point4) -> f64 + Sync,
    {
        self.integrate_many(1, |x, out| out[0] = f(x))[0]
    }

    /// Like [`Quadrature::integrate`], reporting the first non-finite node.
    pub fn try_integrate<F>(&self, f: F) -> Result<f64, QuadError>
    where
        F: Fn(&Point4) -> f64 + Sync,
    {
        let v = self.integrate(&f);
        if v.is_finite() {
            return Ok(v);
        }
        for i in 0..self.axes[0].len() {
            let mut bad = None;
            self.visit_slab(i, &mut |x, _| {
                if bad.is_none() && !f(x).is_finite() {
                    bad = Some(*x);
                }
            });
            if let Some(point) = bad {
                return Err(QuadError::NonFinite { point });
            }
        }
        Err(QuadError::NonFinite { point: [f64::NAN; 4] })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub tail_bound: f64,
    pub r_max: f64,
}

/// Sample directions on S³ used to bound tails and sup norms.
pub fn sphere_directions(n: usize) -> Vec<Point4> {
    let mut dirs = vec![
        [1.0, 0.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, -1.0],
    ];
    let golden = [0.618_033_988_749_895, 0.414_213_562_373_095, 0.732_050_807_568_877];
    for k in 0..n {
        let u: Vec<f64> = golden.iter().map(|g| ((k as f64 + 0.5) * g).fract()).collect();
        let (s1, s2) = (u[0].sqrt(), (1.0 - u[0]).sqrt());
        let (a, b) = (2.0 * PI * u[1], 2.0 * PI * u[2]);
        dirs.push([s1 * a.cos(), s1 * a.sin(), s2 * b.cos(), s2 * b.sin()]);
    }
    dirs
}

/// Smallest radius whose `C |x|^{-p}` tail integral is at most `budget`.
pub fn certified_radius(p: f64, c: f64, budget: f64) -> Option<f64> {
    if p <= 4.0 || c <= 0.0 {
        return if c <= 0.0 { Some(1.0) } else { None };
    }
    Some((2.0 * PI * PI * c / ((p - 4.0) * budget)).powf(1.0 / (p - 4.0)))
}

fn tail_estimate(f: &dyn Fn(&Point4) -> f64, p: f64, r: f64, center: f64) -> f64 {
    if p.is_infinite() {
        return 0.0;
    }
    let c = sphere_directions(64)
        .iter()
        .map(|d| {
            let x = [center + r * d[0], r * d[1], r * d[2], r * d[3]];
            f(&x).abs() * r.powf(p)
        })
        .fold(0.0, f64::max)
        * 2.0;
    if p <= 4.0 {
        return f64::INFINITY;
    }
    2.0 * PI * PI * c * r.powf(4.0 - p) / (p - 4.0)
}

/// Integrates `f` with the given decay exponent over R⁴.
pub fn integrate_with_decay(
    f: &(dyn Fn(&Point4) -> f64 + Sync),
    symmetry: Symmetry,
    decay: Option<f64>,
    spec: &QuadratureSpec,
) -> Result<Integral, QuadError> {
    spec.validate()?;
    let center = spec.centers.iter().sum::<f64>() / spec.centers.len() as f64;
    let mut spec = spec.clone();
    let mut tail = 0.0;
    if let Some(p) = decay {
        tail = tail_estimate(f, p, spec.r_max, center);
        if tail > 0.1 * spec.abs_tol {
            let c = tail * (p - 4.0) / (2.0 * PI * PI) * spec.r_max.powf(p - 4.0);
            if let Some(r) = certified_radius(p, c, 0.1 * spec.abs_tol) {
                if r.is_finite() && r < 1e7 {
                    spec.r_max = spec.r_max.max(r);
                    tail = tail_estimate(f, p, spec.r_max, center);
                }
            }
        }
    }
    let mut last = None;
    for _ in 0..=spec.max_refinements {
        let (value, err) = match spec.scheme {
            Scheme::TensorGauss => {
                let lo = Quadrature::new(symmetry, &spec)?.try_integrate(f)?;
                let hi = Quadrature::new(symmetry, &spec.clone().with_nodes(spec.nodes_per_panel + 2))?
                    .try_integrate(f)?;
                (hi, (hi - lo).abs())
            }
            Scheme::Adaptive => adaptive_reduced(f, symmetry, &spec)?,
        };
        let error = err + tail;
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            return Ok(Integral { value, error, tail_bound: tail, r_max: spec.r_max });
        }
        last = Some((value, error));
        spec = spec.refined();
    }
    let (estimate, error) = last.expect("at least one pass");
    Err(QuadError::ToleranceNotReached { estimate, error })
}

/// Integrates a field over R⁴ using its symmetry tag and decay metadata.
pub fn integrate_r4(f: &dyn ScalarField, spec: &QuadratureSpec) -> Result<Integral, QuadError> {
    integrate_with_decay(&|x| f.value(x), f.symmetry(), f.decay(), spec)
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(m);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for j in 0..7 {
        let (f1, f2) = (f(m - h * GK_X[j]), f(m + h * GK_X[j]));
        k += GK_WK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += GK_WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod on a set of initial panels.
pub fn adaptive_1d(f: &mut dyn FnMut(f64) -> f64, breaks: &[f64], tol: f64, max_panels: usize) -> (f64, f64) {
    let mut panels: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= tol || panels.len() >= max_panels {
            let val = panels.iter().map(|p| p.2).sum();
            return (val, err);
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.partial_cmp(&b.1 .3).expect("finite error"))
            .expect("nonempty");
        let (a, b, _, _) = panels[idx];
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        panels[idx] = (a, m, v1, e1);
        panels.push((m, b, v2, e2));
    }
}

fn adaptive_reduced(
    f: &(dyn Fn(&Point4) -> f64 + Sync),
    symmetry: Symmetry,
    spec: &QuadratureSpec,
) -> Result<(f64, f64), QuadError> {
    let (h0, g, r) = (spec.min_panel, spec.growth, spec.r_max);
    let cmin = spec.centers.iter().cloned().fold(f64::INFINITY, f64::min);
    let cmax = spec.centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bx1 = breakpoints(cmin - r, cmax + r, &spec.centers, h0, g);
    let brad = breakpoints(0.0, r, &[0.0], h0, g);
    let bsym = breakpoints(-r, r, &[0.0], h0, g);
    let tol = spec.abs_tol * 0.5;
    let inner_tol = tol * 1e-2;
    let max_panels = 4000;
    let mut err_total = 0.0;
    let value = match symmetry {
        Symmetry::Cylindrical => {
            let mut outer = |x1: f64| {
                let (v, e) = adaptive_1d(
                    &mut |rr| 4.0 * PI * rr * rr * f(&[x1, 0.0, 0.0, rr]),
                    &brad,
                    inner_tol,
                    max_panels,
                );
                err_total += e;
                v
            };
            let (v, e) = adaptive_1d(&mut outer, &bx1, tol, max_panels);
            err_total = e;
            v
        }
        Symmetry::Bicylindrical => {
            let mut outer = |x1: f64| {
                let mut mid = |x4: f64| {
                    adaptive_1d(
                        &mut |rho| 2.0 * PI * rho * f(&[x1, rho, 0.0, x4]),
                        &brad,
                        inner_tol * 1e-2,
                        max_panels,
                    )
                    .0
                };
                adaptive_1d(&mut mid, &bsym, inner_tol, max_panels).0
            };
            let (v, e) = adaptive_1d(&mut outer, &bx1, tol, max_panels);
            err_total = e;
            v
        }
        Symmetry::Full => {
            return Err(QuadError::InvalidSpec("adaptive scheme supports reduced symmetries only".into()))
        }
    };
    if !value.is_finite() {
        return Err(QuadError::NonFinite { point: [f64::NAN; 4] });
    }
    Ok((value, err_total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [2, 5, 8, 13] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-14);
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * n as i32 - 2)).sum();
            assert!((m - 2.0 / (2 * n - 1) as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn gaussian_in_every_reduction() {
        // ∫ exp(-|x|²) over R⁴ = π².
        let g = |x: &Point4| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3])).exp();
        let spec = QuadratureSpec { r_max: 10.0, nodes_per_panel: 10, ..Default::default() };
        for s in [Symmetry::Cylindrical, Symmetry::Bicylindrical, Symmetry::Full] {
            let v = Quadrature::new(s, &spec).unwrap().integrate(g);
            assert!((v - PI * PI).abs() < 1e-10, "{s:?}: {v}");
        }
        let cart = QuadratureSpec { full: FullScheme::Cartesian, nodes_per_panel: 6, ..spec };
        let v = Quadrature::new(Symmetry::Full, &cart).unwrap().integrate(g);
        assert!((v - PI * PI).abs() < 1e-8, "cartesian: {v}");
    }

    #[test]
    fn adaptive_agrees_with_tensor() {
        // ∫ (1 + |x|²)⁻⁵ over R⁴ = π²/12.
        let g = |x: &Point4| (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).powi(-5);
        let spec = QuadratureSpec { r_max: 60.0, abs_tol: 1e-7, ..Default::default() };
        let t = integrate_with_decay(&g, Symmetry::Cylindrical, Some(10.0), &spec).expect("tensor");
        let a = integrate_with_decay(&g, Symmetry::Cylindrical, Some(10.0), &QuadratureSpec {
            scheme: Scheme::Adaptive,
            ..spec
        })
        .expect("adaptive");
        assert!((t.value - PI * PI / 12.0).abs() < 1e-7, "{}", t.value);
        assert!((t.value - a.value).abs() < 1e-6, "{} {}", t.value, a.value);
    }

    #[test]
    fn tight_tolerance_reports_estimate() {
        let g = |x: &Point4| 1.0 / (1.0 + x[0] * x[0] + x[3] * x[3]).powi(3);
        let spec = QuadratureSpec { r_max: 5.0, abs_tol: 1e-15, rel_tol: 1e-15, max_refinements: 0, ..Default::default() };
        match integrate_with_decay(&g, Symmetry::Cylindrical, None, &spec) {
            Err(QuadError::ToleranceNotReached { estimate, .. }) => assert!(estimate > 0.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = QuadratureSpec { abs_tol: 0.0, ..Default::default() };
        assert!(spec.validate().is_err());
        let spec = QuadratureSpec { nodes_per_panel: 1, ..Default::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn non_finite_nodes_are_reported() {
        let q = Quadrature::new(Symmetry::Cylindrical, &QuadratureSpec::default()).unwrap();
        let r = q.try_integrate(|x| if x[3] > 50.0 { f64::NAN } else { 0.0 });
        assert!(matches!(r, Err(QuadError::NonFinite { .. })));
    }
}
