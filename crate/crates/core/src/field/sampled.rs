//! Grid-sampled fields with local cubic interpolation.
//!
//! Samples live on a tensor grid in reduced coordinates. Radial axes are
//! extended by even reflection, so interpolants stay smooth across the axis.
//! Outside the grid a sampled field evaluates to zero.

use serde::{Deserialize, Serialize};

use super::{FieldError, Matrix4, Point4, ScalarField, Symmetry};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub count: usize,
    /// Reflect evenly about zero; requires `min` to be `0` or `step / 2`.
    pub radial: bool,
}

impl Axis {
    pub fn new(min: f64, step: f64, count: usize, radial: bool) -> Result<Self, FieldError> {
        if !(step > 0.0) || !step.is_finite() || !min.is_finite() {
            return Err(FieldError::InvalidGrid(format!("bad axis spacing {step} from {min}")));
        }
        if count < 4 {
            return Err(FieldError::InvalidGrid(format!("axis needs at least 4 samples, got {count}")));
        }
        if radial {
            let vertex = min.abs() < 1e-12 * step;
            let cell = (min - 0.5 * step).abs() < 1e-12 * step;
            if !(vertex || cell) {
                return Err(FieldError::InvalidGrid(format!("radial axis must start at 0 or step/2, got {min}")));
            }
        }
        Ok(Axis { min, step, count, radial })
    }

    /// Cell-centred radial axis on `[0, max]`.
    pub fn cell_radial(max: f64, count: usize) -> Result<Self, FieldError> {
        let step = max / count as f64;
        Axis::new(0.5 * step, step, count, true)
    }

    /// Cell-centred axis on `[lo, hi]`.
    pub fn cell(lo: f64, hi: f64, count: usize) -> Result<Self, FieldError> {
        let step = (hi - lo) / count as f64;
        Axis::new(lo + 0.5 * step, step, count, false)
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn max(&self) -> f64 {
        self.coord(self.count - 1)
    }

    fn mirror(&self, i: isize) -> usize {
        if i >= 0 {
            return i as usize;
        }
        if self.min.abs() < 0.25 * self.step {
            (-i) as usize
        } else {
            (-i - 1) as usize
        }
    }

    /// Four sample indices with value and derivative weights at `s`, or `None` outside.
    pub(crate) fn stencil(&self, s: f64) -> Option<([usize; 4], [f64; 4], [f64; 4], bool)> {
        let p = (s - self.min) / self.step;
        let n = self.count as isize;
        if p > n as f64 - 0.5 || (!self.radial && p < -0.5) || !p.is_finite() {
            return None;
        }
        let mut i0 = p.floor() as isize - 1;
        let mut one_sided = false;
        if !self.radial && i0 < 0 {
            i0 = 0;
            one_sided = true;
        }
        if i0 + 3 > n - 1 {
            i0 = n - 4;
            one_sided = true;
        }
        let t = p - i0 as f64;
        let mut idx = [0usize; 4];
        for (k, slot) in idx.iter_mut().enumerate() {
            *slot = self.mirror(i0 + k as isize);
        }
        let (w, dw) = lagrange4(t);
        let dw = dw.map(|d| d / self.step);
        Some((idx, w, dw, one_sided))
    }
}

/// Cubic Lagrange weights on nodes 0..3 and their derivatives.
fn lagrange4(t: f64) -> ([f64; 4], [f64; 4]) {
    let d = [t, t - 1.0, t - 2.0, t - 3.0];
    let denom = [-6.0, 2.0, -2.0, 6.0];
    let mut w = [0.0; 4];
    let mut dw = [0.0; 4];
    for k in 0..4 {
        let mut prod = 1.0;
        let mut dsum = 0.0;
        for m in 0..4 {
            if m == k {
                continue;
            }
            let mut term = 1.0;
            for q in 0..4 {
                if q != k && q != m {
                    term *= d[q];
                }
            }
            dsum += term;
            prod *= d[m];
        }
        w[k] = prod / denom[k];
        dw[k] = dsum / denom[k];
    }
    (w, dw)
}

/// Samples on a tensor grid of reduced coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledField {
    pub symmetry: Symmetry,
    pub axes: Vec<Axis>,
    /// Row-major with the last axis fastest.
    pub values: Vec<f64>,
    /// Optional derivatives along each reduced axis, same layout as `values`.
    pub gradient: Option<Vec<Vec<f64>>>,
    pub label: String,
}

impl SampledField {
    pub fn new(symmetry: Symmetry, axes: Vec<Axis>, values: Vec<f64>) -> Result<Self, FieldError> {
        if axes.len() != symmetry.reduced_dim() {
            return Err(FieldError::InvalidGrid(format!(
                "{symmetry:?} needs {} axes, got {}",
                symmetry.reduced_dim(),
                axes.len()
            )));
        }
        let n: usize = axes.iter().map(|a| a.count).product();
        if values.len() != n {
            return Err(FieldError::InvalidGrid(format!("expected {n} samples, got {}", values.len())));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::InvalidGrid(format!("non-finite sample at index {bad}")));
        }
        let radial_expected: Vec<bool> = match symmetry {
            Symmetry::Cylindrical => vec![false, true],
            Symmetry::Bicylindrical => vec![false, false, true],
            Symmetry::Full => vec![false; 4],
        };
        for (a, want) in axes.iter().zip(&radial_expected) {
            if a.radial != *want {
                return Err(FieldError::InvalidGrid("radial flags do not match symmetry".into()));
            }
        }
        Ok(SampledField { symmetry, axes, values, gradient: None, label: "sampled".into() })
    }

    /// Samples a closed-form field on the grid.
    pub fn sample(f: &dyn ScalarField, symmetry: Symmetry, axes: Vec<Axis>) -> Result<Self, FieldError> {
        let n: usize = axes.iter().map(|a| a.count).product();
        let mut values = Vec::with_capacity(n);
        let mut red = vec![0.0; axes.len()];
        for flat in 0..n {
            let mut rem = flat;
            for k in (0..axes.len()).rev() {
                red[k] = axes[k].coord(rem % axes[k].count);
                rem /= axes[k].count;
            }
            values.push(f.value(&symmetry.representative(&red)));
        }
        SampledField::new(symmetry, axes, values)
    }

    pub fn with_gradient(mut self, gradient: Vec<Vec<f64>>) -> Result<Self, FieldError> {
        if gradient.len() != self.axes.len() || gradient.iter().any(|g| g.len() != self.values.len()) {
            return Err(FieldError::InvalidGrid("gradient layout does not match samples".into()));
        }
        self.gradient = Some(gradient);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Gradients near the grid edge use shifted, one-sided stencils.
    pub fn one_sided_at(&self, x: &Point4) -> bool {
        let red = self.symmetry.reduce(x);
        self.axes
            .iter()
            .zip(red.iter())
            .any(|(a, s)| a.stencil(*s).map(|st| st.3).unwrap_or(false))
    }

    fn interpolate(&self, data: &[f64], red: &[f64; 4]) -> Option<(f64, [f64; 4])> {
        let d = self.axes.len();
        let mut st = Vec::with_capacity(d);
        for k in 0..d {
            st.push(self.axes[k].stencil(red[k])?);
        }
        let mut value = 0.0;
        let mut grad = [0.0; 4];
        let combos = 4usize.pow(d as u32);
        for c in 0..combos {
            let mut rem = c;
            let mut flat = 0usize;
            let mut w = 1.0;
            let mut parts = [0usize; 4];
            for k in (0..d).rev() {
                parts[k] = rem % 4;
                rem /= 4;
            }
            for k in 0..d {
                flat = flat * self.axes[k].count + st[k].0[parts[k]];
                w *= st[k].1[parts[k]];
            }
            let v = data[flat];
            value += w * v;
            for (g, gk) in grad.iter_mut().enumerate().take(d) {
                let mut wg = 1.0;
                for k in 0..d {
                    wg *= if k == g { st[k].2[parts[k]] } else { st[k].1[parts[k]] };
                }
                *gk += wg * v;
            }
        }
        Some((value, grad))
    }

    fn lift_gradient(&self, x: &Point4, red: &[f64; 4], g: &[f64; 4]) -> Point4 {
        match self.symmetry {
            Symmetry::Full => *g,
            Symmetry::Cylindrical => {
                let r = red[1];
                if r > 0.0 {
                    [g[0], g[1] * x[1] / r, g[1] * x[2] / r, g[1] * x[3] / r]
                } else {
                    [g[0], 0.0, 0.0, 0.0]
                }
            }
            Symmetry::Bicylindrical => {
                let rho = red[2];
                let (a, b) = if rho > 0.0 { (g[2] * x[1] / rho, g[2] * x[2] / rho) } else { (0.0, 0.0) };
                [g[0], a, b, g[1]]
            }
        }
    }
}

impl ScalarField for SampledField {
    fn value(&self, x: &Point4) -> f64 {
        let red = self.symmetry.reduce(x);
        self.interpolate(&self.values, &red).map(|v| v.0).unwrap_or(0.0)
    }

    fn gradient(&self, x: &Point4) -> Point4 {
        let red = self.symmetry.reduce(x);
        let g = match &self.gradient {
            Some(stored) => {
                let mut g = [0.0; 4];
                for (k, comp) in stored.iter().enumerate() {
                    g[k] = self.interpolate(comp, &red).map(|v| v.0).unwrap_or(0.0);
                }
                g
            }
            None => match self.interpolate(&self.values, &red) {
                Some((_, g)) => g,
                None => return [0.0; 4],
            },
        };
        self.lift_gradient(x, &red, &g)
    }

    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Asymptotic model `log|f(r)| = c − κ r − β log r` used past the trusted radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub rate: f64,
    pub power: f64,
}

/// Even radial profile on R⁴ stored as a natural cubic spline in `r = |x|`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialSpline {
    first: f64,
    step: f64,
    values: Vec<f64>,
    second: Vec<f64>,
    tail: Option<(TailModel, f64, f64, f64)>,
    label: String,
}

impl RadialSpline {
    /// `values[i]` is the sample at `first + i·step`, with `first` equal to `0` or `step / 2`.
    pub fn new(first: f64, step: f64, values: Vec<f64>) -> Result<Self, FieldError> {
        Axis::new(first, step, values.len(), true)?;
        let n = values.len();
        let vertex = first.abs() < 0.25 * step;
        // Tridiagonal system for second derivatives; even ghost on the left, natural on the right.
        let mut sub = vec![1.0; n];
        let mut diag = vec![4.0; n];
        let mut sup = vec![1.0; n];
        let mut rhs = vec![0.0; n];
        let h2 = step * step;
        for i in 1..n - 1 {
            rhs[i] = 6.0 * (values[i - 1] - 2.0 * values[i] + values[i + 1]) / h2;
        }
        if vertex {
            sup[0] = 2.0;
            rhs[0] = 12.0 * (values[1] - values[0]) / h2;
        } else {
            diag[0] = 5.0;
            rhs[0] = 6.0 * (values[1] - values[0]) / h2;
        }
        diag[n - 1] = 1.0;
        sub[n - 1] = 0.0;
        rhs[n - 1] = 0.0;
        let second = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        Ok(RadialSpline { first, step, values, second, tail: None, label: "radial".into() })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Switches to the asymptotic model beyond `trusted`, matched in value there.
    pub fn with_tail(mut self, model: TailModel, trusted: f64) -> Self {
        let v = self.eval_spline(trusted).0;
        let sign = if v < 0.0 { -1.0 } else { 1.0 };
        let c = v.abs().max(f64::MIN_POSITIVE).ln() + model.rate * trusted + model.power * trusted.ln();
        self.tail = Some((model, trusted, c, sign));
        self
    }

    pub fn trusted_radius(&self) -> f64 {
        self.tail.map(|t| t.1).unwrap_or(self.first + (self.values.len() - 1) as f64 * self.step)
    }

    fn sample(&self, i: isize) -> (f64, f64) {
        let vertex = self.first.abs() < 0.25 * self.step;
        let j = if i >= 0 {
            i as usize
        } else if vertex {
            (-i) as usize
        } else {
            (-i - 1) as usize
        };
        (self.values[j], self.second[j])
    }

    /// Spline value and first two derivatives.
    fn eval_spline(&self, r: f64) -> (f64, f64, f64) {
        let n = self.values.len() as isize;
        let last = self.first + (n - 1) as f64 * self.step;
        if r > last {
            return (0.0, 0.0, 0.0);
        }
        let p = (r - self.first) / self.step;
        let i = (p.floor() as isize).min(n - 2);
        let (y0, m0) = self.sample(i);
        let (y1, m1) = self.sample(i + 1);
        let h = self.step;
        let a = (p - i as f64) * h;
        let b = h - a;
        let v = m0 * b.powi(3) / (6.0 * h) + m1 * a.powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * b
            + (y1 / h - m1 * h / 6.0) * a;
        let d = -m0 * b * b / (2.0 * h) + m1 * a * a / (2.0 * h) - (y0 / h - m0 * h / 6.0) + (y1 / h - m1 * h / 6.0);
        let dd = (m0 * b + m1 * a) / h;
        (v, d, dd)
    }

    /// Profile value and first two radial derivatives.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        if let Some((model, trusted, c, sign)) = self.tail {
            if r > trusted {
                let v = sign * (c - model.rate * r - model.power * r.ln()).exp();
                let k = -model.rate - model.power / r;
                let d = v * k;
                let dd = v * (k * k + model.power / (r * r));
                return (v, d, dd);
            }
        }
        self.eval_spline(r)
    }

    /// `log|f(r)|` and sign; stays finite far beyond double underflow.
    pub fn log_abs(&self, r: f64) -> (f64, f64) {
        if let Some((model, trusted, c, sign)) = self.tail {
            if r > trusted {
                return (c - model.rate * r - model.power * r.ln(), sign);
            }
        }
        let v = self.eval_spline(r).0;
        (v.abs().ln(), v.signum())
    }
}

impl ScalarField for RadialSpline {
    fn value(&self, x: &Point4) -> f64 {
        self.eval(super::norm4(x)).0
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let r = super::norm4(x);
        if r == 0.0 {
            return [0.0; 4];
        }
        let d = self.eval(r).1;
        x.map(|xi| d * xi / r)
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let r = super::norm4(x);
        let (_, d, dd) = self.eval(r);
        if r < 1e-12 {
            return std::array::from_fn(|i| std::array::from_fn(|j| if i == j { dd } else { 0.0 }));
        }
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let pij = x[i] * x[j] / (r * r);
                let delta = if i == j { 1.0 } else { 0.0 };
                dd * pij + d / r * (delta - pij)
            })
        })
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::Cylindrical
    }
    fn decay(&self) -> Option<f64> {
        self.tail.map(|_| f64::INFINITY)
    }
    fn far_field(&self) -> Option<f64> {
        self.tail.map(|_| 0.0)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let f = FnField::new("c", Symmetry::Cylindrical, |x| {
            let r2 = x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
            x[0].powi(3) - 2.0 * x[0] + r2
        });
        let axes = vec![Axis::cell(-3.0, 3.0, 30).unwrap(), Axis::cell_radial(3.0, 15).unwrap()];
        let s = SampledField::sample(&f, Symmetry::Cylindrical, axes).unwrap();
        for x in [[0.31, 0.2, 0.1, 0.05], [-1.7, 0.0, 1.1, 0.4], [2.2, 0.01, 0.0, 0.0]] {
            assert!((s.value(&x) - f.value(&x)).abs() < 1e-10, "{x:?}");
            let g = s.gradient(&x);
            let ge = f.gradient(&x);
            for i in 0..4 {
                assert!((g[i] - ge[i]).abs() < 1e-7);
            }
        }
        assert_eq!(s.value(&[10.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn spline_reproduces_smooth_even_profile() {
        for first in [0.0, 0.025] {
            let h = 0.05;
            let vals: Vec<f64> = (0..400).map(|i| (-(first + i as f64 * h).powi(2)).exp()).collect();
            let s = RadialSpline::new(first, h, vals).unwrap();
            for r in [0.0, 0.013, 0.5, 1.37, 3.0] {
                let (v, d, _) = s.eval(r);
                assert!((v - (-r * r).exp()).abs() < 1e-6, "r={r}");
                assert!((d + 2.0 * r * (-r * r).exp()).abs() < 1e-4, "r={r}");
            }
        }
    }

    #[test]
    fn tail_is_continuous_and_log_stable() {
        let h = 0.05;
        let vals: Vec<f64> = (0..400).map(|i| (-(0.025 + i as f64 * h)).exp()).collect();
        let s = RadialSpline::new(0.025, h, vals).unwrap().with_tail(TailModel { rate: 1.0, power: 0.0 }, 10.0);
        let below = s.eval(10.0 - 1e-9).0;
        let above = s.eval(10.0 + 1e-9).0;
        assert!((below - above).abs() < 1e-9);
        let (lg, sign) = s.log_abs(2000.0);
        assert!((lg + 2000.0).abs() < 1e-4);
        assert_eq!(sign, 1.0);
    }
}
