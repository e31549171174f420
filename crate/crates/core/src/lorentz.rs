//! Lorentz boosts of profiles, the matrix operator `H_ℓ`, and the
//! exponential directions built from the unstable mode.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{
    self, fd, Field, FieldPair, Matrix4, Point4, RadialSpline, ScalarField, Symmetry,
};

#[derive(Debug, Error)]
pub enum LorentzError {
    #[error("boost speed must satisfy |ℓ| < 1, got {0}")]
    Superluminal(f64),
    #[error("unstable rate must be positive, got {0}")]
    BadRate(f64),
}

/// A speed with `|ℓ| < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speed(f64);

impl Speed {
    pub fn new(l: f64) -> Result<Self, LorentzError> {
        if l.is_finite() && l.abs() < 1.0 {
            Ok(Speed(l))
        } else {
            Err(LorentzError::Superluminal(l))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `(1 − ℓ²)^{-1/2}`.
    pub fn gamma(self) -> f64 {
        1.0 / (1.0 - self.0 * self.0).sqrt()
    }

    /// `(1 − ℓ²)^{1/2}`.
    pub fn contraction(self) -> f64 {
        (1.0 - self.0 * self.0).sqrt()
    }
}

/// `f(x₁/√(1−ℓ²), x̄)`.
struct Boosted {
    inner: Field,
    gamma: f64,
}

impl Boosted {
    fn map(&self, x: &Point4) -> Point4 {
        [self.gamma * x[0], x[1], x[2], x[3]]
    }
}

impl ScalarField for Boosted {
    fn value(&self, x: &Point4) -> f64 {
        self.inner.value(&self.map(x))
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let mut g = self.inner.gradient(&self.map(x));
        g[0] *= self.gamma;
        g
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let mut h = self.inner.hessian(&self.map(x));
        for i in 0..4 {
            h[0][i] *= self.gamma;
            h[i][0] *= self.gamma;
        }
        h
    }
    fn symmetry(&self) -> Symmetry {
        self.inner.symmetry()
    }
    fn decay(&self) -> Option<f64> {
        self.inner.decay()
    }
    fn label(&self) -> String {
        format!("boost[{}]", self.inner.label())
    }
}

pub fn boost(f: Field, l: Speed) -> Field {
    if l.get() == 0.0 {
        return f;
    }
    Arc::new(Boosted { inner: f, gamma: l.gamma() })
}

/// `∂ᵢ f` as a field, differentiating the profile's analytic gradient.
struct Partial {
    inner: Field,
    axis: usize,
}

impl ScalarField for Partial {
    fn value(&self, x: &Point4) -> f64 {
        self.inner.gradient(x)[self.axis]
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        self.inner.hessian(x)[self.axis]
    }
    fn symmetry(&self) -> Symmetry {
        crate::states::Generator::Translation(self.axis).symmetry_of(self.inner.symmetry())
    }
    fn decay(&self) -> Option<f64> {
        self.inner.decay().map(|p| p + 1.0)
    }
    fn label(&self) -> String {
        format!("d{}[{}]", self.axis + 1, self.inner.label())
    }
}

pub fn partial(f: Field, axis: usize) -> Field {
    Arc::new(Partial { inner: f, axis })
}

/// `f(x − c e₁)`.
pub fn shift_x1(f: Field, c: f64) -> Field {
    if c == 0.0 {
        return f;
    }
    crate::states::translate(f, [-c, 0.0, 0.0, 0.0])
}

/// `(τ f_ℓ, −τ ℓ ∂₁ f_ℓ)`.
pub fn pair_vector(f: &Field, l: Speed, tau: f64) -> FieldPair {
    let fb = boost(f.clone(), l);
    let first = field::scaled(tau, fb.clone());
    let second = field::scaled(-tau * l.get(), partial(fb, 0));
    FieldPair::joined(first, second)
}

/// First component of `H_ℓ v`: `−Δv₁ − 3Q_ℓ² v₁ − ℓ ∂₁ v₂`.
struct HFirst {
    v1: Field,
    v2: Field,
    q: Field,
    l: f64,
    h: f64,
}

impl ScalarField for HFirst {
    fn value(&self, x: &Point4) -> f64 {
        let q = self.q.value(x);
        -field::laplacian(self.v1.as_ref(), x, self.h, fd::StencilOrder::Fourth)
            - 3.0 * q * q * self.v1.value(x)
            - self.l * self.v2.gradient(x)[0]
    }
    fn symmetry(&self) -> Symmetry {
        self.v1.symmetry().join(self.v2.symmetry()).join(self.q.symmetry())
    }
    fn label(&self) -> String {
        "H1".into()
    }
}

/// `H_ℓ v` with the Laplacian taken by a fourth-order stencil of width `h`.
pub fn apply_h(v: &FieldPair, l: Speed, q: &Field, h: f64) -> FieldPair {
    let qb = boost(q.clone(), l);
    let first: Field = Arc::new(HFirst { v1: v.first.clone(), v2: v.second.clone(), q: qb, l: l.get(), h });
    let second = field::combination(vec![(l.get(), partial(v.first.clone(), 0)), (1.0, v.second.clone())]);
    FieldPair::joined(first, second)
}

/// Components of `Υ^±` evaluated in log space so the exponential weight
/// `e^{∓ℓλγ x₁}` never overflows against the decay of the mode.
struct ExpComponent {
    mode: Arc<RadialSpline>,
    l: f64,
    gamma: f64,
    rate: f64,
    sign: f64,
    second: bool,
}

impl ScalarField for ExpComponent {
    fn value(&self, x: &Point4) -> f64 {
        let gx1 = self.gamma * x[0];
        let rho = (gx1 * gx1 + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
        let mu = self.l * self.rate * self.gamma;
        let (log_y, sgn) = self.mode.log_abs(rho);
        if !log_y.is_finite() {
            return 0.0;
        }
        let weight = sgn * (log_y - self.sign * mu * x[0]).exp();
        if !self.second {
            return weight;
        }
        // −(ℓ ∂₁Y_ℓ ∓ λγ Y_ℓ) e^{∓μx₁}, with ∂₁Y_ℓ = γ Y'(ρ) γx₁/ρ.
        let (y, dy, _) = self.mode.eval(rho);
        let ratio = if y != 0.0 { dy / y } else { 0.0 };
        let radial = if rho > 0.0 { self.l * self.gamma * ratio * gx1 / rho } else { 0.0 };
        -(radial - self.sign * self.rate * self.gamma) * weight
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::Cylindrical
    }
    fn decay(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
    fn label(&self) -> String {
        format!("Y{}{}", if self.sign > 0.0 { "+" } else { "-" }, if self.second { "2" } else { "1" })
    }
}

/// Exponential directions of one boosted soliton.
#[derive(Clone, Debug)]
pub struct ExpDirection {
    pub speed: Speed,
    /// Unstable rate `λ` of the unboosted mode.
    pub rate: f64,
    /// `Υ⁺`, growing like `e^{α t}` in the moving frame.
    pub upsilon_plus: FieldPair,
    /// `Υ⁻`, decaying like `e^{−α t}`.
    pub upsilon_minus: FieldPair,
    /// `Z⁺ = H_ℓ Υ⁺`, detects the decaying direction.
    pub z_plus: FieldPair,
    /// `Z⁻ = H_ℓ Υ⁻`, detects the growing direction.
    pub z_minus: FieldPair,
}

impl ExpDirection {
    /// `α = λ √(1 − ℓ²)`.
    pub fn alpha(&self) -> f64 {
        self.rate * self.speed.contraction()
    }

    /// All four pairs translated to the soliton centre `c e₁`.
    pub fn centred_at(&self, c: f64) -> ExpDirection {
        let sh = |p: &FieldPair| FieldPair::joined(shift_x1(p.first.clone(), c), shift_x1(p.second.clone(), c));
        ExpDirection {
            speed: self.speed,
            rate: self.rate,
            upsilon_plus: sh(&self.upsilon_plus),
            upsilon_minus: sh(&self.upsilon_minus),
            z_plus: sh(&self.z_plus),
            z_minus: sh(&self.z_minus),
        }
    }
}

/// Builds `Υ^±` and `Z^± = ∓α J Υ^±` from the normalized unstable mode.
pub fn exp_directions(mode: Arc<RadialSpline>, rate: f64, l: Speed) -> Result<ExpDirection, LorentzError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(LorentzError::BadRate(rate));
    }
    let make = |sign: f64| {
        let c = |second: bool| -> Field {
            Arc::new(ExpComponent { mode: mode.clone(), l: l.get(), gamma: l.gamma(), rate, sign, second })
        };
        FieldPair { first: c(false), second: c(true) }
    };
    let (up, um) = (make(1.0), make(-1.0));
    let alpha = rate * l.contraction();
    // Z± = ∓α J Υ±, with J(a, b) = (b, −a).
    let zp = up.rotate_j().scaled(-alpha);
    let zm = um.rotate_j().scaled(alpha);
    Ok(ExpDirection { speed: l, rate, upsilon_plus: up, upsilon_minus: um, z_plus: zp, z_minus: zm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::ground_state;

    #[test]
    fn speed_validation() {
        assert!(Speed::new(1.0).is_err());
        assert!(Speed::new(-0.999).is_ok());
        assert!(Speed::new(f64::NAN).is_err());
    }

    #[test]
    fn boost_at_zero_speed_is_identity() {
        let w = ground_state();
        let b = boost(w.clone(), Speed::new(0.0).unwrap());
        let x = [0.3, 0.2, 0.1, 0.5];
        assert_eq!(b.value(&x), w.value(&x));
    }

    #[test]
    fn boosted_gradient_matches_fd() {
        let b = boost(ground_state(), Speed::new(0.6).unwrap());
        let x = [0.7, 0.2, -0.1, 0.5];
        let g = b.gradient(&x);
        let n = fd::gradient(&|p| b.value(p), &x, 1e-3);
        for i in 0..4 {
            assert!((g[i] - n[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_vector_second_component() {
        let l = Speed::new(0.5).unwrap();
        let p = pair_vector(&ground_state(), l, 2.0);
        let x = [0.4, 0.0, 0.0, 0.3];
        let wb = boost(ground_state(), l);
        assert!((p.second.value(&x) + 2.0 * 0.5 * wb.gradient(&x)[0]).abs() < 1e-14);
    }
}
