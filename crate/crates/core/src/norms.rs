//! Inner products and norms of the energy space `Ḣ¹ × L²` on R⁴.

use thiserror::Error;

use crate::field::{dot4, norm4, FieldError, FieldPair, ScalarField};
use crate::quadrature::{integrate_with_decay, QuadError, QuadratureSpec};

#[derive(Debug, Error)]
pub enum NormError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

fn product_decay(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? + b?)
}

fn same_symmetry(f: &dyn ScalarField, g: &dyn ScalarField) -> Result<(), NormError> {
    if f.symmetry() != g.symmetry() {
        return Err(FieldError::SymmetryMismatch { left: f.symmetry(), right: g.symmetry() }.into());
    }
    Ok(())
}

/// `∫ f g`. Both tags must agree; promote explicitly otherwise.
pub fn inner_l2(f: &dyn ScalarField, g: &dyn ScalarField, spec: &QuadratureSpec) -> Result<f64, NormError> {
    same_symmetry(f, g)?;
    let decay = product_decay(f.decay(), g.decay());
    Ok(integrate_with_decay(&|x| f.value(x) * g.value(x), f.symmetry(), decay, spec)?.value)
}

/// `∫ ∇f·∇g`.
pub fn inner_hdot1(f: &dyn ScalarField, g: &dyn ScalarField, spec: &QuadratureSpec) -> Result<f64, NormError> {
    same_symmetry(f, g)?;
    let decay = product_decay(f.decay().map(|p| p + 1.0), g.decay().map(|p| p + 1.0));
    let integrand = |x: &_| dot4(&f.gradient(x), &g.gradient(x));
    Ok(integrate_with_decay(&integrand, f.symmetry(), decay, spec)?.value)
}

pub fn norm_l2(f: &dyn ScalarField, spec: &QuadratureSpec) -> Result<f64, NormError> {
    Ok(inner_l2(f, f, spec)?.max(0.0).sqrt())
}

pub fn norm_hdot1(f: &dyn ScalarField, spec: &QuadratureSpec) -> Result<f64, NormError> {
    Ok(inner_hdot1(f, f, spec)?.max(0.0).sqrt())
}

/// Componentwise `L²` pairing of two pairs.
pub fn inner_pair_l2(p: &FieldPair, q: &FieldPair, spec: &QuadratureSpec) -> Result<f64, NormError> {
    Ok(inner_l2(&*p.first, &*q.first, spec)? + inner_l2(&*p.second, &*q.second, spec)?)
}

/// Energy pairing `(p₁,q₁)_{Ḣ¹} + (p₂,q₂)_{L²}`.
pub fn inner_pair_energy(p: &FieldPair, q: &FieldPair, spec: &QuadratureSpec) -> Result<f64, NormError> {
    Ok(inner_hdot1(&*p.first, &*q.first, spec)? + inner_l2(&*p.second, &*q.second, spec)?)
}

pub fn norm_pair(p: &FieldPair, spec: &QuadratureSpec) -> Result<f64, NormError> {
    Ok(inner_pair_energy(p, p, spec)?.max(0.0).sqrt())
}

/// Returns `(‖f‖_{L⁴}/‖∇f‖, ‖f/|x|‖_{L²}/‖∇f‖)`, both zero for `f ≡ 0`.
pub fn hardy_sobolev_check(f: &dyn ScalarField, spec: &QuadratureSpec) -> Result<(f64, f64), NormError> {
    let grad = norm_hdot1(f, spec)?;
    let sym = f.symmetry();
    let l4 = integrate_with_decay(&|x| f.value(x).powi(4), sym, f.decay().map(|p| 4.0 * p), spec)?.value;
    let hardy = integrate_with_decay(
        &|x| {
            let r = norm4(x);
            if r == 0.0 {
                0.0
            } else {
                (f.value(x) / r).powi(2)
            }
        },
        sym,
        f.decay().map(|p| 2.0 * p + 2.0),
        spec,
    )?
    .value;
    if grad == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((l4.max(0.0).powf(0.25) / grad, hardy.max(0.0).sqrt() / grad))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::field::{zero, Symmetry};
    use crate::states::{dilate, ground_state};

    #[test]
    fn ground_state_energy_norm() {
        let w = ground_state();
        let spec = QuadratureSpec::default();
        let h = inner_hdot1(&*w, &*w, &spec).unwrap();
        assert!((h - 32.0 * PI * PI / 3.0).abs() < 1e-6);
        let z = FieldPair::new(zero(Symmetry::Cylindrical), zero(Symmetry::Cylindrical)).unwrap();
        assert_eq!(norm_pair(&z, &spec).unwrap(), 0.0);
    }

    #[test]
    fn ratios_are_scale_invariant() {
        let spec = QuadratureSpec::default();
        let w = ground_state();
        let (s, h) = hardy_sobolev_check(&*w, &spec).unwrap();
        let (s2, h2) = hardy_sobolev_check(&*dilate(w, 3.0).unwrap(), &spec).unwrap();
        assert!(s > 0.0 && h > 0.0 && h <= 1.0);
        assert!((s - s2).abs() < 1e-6 && (h - h2).abs() < 1e-6);
        assert_eq!(hardy_sobolev_check(&*zero(Symmetry::Full), &spec).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn mismatched_tags_rejected() {
        let spec = QuadratureSpec::default();
        let w = ground_state();
        let z = zero(Symmetry::Full);
        assert!(inner_l2(&*w, &*z, &spec).is_err());
    }
}
