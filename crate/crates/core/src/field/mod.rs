//! Scalar fields on R⁴ and the combinators used to build profiles.
//!
//! A field carries a symmetry tag that tells the quadrature which reduced
//! coordinates suffice. Tags are ordered: a cylindrical field (depending on
//! `x₁` and `|x̄|`) is also bicylindrical (depending on `x₁`, `x₄` and
//! `|(x₂, x₃)|`), and every field is full.

pub mod container;
pub mod fd;
pub mod sampled;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sampled::{Axis, RadialSpline, SampledField, TailModel};

pub type Point4 = [f64; 4];
pub type Matrix4 = [[f64; 4]; 4];

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("symmetry mismatch: {left:?} vs {right:?}")]
    SymmetryMismatch { left: Symmetry, right: Symmetry },
    #[error("cannot relabel a {from:?} field as {to:?}")]
    InvalidPromotion { from: Symmetry, to: Symmetry },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("malformed container: {0}")]
    Container(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symmetry {
    /// Depends on `x₁` and `|(x₂, x₃, x₄)|`.
    Cylindrical,
    /// Depends on `x₁`, `x₄` and `|(x₂, x₃)|`.
    Bicylindrical,
    Full,
}

impl Symmetry {
    fn rank(self) -> u8 {
        match self {
            Symmetry::Cylindrical => 0,
            Symmetry::Bicylindrical => 1,
            Symmetry::Full => 2,
        }
    }

    /// Weakest tag valid for both.
    pub fn join(self, other: Symmetry) -> Symmetry {
        if self.rank() >= other.rank() {
            self
        } else {
            other
        }
    }

    /// True when every field with tag `other` also has tag `self`.
    pub fn admits(self, other: Symmetry) -> bool {
        self.rank() >= other.rank()
    }

    pub fn reduced_dim(self) -> usize {
        match self {
            Symmetry::Cylindrical => 2,
            Symmetry::Bicylindrical => 3,
            Symmetry::Full => 4,
        }
    }

    /// Maps reduced coordinates to a representative point of R⁴.
    pub fn representative(self, reduced: &[f64]) -> Point4 {
        match self {
            Symmetry::Cylindrical => [reduced[0], 0.0, 0.0, reduced[1]],
            Symmetry::Bicylindrical => [reduced[0], reduced[2], 0.0, reduced[1]],
            Symmetry::Full => [reduced[0], reduced[1], reduced[2], reduced[3]],
        }
    }

    /// Reduced coordinates of a point; radial coordinates are last.
    pub fn reduce(self, x: &Point4) -> [f64; 4] {
        match self {
            Symmetry::Cylindrical => [x[0], (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt(), 0.0, 0.0],
            Symmetry::Bicylindrical => [x[0], x[3], (x[1] * x[1] + x[2] * x[2]).sqrt(), 0.0],
            Symmetry::Full => *x,
        }
    }
}

/// A real field on R⁴.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Point4) -> f64;

    fn gradient(&self, x: &Point4) -> Point4 {
        fd::gradient(&|p| self.value(p), x, fd::DEFAULT_STEP)
    }

    fn hessian(&self, x: &Point4) -> Matrix4 {
        fd::hessian(&|p| self.gradient(p), x, fd::DEFAULT_STEP)
    }

    fn symmetry(&self) -> Symmetry;

    /// Exponent `p` with `|f(x)| = O(|x|^{-p})`, when known.
    fn decay(&self) -> Option<f64> {
        None
    }

    /// `lim |x|² f(x)` as `|x| → ∞`, when it exists and is direction independent.
    fn far_field(&self) -> Option<f64> {
        None
    }

    /// True only for closed forms solving `−Δf = f³` exactly.
    fn exact_stationary(&self) -> bool {
        false
    }

    fn label(&self) -> String {
        "field".to_string()
    }
}

pub type Field = Arc<dyn ScalarField>;

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<{:?}>", self.label(), self.symmetry())
    }
}

pub fn laplacian(f: &dyn ScalarField, x: &Point4, h: f64, order: fd::StencilOrder) -> f64 {
    fd::laplacian(&|p| f.value(p), x, h, order)
}

pub fn norm4(x: &Point4) -> f64 {
    dot4(x, x).sqrt()
}

pub fn dot4(a: &Point4, b: &Point4) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// The zero field with a chosen tag.
#[derive(Clone, Copy, Debug)]
pub struct Zero(pub Symmetry);

impl ScalarField for Zero {
    fn value(&self, _: &Point4) -> f64 {
        0.0
    }
    fn gradient(&self, _: &Point4) -> Point4 {
        [0.0; 4]
    }
    fn hessian(&self, _: &Point4) -> Matrix4 {
        [[0.0; 4]; 4]
    }
    fn symmetry(&self) -> Symmetry {
        self.0
    }
    fn decay(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }
    fn far_field(&self) -> Option<f64> {
        Some(0.0)
    }
    fn label(&self) -> String {
        "0".into()
    }
}

pub fn zero(symmetry: Symmetry) -> Field {
    Arc::new(Zero(symmetry))
}

/// `Σ cₖ fₖ`.
pub struct Combination {
    terms: Vec<(f64, Field)>,
    symmetry: Symmetry,
}

impl ScalarField for Combination {
    fn value(&self, x: &Point4) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let mut g = [0.0; 4];
        for (c, f) in &self.terms {
            let gf = f.gradient(x);
            for i in 0..4 {
                g[i] += c * gf[i];
            }
        }
        g
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let mut h = [[0.0; 4]; 4];
        for (c, f) in &self.terms {
            let hf = f.hessian(x);
            for i in 0..4 {
                for j in 0..4 {
                    h[i][j] += c * hf[i][j];
                }
            }
        }
        h
    }
    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }
    fn decay(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|(_, f)| f.decay())
            .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
    }
    fn far_field(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|(c, f)| f.far_field().map(|v| c * v))
            .try_fold(0.0, |acc, v| v.map(|v| acc + v))
    }
    fn label(&self) -> String {
        let parts: Vec<String> = self.terms.iter().map(|(c, f)| format!("{c}·{}", f.label())).collect();
        parts.join(" + ")
    }
}

pub fn combination(terms: Vec<(f64, Field)>) -> Field {
    let symmetry = terms
        .iter()
        .map(|(_, f)| f.symmetry())
        .fold(Symmetry::Cylindrical, Symmetry::join);
    Arc::new(Combination { terms, symmetry })
}

pub fn scaled(c: f64, f: Field) -> Field {
    combination(vec![(c, f)])
}

pub fn sum(a: Field, b: Field) -> Field {
    combination(vec![(1.0, a), (1.0, b)])
}

pub fn difference(a: Field, b: Field) -> Field {
    combination(vec![(1.0, a), (-1.0, b)])
}

/// Pointwise product of two fields.
pub struct Product {
    a: Field,
    b: Field,
}

impl ScalarField for Product {
    fn value(&self, x: &Point4) -> f64 {
        self.a.value(x) * self.b.value(x)
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let (fa, fb) = (self.a.value(x), self.b.value(x));
        let (ga, gb) = (self.a.gradient(x), self.b.gradient(x));
        std::array::from_fn(|i| ga[i] * fb + fa * gb[i])
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let (fa, fb) = (self.a.value(x), self.b.value(x));
        let (ga, gb) = (self.a.gradient(x), self.b.gradient(x));
        let (ha, hb) = (self.a.hessian(x), self.b.hessian(x));
        std::array::from_fn(|i| {
            std::array::from_fn(|j| ha[i][j] * fb + ga[i] * gb[j] + ga[j] * gb[i] + fa * hb[i][j])
        })
    }
    fn symmetry(&self) -> Symmetry {
        self.a.symmetry().join(self.b.symmetry())
    }
    fn decay(&self) -> Option<f64> {
        Some(self.a.decay()? + self.b.decay()?)
    }
    fn label(&self) -> String {
        format!("({})·({})", self.a.label(), self.b.label())
    }
}

pub fn product(a: Field, b: Field) -> Field {
    Arc::new(Product { a, b })
}

/// Same values, weaker symmetry tag.
struct Relabel {
    inner: Field,
    symmetry: Symmetry,
}

impl ScalarField for Relabel {
    fn value(&self, x: &Point4) -> f64 {
        self.inner.value(x)
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        self.inner.gradient(x)
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        self.inner.hessian(x)
    }
    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }
    fn decay(&self) -> Option<f64> {
        self.inner.decay()
    }
    fn far_field(&self) -> Option<f64> {
        self.inner.far_field()
    }
    fn exact_stationary(&self) -> bool {
        self.inner.exact_stationary()
    }
    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Relabels a field with a weaker tag.
pub fn promote(f: Field, to: Symmetry) -> Result<Field, FieldError> {
    let from = f.symmetry();
    if from == to {
        Ok(f)
    } else if to.admits(from) {
        Ok(Arc::new(Relabel { inner: f, symmetry: to }))
    } else {
        Err(FieldError::InvalidPromotion { from, to })
    }
}

type ValueFn = dyn Fn(&Point4) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Point4) -> Point4 + Send + Sync;

/// Field defined by closures; the gradient falls back to finite differences.
pub struct FnField {
    value: Box<ValueFn>,
    gradient: Option<Box<GradFn>>,
    symmetry: Symmetry,
    decay: Option<f64>,
    far_field: Option<f64>,
    label: String,
}

impl FnField {
    pub fn new(
        label: impl Into<String>,
        symmetry: Symmetry,
        value: impl Fn(&Point4) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnField { value: Box::new(value), gradient: None, symmetry, decay: None, far_field: None, label: label.into() }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Point4) -> Point4 + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_decay(mut self, p: f64) -> Self {
        self.decay = Some(p);
        self
    }

    pub fn with_far_field(mut self, c: f64) -> Self {
        self.far_field = Some(c);
        self
    }

    pub fn into_field(self) -> Field {
        Arc::new(self)
    }
}

impl ScalarField for FnField {
    fn value(&self, x: &Point4) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        match &self.gradient {
            Some(g) => g(x),
            None => fd::gradient(&|p| (self.value)(p), x, fd::DEFAULT_STEP),
        }
    }
    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }
    fn decay(&self) -> Option<f64> {
        self.decay
    }
    fn far_field(&self) -> Option<f64> {
        self.far_field
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Position and velocity components of a wave state.
#[derive(Clone, Debug)]
pub struct FieldPair {
    pub first: Field,
    pub second: Field,
}

impl FieldPair {
    pub fn new(first: Field, second: Field) -> Result<Self, FieldError> {
        let (left, right) = (first.symmetry(), second.symmetry());
        if left != right {
            return Err(FieldError::SymmetryMismatch { left, right });
        }
        Ok(FieldPair { first, second })
    }

    /// Builds a pair after relabelling both parts with their common tag.
    pub fn joined(first: Field, second: Field) -> Self {
        let s = first.symmetry().join(second.symmetry());
        FieldPair {
            first: promote(first, s).expect("join admits both"),
            second: promote(second, s).expect("join admits both"),
        }
    }

    pub fn symmetry(&self) -> Symmetry {
        self.first.symmetry()
    }

    pub fn scaled(&self, c: f64) -> FieldPair {
        FieldPair { first: scaled(c, self.first.clone()), second: scaled(c, self.second.clone()) }
    }

    /// `Σ cₖ pₖ`.
    pub fn combination(terms: &[(f64, FieldPair)]) -> FieldPair {
        FieldPair::joined(
            combination(terms.iter().map(|(c, p)| (*c, p.first.clone())).collect()),
            combination(terms.iter().map(|(c, p)| (*c, p.second.clone())).collect()),
        )
    }

    /// `J(v₁, v₂) = (v₂, −v₁)`.
    pub fn rotate_j(&self) -> FieldPair {
        FieldPair { first: self.second.clone(), second: scaled(-1.0, self.first.clone()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> Field {
        FnField::new("g", Symmetry::Cylindrical, |x| (-dot4(x, x)).exp()).into_field()
    }

    #[test]
    fn join_is_weakest() {
        assert_eq!(Symmetry::Cylindrical.join(Symmetry::Bicylindrical), Symmetry::Bicylindrical);
        assert_eq!(Symmetry::Full.join(Symmetry::Cylindrical), Symmetry::Full);
        assert!(Symmetry::Full.admits(Symmetry::Bicylindrical));
        assert!(!Symmetry::Cylindrical.admits(Symmetry::Bicylindrical));
    }

    #[test]
    fn product_rule_matches_fd() {
        let p = product(gauss(), gauss());
        let x = [0.2, 0.1, -0.3, 0.4];
        let g = p.gradient(&x);
        let gfd = fd::gradient(&|y| p.value(y), &x, 1e-3);
        for i in 0..4 {
            assert!((g[i] - gfd[i]).abs() < 1e-9);
        }
        let h = p.hessian(&x);
        let hfd = fd::hessian(&|y| p.gradient(y), &x, 1e-3);
        for i in 0..4 {
            for j in 0..4 {
                assert!((h[i][j] - hfd[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pair_rejects_mismatched_tags() {
        let b = promote(gauss(), Symmetry::Bicylindrical).unwrap();
        assert!(FieldPair::new(gauss(), b.clone()).is_err());
        assert!(promote(b, Symmetry::Cylindrical).is_err());
    }

    #[test]
    fn representative_round_trip() {
        for s in [Symmetry::Cylindrical, Symmetry::Bicylindrical] {
            let red = [0.5, 1.5, 2.0, 0.0];
            let x = s.representative(&red[..s.reduced_dim()]);
            let back = s.reduce(&x);
            for k in 0..s.reduced_dim() {
                assert!((back[k] - red[k]).abs() < 1e-15);
            }
        }
    }
}
