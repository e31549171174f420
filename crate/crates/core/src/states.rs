//! Stationary profiles, the conformal transforms acting on them, and the
//! kernel generators of the linearized operator.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4 as NMatrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, dot4, fd, norm4, Field, Matrix4, Point4, ScalarField, Symmetry};
use crate::quadrature::{sphere_directions, FullScheme, QuadError, Quadrature, QuadratureSpec};

#[derive(Debug, Error)]
pub enum StateError {
    #[error("field has no far-field limit, Kelvin transform undefined at the origin")]
    NoFarField,
    #[error("transform is singular at {point:?}")]
    SingularLocus { point: Point4 },
    #[error("invalid transform parameters: {0}")]
    InvalidParameters(String),
    #[error("seed profile is not normalized: {0}")]
    BadNormalization(String),
    #[error("decay fit needs at least 3 radii spanning a decade")]
    InsufficientRadii,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// The ground state `W(x) = (1 + |x|²/8)⁻¹`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundState;

impl ScalarField for GroundState {
    fn value(&self, x: &Point4) -> f64 {
        1.0 / (1.0 + dot4(x, x) / 8.0)
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let w = self.value(x);
        x.map(|xi| -0.25 * xi * w * w)
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let w = self.value(x);
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let d = if i == j { -0.25 * w * w } else { 0.0 };
                d + x[i] * x[j] * w * w * w / 8.0
            })
        })
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::Cylindrical
    }
    fn decay(&self) -> Option<f64> {
        Some(2.0)
    }
    fn far_field(&self) -> Option<f64> {
        Some(8.0)
    }
    fn exact_stationary(&self) -> bool {
        true
    }
    fn label(&self) -> String {
        "W".into()
    }
}

pub fn ground_state() -> Field {
    Arc::new(GroundState)
}

/// Closed form of the Kelvin image of the seed `x₄ W²`: `64 x₄ (1 + 8|x|²)⁻²`.
///
/// A stand-in profile with the right symmetry and decay. It does not solve
/// the stationary equation.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurrogateQ;

impl ScalarField for SurrogateQ {
    fn value(&self, x: &Point4) -> f64 {
        let d = 1.0 + 8.0 * dot4(x, x);
        64.0 * x[3] / (d * d)
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let d = 1.0 + 8.0 * dot4(x, x);
        std::array::from_fn(|i| {
            let base = if i == 3 { 64.0 / (d * d) } else { 0.0 };
            base - 2048.0 * x[3] * x[i] / (d * d * d)
        })
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let d = 1.0 + 8.0 * dot4(x, x);
        let (d3, d4) = (d * d * d, d * d * d * d);
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let k = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                -2048.0 * (k(i, 3) * x[j] + k(j, 3) * x[i] + k(i, j) * x[3]) / d3
                    + 98304.0 * x[3] * x[i] * x[j] / d4
            })
        })
    }
    fn symmetry(&self) -> Symmetry {
        Symmetry::Bicylindrical
    }
    fn decay(&self) -> Option<f64> {
        Some(3.0)
    }
    fn far_field(&self) -> Option<f64> {
        Some(0.0)
    }
    fn label(&self) -> String {
        "Q_surrogate".into()
    }
}

pub fn surrogate_closed_form() -> Field {
    Arc::new(SurrogateQ)
}

/// The seed `x₄ W(x)²` whose Kelvin image is the surrogate.
pub fn surrogate_seed() -> Field {
    field::FnField::new("x4·W²", Symmetry::Bicylindrical, |x| {
        let w = GroundState.value(x);
        x[3] * w * w
    })
    .with_gradient(|x| {
        let w = GroundState.value(x);
        std::array::from_fn(|i| if i == 3 { w * w } else { 0.0 } - 0.5 * x[3] * x[i] * w * w * w)
    })
    .with_decay(3.0)
    .with_far_field(0.0)
    .into_field()
}

/// Builds `K(seed)` after checking `seed(0) = 0`, `∇seed(0) = e₄`.
pub fn surrogate_q(seed: Field) -> Result<Field, StateError> {
    let o = [0.0; 4];
    let v = seed.value(&o);
    let g = seed.gradient(&o);
    let target = [0.0, 0.0, 0.0, 1.0];
    if v.abs() > 1e-10 || g.iter().zip(&target).any(|(a, b)| (a - b).abs() > 1e-8) {
        return Err(StateError::BadNormalization(format!("value {v}, gradient {g:?}")));
    }
    kelvin(seed)
}

/// `K f(x) = |x|⁻² f(x / |x|²)`.
pub struct Kelvin {
    inner: Field,
    at_origin: f64,
    decay: f64,
}

pub fn kelvin(f: Field) -> Result<Field, StateError> {
    let at_origin = f.far_field().ok_or(StateError::NoFarField)?;
    let o = [0.0; 4];
    let decay = if f.value(&o).abs() > 1e-14 {
        2.0
    } else if norm4(&f.gradient(&o)) > 1e-12 {
        3.0
    } else {
        4.0
    };
    Ok(Arc::new(Kelvin { inner: f, at_origin, decay }))
}

impl ScalarField for Kelvin {
    fn value(&self, x: &Point4) -> f64 {
        let r2 = dot4(x, x);
        if r2 == 0.0 {
            return self.at_origin;
        }
        let y = x.map(|v| v / r2);
        self.inner.value(&y) / r2
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let r2 = dot4(x, x);
        if r2 == 0.0 {
            return fd::gradient(&|p| self.value(p), x, fd::DEFAULT_STEP);
        }
        let y = x.map(|v| v / r2);
        let fy = self.inner.value(&y);
        let gy = self.inner.gradient(&y);
        let r4 = r2 * r2;
        std::array::from_fn(|i| {
            let mut s = -2.0 * x[i] * fy / r4;
            for j in 0..4 {
                let dyj = (if i == j { r2 } else { 0.0 } - 2.0 * x[i] * x[j]) / r4;
                s += gy[j] * dyj / r2;
            }
            s
        })
    }
    fn symmetry(&self) -> Symmetry {
        self.inner.symmetry()
    }
    fn decay(&self) -> Option<f64> {
        Some(self.decay)
    }
    fn far_field(&self) -> Option<f64> {
        Some(self.inner.value(&[0.0; 4]))
    }
    fn exact_stationary(&self) -> bool {
        self.inner.exact_stationary()
    }
    fn label(&self) -> String {
        format!("K[{}]", self.inner.label())
    }
}

/// `λ f(λ x)`.
struct Dilate {
    inner: Field,
    scale: f64,
}

impl ScalarField for Dilate {
    fn value(&self, x: &Point4) -> f64 {
        self.scale * self.inner.value(&x.map(|v| self.scale * v))
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let l = self.scale;
        self.inner.gradient(&x.map(|v| l * v)).map(|g| l * l * g)
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        let l = self.scale;
        self.inner.hessian(&x.map(|v| l * v)).map(|row| row.map(|h| l * l * l * h))
    }
    fn symmetry(&self) -> Symmetry {
        self.inner.symmetry()
    }
    fn decay(&self) -> Option<f64> {
        self.inner.decay()
    }
    fn far_field(&self) -> Option<f64> {
        self.inner.far_field().map(|c| c / self.scale)
    }
    fn exact_stationary(&self) -> bool {
        self.inner.exact_stationary()
    }
    fn label(&self) -> String {
        format!("D{}[{}]", self.scale, self.inner.label())
    }
}

pub fn dilate(f: Field, scale: f64) -> Result<Field, StateError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(StateError::InvalidParameters(format!("dilation scale {scale}")));
    }
    Ok(Arc::new(Dilate { inner: f, scale }))
}

/// `f(x + shift)`.
struct Translate {
    inner: Field,
    shift: Point4,
    symmetry: Symmetry,
}

impl ScalarField for Translate {
    fn value(&self, x: &Point4) -> f64 {
        self.inner.value(&std::array::from_fn(|i| x[i] + self.shift[i]))
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        self.inner.gradient(&std::array::from_fn(|i| x[i] + self.shift[i]))
    }
    fn hessian(&self, x: &Point4) -> Matrix4 {
        self.inner.hessian(&std::array::from_fn(|i| x[i] + self.shift[i]))
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
        format!("T[{}]", self.inner.label())
    }
}

fn symmetry_after_shift(s: Symmetry, v: &Point4) -> Symmetry {
    let off_axis = |idx: &[usize]| idx.iter().any(|&i| v[i] != 0.0);
    match s {
        Symmetry::Cylindrical if !off_axis(&[1, 2, 3]) => Symmetry::Cylindrical,
        Symmetry::Cylindrical | Symmetry::Bicylindrical if !off_axis(&[1, 2]) => Symmetry::Bicylindrical,
        _ => Symmetry::Full,
    }
}

pub fn translate(f: Field, shift: Point4) -> Field {
    let symmetry = symmetry_after_shift(f.symmetry(), &shift);
    Arc::new(Translate { inner: f, shift, symmetry })
}

/// Planar angles ordered `(12, 13, 14, 23, 24, 34)`.
pub type Angles = [f64; 6];

pub const PLANES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// `exp(A)` for the skew matrix with `A[i][j] = θ_ij`, `i < j`.
pub fn rotation_matrix(angles: &Angles) -> NMatrix4<f64> {
    let mut a = NMatrix4::zeros();
    for (k, &(i, j)) in PLANES.iter().enumerate() {
        a[(i, j)] = angles[k];
        a[(j, i)] = -angles[k];
    }
    a.exp()
}

/// `f(R x)`.
struct Rotate {
    inner: Field,
    rot: NMatrix4<f64>,
    symmetry: Symmetry,
}

impl Rotate {
    fn apply(&self, x: &Point4) -> Point4 {
        std::array::from_fn(|i| (0..4).map(|j| self.rot[(i, j)] * x[j]).sum())
    }
}

impl ScalarField for Rotate {
    fn value(&self, x: &Point4) -> f64 {
        self.inner.value(&self.apply(x))
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let g = self.inner.gradient(&self.apply(x));
        std::array::from_fn(|j| (0..4).map(|i| self.rot[(i, j)] * g[i]).sum())
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
        format!("R[{}]", self.inner.label())
    }
}

fn symmetry_after_rotation(s: Symmetry, angles: &Angles) -> Symmetry {
    let nonzero = |ks: &[usize]| ks.iter().any(|&k| angles[k] != 0.0);
    match s {
        // Rotations fixing e₁ preserve cylindrical fields.
        Symmetry::Cylindrical if !nonzero(&[0, 1, 2]) => Symmetry::Cylindrical,
        // Rotations in the (2,3) plane preserve bicylindrical fields.
        Symmetry::Cylindrical | Symmetry::Bicylindrical if !nonzero(&[0, 1, 2, 4, 5]) => s,
        _ => Symmetry::Full,
    }
}

pub fn rotate(f: Field, angles: &Angles) -> Field {
    let symmetry = symmetry_after_rotation(f.symmetry(), angles);
    Arc::new(Rotate { inner: f, rot: rotation_matrix(angles), symmetry })
}

/// Parameters of the 15-dimensional conformal family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub scale: f64,
    pub shift: Point4,
    pub angles: Angles,
    pub conformal: Point4,
}

impl Default for TransformParams {
    fn default() -> Self {
        TransformParams { scale: 1.0, shift: [0.0; 4], angles: [0.0; 6], conformal: [0.0; 4] }
    }
}

/// `λ D⁻¹ f(ξ + λ R (x − z|x|²) / D)` with `D = 1 − 2⟨z, x⟩ + |z|²|x|²`.
pub struct ConformalTransform {
    inner: Field,
    params: TransformParams,
    rot: NMatrix4<f64>,
    symmetry: Symmetry,
}

impl ConformalTransform {
    pub fn try_value(&self, x: &Point4) -> Result<f64, StateError> {
        let p = &self.params;
        let r2 = dot4(x, x);
        let z2 = dot4(&p.conformal, &p.conformal);
        let d = 1.0 - 2.0 * dot4(&p.conformal, x) + z2 * r2;
        if d.abs() <= 1e-13 * (1.0 + z2 * r2) {
            return Err(StateError::SingularLocus { point: *x });
        }
        let y: Point4 = std::array::from_fn(|i| (x[i] - p.conformal[i] * r2) / d);
        let arg: Point4 =
            std::array::from_fn(|i| p.shift[i] + p.scale * (0..4).map(|j| self.rot[(i, j)] * y[j]).sum::<f64>());
        Ok(p.scale * self.inner.value(&arg) / d)
    }
}

impl ScalarField for ConformalTransform {
    /// NaN on the singular locus.
    fn value(&self, x: &Point4) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }
    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }
    fn exact_stationary(&self) -> bool {
        self.inner.exact_stationary()
    }
    fn label(&self) -> String {
        format!("T_A[{}]", self.inner.label())
    }
}

pub fn apply_transform(f: Field, params: TransformParams) -> Result<Field, StateError> {
    let finite = params.shift.iter().chain(&params.angles).chain(&params.conformal).all(|v| v.is_finite());
    if !(params.scale > 0.0) || !params.scale.is_finite() || !finite {
        return Err(StateError::InvalidParameters(format!("{params:?}")));
    }
    let s = symmetry_after_rotation(f.symmetry(), &params.angles);
    let s = symmetry_after_shift(s, &params.shift);
    let s = symmetry_after_shift(s, &params.conformal);
    Ok(Arc::new(ConformalTransform { rot: rotation_matrix(&params.angles), inner: f, params, symmetry: s }))
}

/// Infinitesimal generators of the conformal family (axes are 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Generator {
    /// `Λf = f + x·∇f`.
    Dilation,
    /// `∂ᵢ f`.
    Translation(usize),
    /// `xᵢ∂ⱼf − xⱼ∂ᵢf`, with `i < j`.
    Rotation(usize, usize),
    /// `−2xᵢf + |x|²∂ᵢf − 2xᵢ(x·∇f)`.
    Conformal(usize),
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Dilation => write!(f, "dilation"),
            Generator::Translation(i) => write!(f, "d{}", i + 1),
            Generator::Rotation(i, j) => write!(f, "rot{}{}", i + 1, j + 1),
            Generator::Conformal(i) => write!(f, "conf{}", i + 1),
        }
    }
}

impl Generator {
    /// All fifteen, in a fixed order.
    pub fn all() -> Vec<Generator> {
        let mut v = vec![Generator::Dilation];
        v.extend((0..4).map(Generator::Translation));
        v.extend(PLANES.iter().map(|&(i, j)| Generator::Rotation(i, j)));
        v.extend((0..4).map(Generator::Conformal));
        v
    }

    pub fn value(self, x: &Point4, f: f64, g: &Point4) -> f64 {
        let xg = dot4(x, g);
        match self {
            Generator::Dilation => f + xg,
            Generator::Translation(i) => g[i],
            Generator::Rotation(i, j) => x[i] * g[j] - x[j] * g[i],
            Generator::Conformal(i) => -2.0 * x[i] * f + dot4(x, x) * g[i] - 2.0 * x[i] * xg,
        }
    }

    pub fn gradient(self, x: &Point4, f: f64, g: &Point4, h: &Matrix4) -> Point4 {
        let hx: Point4 = std::array::from_fn(|k| (0..4).map(|m| h[k][m] * x[m]).sum());
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        match self {
            Generator::Dilation => std::array::from_fn(|k| 2.0 * g[k] + hx[k]),
            Generator::Translation(i) => h[i],
            Generator::Rotation(i, j) => {
                std::array::from_fn(|k| d(k, i) * g[j] - d(k, j) * g[i] + x[i] * h[j][k] - x[j] * h[i][k])
            }
            Generator::Conformal(i) => {
                let (xg, r2) = (dot4(x, g), dot4(x, x));
                std::array::from_fn(|k| {
                    -2.0 * d(i, k) * f - 2.0 * x[i] * g[k] + 2.0 * x[k] * g[i] + r2 * h[i][k]
                        - 2.0 * d(i, k) * xg
                        - 2.0 * x[i] * (g[k] + hx[k])
                })
            }
        }
    }

    /// Tag of the generated field given the tag of the profile.
    pub fn symmetry_of(self, s: Symmetry) -> Symmetry {
        use Generator::*;
        match s {
            Symmetry::Full => Symmetry::Full,
            Symmetry::Cylindrical => match self {
                Dilation | Translation(0) | Conformal(0) => Symmetry::Cylindrical,
                Rotation(1, 2) | Rotation(1, 3) | Rotation(2, 3) => Symmetry::Cylindrical,
                Translation(3) | Conformal(3) | Rotation(0, 3) => Symmetry::Bicylindrical,
                _ => Symmetry::Full,
            },
            Symmetry::Bicylindrical => match self {
                Dilation | Translation(0) | Translation(3) | Conformal(0) | Conformal(3) | Rotation(0, 3) => {
                    Symmetry::Bicylindrical
                }
                Rotation(1, 2) => Symmetry::Bicylindrical,
                _ => Symmetry::Full,
            },
        }
    }

    /// Decay lost relative to the profile (a conservative bound).
    fn decay_loss(self) -> f64 {
        match self {
            Generator::Dilation | Generator::Rotation(..) => 0.0,
            Generator::Translation(_) => -1.0,
            Generator::Conformal(_) => 1.0,
        }
    }
}

/// A generator applied to a profile, with analytic gradient from the profile's Hessian.
pub struct GeneratorField {
    inner: Field,
    generator: Generator,
}

impl ScalarField for GeneratorField {
    fn value(&self, x: &Point4) -> f64 {
        self.generator.value(x, self.inner.value(x), &self.inner.gradient(x))
    }
    fn gradient(&self, x: &Point4) -> Point4 {
        let f = self.inner.value(x);
        let g = self.inner.gradient(x);
        let h = self.inner.hessian(x);
        self.generator.gradient(x, f, &g, &h)
    }
    fn symmetry(&self) -> Symmetry {
        self.generator.symmetry_of(self.inner.symmetry())
    }
    fn decay(&self) -> Option<f64> {
        self.inner.decay().map(|p| p - self.generator.decay_loss())
    }
    fn label(&self) -> String {
        format!("{}[{}]", self.generator, self.inner.label())
    }
}

pub fn apply_generator(f: Field, generator: Generator) -> Field {
    Arc::new(GeneratorField { inner: f, generator })
}

/// `−Δf − f³` by a finite-difference stencil.
pub fn stationary_residual(f: &dyn ScalarField, x: &Point4, h: f64, order: fd::StencilOrder) -> f64 {
    let v = f.value(x);
    -field::laplacian(f, x, h, order) - v * v * v
}

/// `−Δg − 3Q²g` by a finite-difference stencil.
pub fn linearized_residual(q: &dyn ScalarField, g: &dyn ScalarField, x: &Point4, h: f64, order: fd::StencilOrder) -> f64 {
    let qv = q.value(x);
    -field::laplacian(g, x, h, order) - 3.0 * qv * qv * g.value(x)
}

/// Kernel directions of a profile: the conformal direction `ψ = Ω̃₄Q` and a
/// maximal independent set of the remaining generator fields.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    pub psi: Field,
    pub phis: Vec<(Generator, Field)>,
    pub dropped: Vec<Generator>,
    /// Ḣ¹ Gram matrix of `[ψ, φ₁, …, φ_K]`.
    pub gram: DMatrix<f64>,
}

impl KernelBasis {
    pub fn k(&self) -> usize {
        self.phis.len()
    }

    pub fn gram_determinant(&self) -> f64 {
        self.gram.determinant()
    }
}

/// Quadrature used for origin-centred Ḣ¹ Gram matrices.
pub fn gram_spec() -> QuadratureSpec {
    QuadratureSpec {
        full: FullScheme::Hyperspherical,
        angular_nodes: 12,
        r_max: 400.0,
        min_panel: 0.125,
        growth: 1.5,
        nodes_per_panel: 8,
        ..Default::default()
    }
}

/// Ḣ¹ Gram matrix of generator fields of `q`, evaluated in one pass.
pub fn generator_gram(q: &Field, generators: &[Generator], spec: &QuadratureSpec) -> Result<DMatrix<f64>, StateError> {
    let quad = Quadrature::new(crate::field::Symmetry::Full, spec)?;
    let m = generators.len();
    let raw = quad.integrate_many(m * (m + 1) / 2, |x, out| {
        let (f, g, h) = (q.value(x), q.gradient(x), q.hessian(x));
        let grads: Vec<Point4> = generators.iter().map(|gen| gen.gradient(x, f, &g, &h)).collect();
        let mut k = 0;
        for a in 0..m {
            for b in a..m {
                out[k] = dot4(&grads[a], &grads[b]);
                k += 1;
            }
        }
    });
    let mut gram = DMatrix::zeros(m, m);
    let mut k = 0;
    for a in 0..m {
        for b in a..m {
            gram[(a, b)] = raw[k];
            gram[(b, a)] = raw[k];
            k += 1;
        }
    }
    Ok(gram)
}

/// Relative pivot threshold for independence of generator fields.
pub const RANK_THRESHOLD: f64 = 1e-8;

/// Pivoted Gram–Schmidt over `[Ω̃₄Q, Λ, ∂ᵢ, Ω_ij, Ω̃₁, Ω̃₂, Ω̃₃]`.
pub fn kernel_basis(q: &Field, spec: &QuadratureSpec) -> Result<KernelBasis, StateError> {
    let mut order = vec![Generator::Conformal(3)];
    order.extend(Generator::all().into_iter().filter(|g| *g != Generator::Conformal(3)));
    let gram = generator_gram(q, &order, spec)?;
    let scale = (0..order.len()).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let mut accepted: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..order.len() {
        let residual = if accepted.is_empty() {
            gram[(c, c)]
        } else {
            let ga = DMatrix::from_fn(accepted.len(), accepted.len(), |i, j| gram[(accepted[i], accepted[j])]);
            let gc = DMatrix::from_fn(accepted.len(), 1, |i, _| gram[(accepted[i], c)]);
            let sol = ga.clone().lu().solve(&gc).unwrap_or_else(|| DMatrix::zeros(accepted.len(), 1));
            gram[(c, c)] - (gc.transpose() * sol)[(0, 0)]
        };
        if residual > RANK_THRESHOLD * scale && (c != 0 || residual > 0.0) {
            accepted.push(c);
        } else {
            dropped.push(order[c]);
        }
    }
    if accepted.first() != Some(&0) {
        return Err(StateError::BadNormalization("conformal direction vanishes".into()));
    }
    let sub = DMatrix::from_fn(accepted.len(), accepted.len(), |i, j| gram[(accepted[i], accepted[j])]);
    let psi = apply_generator(q.clone(), Generator::Conformal(3));
    let phis = accepted[1..].iter().map(|&c| (order[c], apply_generator(q.clone(), order[c]))).collect();
    Ok(KernelBasis { psi, phis, dropped, gram: sub })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub radii: Vec<f64>,
    pub sups: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl DecayFit {
    pub fn matches(&self, p: f64, tol: f64) -> bool {
        (self.slope + p).abs() <= tol
    }
}

/// Least-squares fit of `log y` against `log x`: slope, intercept, R².
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Ordinary least squares `y = a x + b`: slope, intercept, R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Fits `log sup_{|x|=R} |f|` against `log R`.
pub fn check_decay(f: &dyn ScalarField, radii: &[f64]) -> Result<DecayFit, StateError> {
    let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if radii.len() < 3 || hi < 10.0 * lo || lo <= 0.0 {
        return Err(StateError::InsufficientRadii);
    }
    let dirs = sphere_directions(400);
    let sups: Vec<f64> = radii
        .iter()
        .map(|&r| dirs.iter().map(|d| f.value(&d.map(|v| r * v)).abs()).fold(0.0, f64::max))
        .collect();
    let (slope, intercept, r_squared) = loglog_fit(radii, &sups);
    Ok(DecayFit { radii: radii.to_vec(), sups, slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_state_values() {
        let w = GroundState;
        assert_eq!(w.value(&[0.0; 4]), 1.0);
        assert!((w.value(&[0.0, 0.0, 0.0, 8f64.sqrt()]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn analytic_derivatives_match_fd() {
        for f in [ground_state(), surrogate_closed_form()] {
            let x = [0.3, -0.2, 0.5, 0.7];
            let g = f.gradient(&x);
            let gfd = fd::gradient(&|p| f.value(p), &x, 1e-3);
            let h = f.hessian(&x);
            let hfd = fd::hessian(&|p| f.gradient(p), &x, 1e-3);
            for i in 0..4 {
                assert!((g[i] - gfd[i]).abs() < 1e-8);
                for j in 0..4 {
                    assert!((h[i][j] - hfd[i][j]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn surrogate_is_kelvin_of_seed() {
        let q = surrogate_q(surrogate_seed()).unwrap();
        let c = SurrogateQ;
        for x in [[0.1, 0.2, -0.3, 0.4], [1.0, 0.0, 0.0, 2.0], [0.0, 0.0, 0.0, 1.0]] {
            assert!((q.value(&x) - c.value(&x)).abs() < 1e-13);
        }
        assert!((c.value(&[0.0, 0.0, 0.0, 1.0]) - 64.0 / 81.0).abs() < 1e-15);
        assert!(surrogate_q(ground_state()).is_err());
    }

    #[test]
    fn generator_gradients_match_fd() {
        let q = surrogate_closed_form();
        let x = [0.4, 0.1, -0.2, 0.6];
        for g in Generator::all() {
            let f = apply_generator(q.clone(), g);
            let an = f.gradient(&x);
            let num = fd::gradient(&|p| f.value(p), &x, 1e-3);
            for i in 0..4 {
                assert!((an[i] - num[i]).abs() < 1e-7, "{g}");
            }
        }
    }

    #[test]
    fn singular_locus_is_reported() {
        let p = TransformParams { conformal: [0.5, 0.0, 0.0, 0.0], ..Default::default() };
        let t = apply_transform(ground_state(), p).unwrap();
        let tt = ConformalTransform {
            inner: ground_state(),
            params: p,
            rot: rotation_matrix(&p.angles),
            symmetry: t.symmetry(),
        };
        assert!(matches!(tt.try_value(&[2.0, 0.0, 0.0, 0.0]), Err(StateError::SingularLocus { .. })));
        assert!(t.value(&[2.0, 0.0, 0.0, 0.0]).is_nan());
    }

    #[test]
    fn decay_fit_rejects_short_ranges() {
        assert!(check_decay(&GroundState, &[10.0, 20.0, 30.0]).is_err());
        let fit = check_decay(&GroundState, &[10.0, 30.0, 100.0, 300.0]).unwrap();
        assert!(fit.matches(2.0, 0.05), "{}", fit.slope);
    }
}
