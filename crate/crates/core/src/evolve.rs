//! Finite-volume evolution of `∂ₜₜu = Δu + u³` for fields depending on
//! `(x₁, |x̄|)` only.
//!
//! Cells are centred at `((i+½)h₁ + x₁ᵐⁱⁿ, (j+½)h_r)`. The radial flux
//! through the face at `r` carries the weight `r²`, so the axis needs no
//! special treatment: the innermost face has zero area. Ghost cells outside
//! the box follow a travelling reference, optionally corrected by an
//! outgoing condition on the deviation. Time stepping is velocity Verlet,
//! which is leapfrog with the cubic term frozen at integer steps.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{energy_report, EnergyReport};
use crate::field::{self, container, Axis, Field, FieldError, FieldPair, Point4, SampledField, ScalarField, Symmetry};
use crate::fit::{power_fit, FitError};
use crate::interaction::MultiSolitonConfig;
use crate::lorentz::{boost, shift_x1, ExpDirection, LorentzError, Speed};
use crate::modulation::{ModulationError, ModulationSetup, ModulationState};
use crate::states::linear_fit;

/// Largest admissible `dt / min(h₁, h_r)`.
pub const MAX_CFL: f64 = 0.5;
/// Default `dt / min(h₁, h_r)`.
pub const DEFAULT_CFL: f64 = 0.25;
/// Runs stop once `max|u|` exceeds this multiple of `max|W| = 1`.
pub const BLOWUP_FACTOR: f64 = 1e3;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("time step {dt} violates dt <= {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("blow-up suspected at t = {t}: max|u| = {max:.3e}")]
    BlowUp { t: f64, max: f64 },
    #[error("sample count {found} does not match the grid ({expected})")]
    Shape { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("both bracket ends stay in the tube until t = {0}; widen the bracket")]
    BracketTooNarrow(f64),
    #[error("exits at both bracket ends have the same sign; the bracket does not straddle the optimum")]
    SameSign,
    #[error("mode amplitude saturated before one e-fold; reduce the amplitude")]
    Saturated,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Uniform cell-centred grid on `[x₁ᵐⁱⁿ, x₁ᵐᵃˣ] × [0, rᵐᵃˣ]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylindricalGrid {
    pub x1_min: f64,
    pub x1_max: f64,
    pub r_max: f64,
    pub h1: f64,
    pub hr: f64,
    pub n1: usize,
    pub nr: usize,
}

impl CylindricalGrid {
    /// Square cells of side close to `h`; the box is kept exactly.
    pub fn new(x1_min: f64, x1_max: f64, r_max: f64, h: f64) -> Result<Self, EvolveError> {
        if !(x1_max > x1_min) || !(r_max > 0.0) || !(h > 0.0) {
            return Err(EvolveError::Grid(format!("box [{x1_min}, {x1_max}] x [0, {r_max}] with h = {h}")));
        }
        let n1 = ((x1_max - x1_min) / h).round() as usize;
        let nr = (r_max / h).round() as usize;
        if n1 < 4 || nr < 4 {
            return Err(EvolveError::Grid(format!("need at least 4 cells per axis, got {n1} x {nr}")));
        }
        Ok(CylindricalGrid { x1_min, x1_max, r_max, h1: (x1_max - x1_min) / n1 as f64, hr: r_max / nr as f64, n1, nr })
    }

    /// Same box with half the spacing.
    pub fn refined(&self) -> Self {
        CylindricalGrid { h1: 0.5 * self.h1, hr: 0.5 * self.hr, n1: 2 * self.n1, nr: 2 * self.nr, ..*self }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x1(&self, i: isize) -> f64 {
        self.x1_min + (i as f64 + 0.5) * self.h1
    }

    pub fn r(&self, j: isize) -> f64 {
        (j as f64 + 0.5) * self.hr
    }

    pub fn point(&self, i: isize, j: isize) -> Point4 {
        [self.x1(i), self.r(j), 0.0, 0.0]
    }

    /// `(r_j³)` cell average of `r²`: `r_j² + h_r²/12`.
    fn shell(&self, j: usize) -> f64 {
        let r = self.r(j as isize);
        r * r + self.hr * self.hr / 12.0
    }

    /// 4D volume of cell `(·, j)`.
    pub fn weight(&self, j: usize) -> f64 {
        4.0 * PI * self.shell(j) * self.h1 * self.hr
    }

    pub fn axes(&self) -> Result<Vec<Axis>, FieldError> {
        Ok(vec![Axis::cell(self.x1_min, self.x1_max, self.n1)?, Axis::cell_radial(self.r_max, self.nr)?])
    }

    /// Cell-centre samples of a field, `x₁` slowest.
    pub fn sample(&self, f: &dyn ScalarField) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|k| f.value(&self.point((k / self.nr) as isize, (k % self.nr) as isize))).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(k, v)| v * self.weight(k % self.nr)).sum()
    }
}

/// One soliton `τ Q_ℓ(x − (x₀ + ℓt)e₁)`.
#[derive(Clone, Debug)]
pub struct Travelling {
    pub sign: f64,
    pub speed: Speed,
    pub offset: f64,
    boosted: Field,
}

impl Travelling {
    pub fn new(profile: &Field, sign: f64, speed: Speed, offset: f64) -> Self {
        Travelling { sign, speed, offset, boosted: boost(profile.clone(), speed) }
    }

    pub fn center(&self, t: f64) -> f64 {
        self.offset + self.speed.get() * t
    }
}

/// Sum of travelling solitons used for ghost cells and deviations.
#[derive(Clone, Debug)]
pub struct Reference {
    pub solitons: Vec<Travelling>,
}

impl Reference {
    pub fn single(profile: &Field, speed: Speed) -> Self {
        Reference { solitons: vec![Travelling::new(profile, 1.0, speed, 0.0)] }
    }

    /// The same solitons as a configuration, centred at `ℓₙt`.
    pub fn from_config(cfg: &MultiSolitonConfig) -> Self {
        let solitons = cfg.solitons.iter().map(|s| Travelling::new(&s.profile, s.sign, s.speed, 0.0)).collect();
        Reference { solitons }
    }

    pub fn value(&self, x1: f64, r: f64, t: f64) -> f64 {
        self.solitons.iter().map(|s| s.sign * s.boosted.value(&[x1 - s.center(t), r, 0.0, 0.0])).sum()
    }

    /// `∂ₜ` of the reference: `−ℓ ∂₁` of each travelling profile.
    pub fn velocity(&self, x1: f64, r: f64, t: f64) -> f64 {
        self.solitons
            .iter()
            .map(|s| -s.sign * s.speed.get() * s.boosted.gradient(&[x1 - s.center(t), r, 0.0, 0.0])[0])
            .sum()
    }

    /// The reference at time `t` as a pair of closed-form fields.
    pub fn pair(&self, t: f64) -> FieldPair {
        let terms: Vec<(f64, FieldPair)> = self
            .solitons
            .iter()
            .map(|s| {
                let u = shift_x1(s.boosted.clone(), s.center(t));
                let v = field::scaled(-s.speed.get(), crate::lorentz::partial(u.clone(), 0));
                (s.sign, FieldPair::joined(u, v))
            })
            .collect();
        FieldPair::combination(&terms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Ghosts equal the reference.
    Reference,
    /// Ghost deviations obey `∂ₜd + ∂ₙd + 3d/(2ρ) = 0`, upwinded.
    Outgoing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolverConfig {
    pub cfl: f64,
    pub boundary: Boundary,
    pub blowup: f64,
}

impl Default for EvolverConfig {
    fn default() -> Self {
        EvolverConfig { cfl: DEFAULT_CFL, boundary: Boundary::Reference, blowup: BLOWUP_FACTOR }
    }
}

/// Grid samples of `(u, ∂ₜu)` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub grid: CylindricalGrid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
    pub dt: f64,
}

impl EvolutionState {
    pub fn new(grid: CylindricalGrid, u: Vec<f64>, v: Vec<f64>, t: f64, dt: f64) -> Result<Self, EvolveError> {
        for s in [&u, &v] {
            if s.len() != grid.len() {
                return Err(EvolveError::Shape { expected: grid.len(), found: s.len() });
            }
        }
        let limit = MAX_CFL * grid.h1.min(grid.hr);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(EvolveError::Cfl { dt, limit });
        }
        Ok(EvolutionState { grid, u, v, t, dt })
    }

    /// Samples a pair at the cell centres.
    pub fn sample(grid: CylindricalGrid, data: &FieldPair, t: f64, cfl: f64) -> Result<Self, EvolveError> {
        let dt = cfl * grid.h1.min(grid.hr);
        EvolutionState::new(grid, grid.sample(data.first.as_ref()), grid.sample(data.second.as_ref()), t, dt)
    }

    /// The samples as interpolating fields.
    pub fn to_pair(&self) -> Result<FieldPair, EvolveError> {
        let axes = self.grid.axes()?;
        let u = SampledField::new(Symmetry::Cylindrical, axes.clone(), self.u.clone())?.with_label("u");
        let v = SampledField::new(Symmetry::Cylindrical, axes, self.v.clone())?.with_label("v");
        Ok(FieldPair::joined(Arc::new(u), Arc::new(v)))
    }

    /// Writes `(u, v)` in the container format; the label records `t` and `dt`.
    pub fn save(&self, path: &Path) -> Result<(), EvolveError> {
        let axes = self.grid.axes()?;
        let label = format!("t={:e};dt={:e}", self.t, self.dt);
        let u = SampledField::new(Symmetry::Cylindrical, axes.clone(), self.u.clone())?.with_label(label.clone());
        let v = SampledField::new(Symmetry::Cylindrical, axes, self.v.clone())?.with_label(label);
        container::write(path, &[u, v])?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        let parts = container::read(path)?;
        let [u, v] = <[SampledField; 2]>::try_from(parts).map_err(|p| EvolveError::Checkpoint(format!("expected 2 components, got {}", p.len())))?;
        if u.symmetry != Symmetry::Cylindrical {
            return Err(EvolveError::Checkpoint("not a cylindrical field".into()));
        }
        let mut t = None;
        let mut dt = None;
        for item in u.label.split(';') {
            match item.split_once('=') {
                Some(("t", s)) => t = s.parse::<f64>().ok(),
                Some(("dt", s)) => dt = s.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (t, dt) = t.zip(dt).ok_or_else(|| EvolveError::Checkpoint(format!("label {:?} lacks t and dt", u.label)))?;
        let (a1, ar) = (u.axes[0], u.axes[1]);
        let grid = CylindricalGrid {
            x1_min: a1.min - 0.5 * a1.step,
            x1_max: a1.min + (a1.count as f64 - 0.5) * a1.step,
            r_max: ar.count as f64 * ar.step,
            h1: a1.step,
            hr: ar.step,
            n1: a1.count,
            nr: ar.count,
        };
        EvolutionState::new(grid, u.values, v.values, t, dt)
    }
}

struct Ghosts {
    left: Vec<f64>,
    right: Vec<f64>,
    top: Vec<f64>,
}

/// Stepper plus conservation bookkeeping.
pub struct Evolver {
    pub state: EvolutionState,
    pub reference: Reference,
    pub config: EvolverConfig,
    force: Vec<f64>,
    ghosts: Ghosts,
    /// Deviation carried by outgoing ghosts.
    ghost_dev: Ghosts,
    plus: Vec<f64>,
    minus: Vec<f64>,
    energy_flux: f64,
    momentum_flux: f64,
    momentum_rate: f64,
}

impl Evolver {
    pub fn new(state: EvolutionState, reference: Reference, config: EvolverConfig) -> Result<Self, EvolveError> {
        if config.cfl > MAX_CFL || !(config.cfl > 0.0) {
            return Err(EvolveError::Cfl { dt: config.cfl, limit: MAX_CFL });
        }
        let g = state.grid;
        let plus = (0..g.nr).map(|j| (g.r(j as isize) + 0.5 * g.hr).powi(2) / (g.hr * g.hr * g.shell(j))).collect();
        let minus = (0..g.nr).map(|j| (g.r(j as isize) - 0.5 * g.hr).powi(2) / (g.hr * g.hr * g.shell(j))).collect();
        let zeros = || Ghosts { left: vec![0.0; g.nr], right: vec![0.0; g.nr], top: vec![0.0; g.n1] };
        let mut ev = Evolver {
            force: vec![0.0; g.len()],
            ghosts: zeros(),
            ghost_dev: zeros(),
            plus,
            minus,
            state,
            reference,
            config,
            energy_flux: 0.0,
            momentum_flux: 0.0,
            momentum_rate: 0.0,
        };
        ev.ghosts = ev.ghost_values(ev.state.t);
        ev.compute_force();
        ev.momentum_rate = ev.momentum_flux_rate(&ev.ghosts, &ev.ghosts, 1.0);
        Ok(ev)
    }

    pub fn grid(&self) -> CylindricalGrid {
        self.state.grid
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    fn ghost_values(&self, t: f64) -> Ghosts {
        let g = self.state.grid;
        let r = &self.reference;
        let left = (0..g.nr).map(|j| r.value(g.x1(-1), g.r(j as isize), t) + self.ghost_dev.left[j]).collect();
        let right = (0..g.nr).map(|j| r.value(g.x1(g.n1 as isize), g.r(j as isize), t) + self.ghost_dev.right[j]).collect();
        let top = (0..g.n1).map(|i| r.value(g.x1(i as isize), g.r(g.nr as isize), t) + self.ghost_dev.top[i]).collect();
        Ghosts { left, right, top }
    }

    fn compute_force(&mut self) {
        let g = self.state.grid;
        let (n1, nr) = (g.n1, g.nr);
        let inv = 1.0 / (g.h1 * g.h1);
        let u = &self.state.u;
        let ghosts = &self.ghosts;
        let (plus, minus) = (&self.plus, &self.minus);
        self.force.par_chunks_mut(nr).enumerate().for_each(|(i, row)| {
            let c = &u[i * nr..(i + 1) * nr];
            for j in 0..nr {
                let left = if i == 0 { ghosts.left[j] } else { u[(i - 1) * nr + j] };
                let right = if i == n1 - 1 { ghosts.right[j] } else { u[(i + 1) * nr + j] };
                let up = if j == nr - 1 { ghosts.top[i] } else { c[j + 1] };
                let down = if j == 0 { c[0] } else { c[j - 1] };
                let x = c[j];
                row[j] = (left - 2.0 * x + right) * inv + plus[j] * (up - x) - minus[j] * (x - down) + x * x * x;
            }
        });
    }

    fn update_outgoing(&mut self) {
        let g = self.state.grid;
        let dt = self.state.dt;
        let r = &self.reference;
        let (n1, nr) = (g.n1 as isize, g.nr);
        let u = &self.state.u;
        let dev = |i: isize, j: isize| u[i as usize * nr + j as usize] - r.value(g.x1(i), g.r(j), self.state.t);
        let rho = |i: isize, j: isize| g.x1(i).hypot(g.r(j)).max(g.h1);
        let step = |d: f64, inner: f64, h: f64, rho: f64| d - dt / h * (d - inner) - dt * 1.5 * d / rho;
        let mut next = Ghosts { left: vec![0.0; nr], right: vec![0.0; nr], top: vec![0.0; g.n1] };
        for j in 0..nr as isize {
            next.left[j as usize] = step(self.ghost_dev.left[j as usize], dev(0, j), g.h1, rho(-1, j));
            next.right[j as usize] = step(self.ghost_dev.right[j as usize], dev(n1 - 1, j), g.h1, rho(n1, j));
        }
        for i in 0..n1 {
            next.top[i as usize] = step(self.ghost_dev.top[i as usize], dev(i, nr as isize - 1), g.hr, rho(i, nr as isize));
        }
        self.ghost_dev = next;
    }

    /// Face coefficients `c_f` such that the discrete gradient energy is `½Σ c_f (Δu)²`.
    fn face_x1(&self, j: usize) -> f64 {
        let g = self.state.grid;
        4.0 * PI * g.shell(j) * g.hr / g.h1
    }

    fn face_r(&self, j: usize) -> f64 {
        let g = self.state.grid;
        4.0 * PI * (g.r(j as isize) + 0.5 * g.hr).powi(2) * g.h1 / g.hr
    }

    /// `Σ c_f ½((u_g − u_b)_old + (u_g − u_b)_new)(g_new − g_old)` over boundary faces.
    fn energy_flux_step(&self, old_u: &[f64], old: &Ghosts, new: &Ghosts) -> f64 {
        let g = self.state.grid;
        let (n1, nr) = (g.n1, g.nr);
        let u = &self.state.u;
        let mut f = 0.0;
        for j in 0..nr {
            let c = self.face_x1(j);
            let (b_old, b_new) = (old_u[j], u[j]);
            f += c * 0.5 * ((old.left[j] - b_old) + (new.left[j] - b_new)) * (new.left[j] - old.left[j]);
            let k = (n1 - 1) * nr + j;
            f += c * 0.5 * ((old.right[j] - old_u[k]) + (new.right[j] - u[k])) * (new.right[j] - old.right[j]);
        }
        let c = self.face_r(nr - 1);
        for i in 0..n1 {
            let k = i * nr + nr - 1;
            f += c * 0.5 * ((old.top[i] - old_u[k]) + (new.top[i] - u[k])) * (new.top[i] - old.top[i]);
        }
        f
    }

    /// Momentum flux `dP/dt` through the box faces from the stress tensor,
    /// with `∂ₜ` of the ghosts from consecutive ghost values.
    fn momentum_flux_rate(&self, old: &Ghosts, new: &Ghosts, dt: f64) -> f64 {
        let g = self.state.grid;
        let (n1, nr) = (g.n1, g.nr);
        let (u, v) = (&self.state.u, &self.state.v);
        let density = |uf: f64, vf: f64, normal: f64, tangent: f64| {
            0.5 * vf * vf + 0.25 * uf.powi(4) + 0.5 * normal * normal - 0.5 * tangent * tangent
        };
        // Centred derivative of face values; even across the axis, one-sided at the far end.
        let derivative = |f: &[f64], k: usize, h: f64, even: bool| -> f64 {
            let n = f.len();
            match k {
                0 if even => (f[1] - f[0]) / (2.0 * h),
                0 => (f[1] - f[0]) / h,
                k if k + 1 == n => (f[k] - f[k - 1]) / h,
                k => (f[k + 1] - f[k - 1]) / (2.0 * h),
            }
        };
        let mut rate = 0.0;
        for (side, ghost, prev, inner) in [(1.0, &new.right, &old.right, n1 - 1), (-1.0, &new.left, &old.left, 0)] {
            let faces: Vec<f64> = (0..nr).map(|j| 0.5 * (ghost[j] + u[inner * nr + j])).collect();
            for j in 0..nr {
                let k = inner * nr + j;
                let normal = side * (ghost[j] - u[k]) / g.h1;
                let vf = 0.5 * (v[k] + (ghost[j] - prev[j]) / dt);
                let area = 4.0 * PI * g.shell(j) * g.hr;
                rate += side * area * density(faces[j], vf, normal, derivative(&faces, j, g.hr, true));
            }
        }
        let faces: Vec<f64> = (0..n1).map(|i| 0.5 * (new.top[i] + u[i * nr + nr - 1])).collect();
        let area = 4.0 * PI * g.r_max * g.r_max * g.h1;
        for i in 0..n1 {
            let dr = (new.top[i] - u[i * nr + nr - 1]) / g.hr;
            rate += area * derivative(&faces, i, g.h1, false) * dr;
        }
        rate
    }

    /// One Verlet step.
    pub fn step(&mut self) -> Result<(), EvolveError> {
        let dt = self.state.dt;
        let half = 0.5 * dt;
        let old_u = self.state.u.clone();
        let force = &self.force;
        self.state.v.par_iter_mut().zip(force.par_iter()).for_each(|(v, f)| *v += half * f);
        let v = &self.state.v;
        self.state.u.par_iter_mut().zip(v.par_iter()).for_each(|(u, v)| *u += dt * v);
        let t_new = self.state.t + dt;
        if self.config.boundary == Boundary::Outgoing {
            self.update_outgoing();
        }
        let new = self.ghost_values(t_new);
        let old = std::mem::replace(&mut self.ghosts, new);
        self.energy_flux += self.energy_flux_step(&old_u, &old, &self.ghosts);
        self.state.t = t_new;
        self.compute_force();
        let force = &self.force;
        self.state.v.par_iter_mut().zip(force.par_iter()).for_each(|(v, f)| *v += half * f);
        let rate = self.momentum_flux_rate(&old, &self.ghosts, dt);
        self.momentum_flux += 0.5 * dt * (self.momentum_rate + rate);
        self.momentum_rate = rate;
        let max = self.max_abs();
        if !max.is_finite() || max > self.config.blowup {
            return Err(EvolveError::BlowUp { t: self.state.t, max });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.state.u.par_iter().map(|u| u.abs()).reduce(|| 0.0, f64::max)
    }

    /// Discrete `½Σ|∇u|² + ½Σv² − ¼Σu⁴`, including boundary faces.
    pub fn energy(&self) -> f64 {
        let g = self.state.grid;
        let (n1, nr) = (g.n1, g.nr);
        let (u, v) = (&self.state.u, &self.state.v);
        let bulk: f64 = (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..nr {
                    let k = i * nr + j;
                    s += g.weight(j) * (0.5 * v[k] * v[k] - 0.25 * u[k].powi(4));
                    let right = if i == n1 - 1 { self.ghosts.right[j] } else { u[k + nr] };
                    s += 0.5 * self.face_x1(j) * (right - u[k]).powi(2);
                    if i == 0 {
                        s += 0.5 * self.face_x1(j) * (u[k] - self.ghosts.left[j]).powi(2);
                    }
                    let up = if j == nr - 1 { self.ghosts.top[i] } else { u[k + 1] };
                    s += 0.5 * self.face_r(j) * (up - u[k]).powi(2);
                }
                s
            })
            .sum();
        bulk
    }

    /// Energy minus the accumulated boundary work; constant up to time stepping error.
    pub fn energy_budget(&self) -> f64 {
        self.energy() - self.energy_flux
    }

    /// `Σ w v ∂₁u` with centred differences.
    pub fn momentum(&self) -> f64 {
        let g = self.state.grid;
        let (n1, nr) = (g.n1, g.nr);
        let (u, v) = (&self.state.u, &self.state.v);
        (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..nr {
                    let k = i * nr + j;
                    let left = if i == 0 { self.ghosts.left[j] } else { u[k - nr] };
                    let right = if i == n1 - 1 { self.ghosts.right[j] } else { u[k + nr] };
                    s += g.weight(j) * v[k] * (right - left) / (2.0 * g.h1);
                }
                s
            })
            .sum()
    }

    pub fn momentum_budget(&self) -> f64 {
        self.momentum() - self.momentum_flux
    }

    /// Discrete `‖u⃗ − reference‖_𝓗` at the current time.
    pub fn deviation(&self) -> f64 {
        let g = self.state.grid;
        let t = self.state.t;
        let (n1, nr) = (g.n1, g.nr);
        let r = &self.reference;
        let d: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|k| self.state.u[k] - r.value(g.x1((k / nr) as isize), g.r((k % nr) as isize), t))
            .collect();
        let s: f64 = (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..nr {
                    let k = i * nr + j;
                    let (x1, rr) = (g.x1(i as isize), g.r(j as isize));
                    let dv = self.state.v[k] - r.velocity(x1, rr, t);
                    s += g.weight(j) * dv * dv;
                    let right = if i == n1 - 1 { self.ghost_dev.right[j] } else { d[k + nr] };
                    s += self.face_x1(j) * (right - d[k]).powi(2);
                    if i == 0 {
                        s += self.face_x1(j) * (d[k] - self.ghost_dev.left[j]).powi(2);
                    }
                    let up = if j == nr - 1 { self.ghost_dev.top[i] } else { d[k + 1] };
                    s += self.face_r(j) * (up - d[k]).powi(2);
                }
                s
            })
            .sum();
        s.sqrt()
    }

    /// `L²` pairing of `(u − reference, v − ∂ₜreference)` with a pair.
    pub fn pairing(&self, p: &FieldPair) -> f64 {
        let g = self.state.grid;
        let t = self.state.t;
        let nr = g.nr;
        let r = &self.reference;
        (0..g.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = ((k / nr) as isize, (k % nr) as isize);
                let x = g.point(i, j);
                let d1 = self.state.u[k] - r.value(x[0], x[1], t);
                let d2 = self.state.v[k] - r.velocity(x[0], x[1], t);
                g.weight(j as usize) * (d1 * p.first.value(&x) + d2 * p.second.value(&x))
            })
            .sum()
    }

    /// `L²` pairing of the difference with another run on the same grid.
    pub fn pairing_with_difference(&self, other: &EvolutionState, p: &FieldPair) -> f64 {
        let g = self.state.grid;
        let nr = g.nr;
        (0..g.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = ((k / nr) as isize, (k % nr) as isize);
                let x = g.point(i, j);
                let d1 = self.state.u[k] - other.u[k];
                let d2 = self.state.v[k] - other.v[k];
                g.weight(j as usize) * (d1 * p.first.value(&x) + d2 * p.second.value(&x))
            })
            .sum()
    }

    /// Position of the extremum of `τu` on the innermost row within `[lo, hi]`,
    /// refined by a parabola through the three best cells.
    pub fn axis_peak(&self, lo: f64, hi: f64, sign: f64) -> Option<f64> {
        let g = self.state.grid;
        let nr = g.nr;
        let row: Vec<(usize, f64)> = (0..g.n1).filter(|&i| (lo..=hi).contains(&g.x1(i as isize))).map(|i| (i, sign * self.state.u[i * nr])).collect();
        let &(best, _) = row.iter().max_by(|a, b| a.1.total_cmp(&b.1))?;
        if best == 0 || best + 1 >= g.n1 {
            return Some(g.x1(best as isize));
        }
        let (a, b, c) = (sign * self.state.u[(best - 1) * nr], sign * self.state.u[best * nr], sign * self.state.u[(best + 1) * nr]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        Some(g.x1(best as isize) + shift.clamp(-0.5, 0.5) * g.h1)
    }
}

/// Exit status of a monitored run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    TubeExit { t: f64 },
    BlowUp { t: f64 },
}

/// Monitors sampled during a run.
#[derive(Clone, Debug, Default)]
pub struct Monitors {
    /// Exponential directions per soliton (unshifted); paired at the moving centre.
    pub directions: Vec<(usize, ExpDirection)>,
    /// Stop once the deviation exceeds this value.
    pub tube: Option<f64>,
    /// Full decomposition and energy functionals every `stride`-th sample.
    pub modulation: Option<(ModulationSetup, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub energy: f64,
    pub energy_budget: f64,
    pub momentum: f64,
    pub momentum_budget: f64,
    pub deviation: f64,
    pub z_plus: Vec<f64>,
    pub z_minus: Vec<f64>,
    /// `Σ(z⁺)²`.
    pub stable_amplitude: f64,
    /// `Σ(z⁻)²`, the forward-unstable coordinates.
    pub unstable_amplitude: f64,
    pub centers: Vec<Option<f64>>,
    pub max_abs: f64,
    pub modulation: Option<ModulationState>,
    pub energy_report: Option<EnergyReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    /// Largest `|E_budget(t) − E_budget(t₀)| / |E(t₀)|`, per 10 time units.
    pub energy: f64,
    /// Same for momentum, relative to `max(|P(t₀)|, E(t₀))`.
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSeries {
    pub samples: Vec<MonitorSample>,
    pub status: RunStatus,
    pub drift: Drift,
}

impl MonitorSeries {
    pub fn final_time(&self) -> f64 {
        match self.status {
            RunStatus::TubeExit { t } | RunStatus::BlowUp { t } => t,
            RunStatus::Completed => self.samples.last().map_or(0.0, |s| s.t),
        }
    }

    /// Fitted speed of soliton `n` from its tracked centre.
    pub fn center_speed(&self, n: usize) -> Option<f64> {
        let (ts, xs): (Vec<f64>, Vec<f64>) = self.samples.iter().filter_map(|s| s.centers.get(n).copied().flatten().map(|c| (s.t, c))).unzip();
        (ts.len() >= 3).then(|| linear_fit(&ts, &xs).0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvolveError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| EvolveError::Checkpoint(e.to_string()))?;
        w.write_record(["t", "energy", "energy_budget", "momentum", "momentum_budget", "deviation", "stable_amplitude", "unstable_amplitude", "max_abs"])
            .map_err(|e| EvolveError::Checkpoint(e.to_string()))?;
        for s in &self.samples {
            let row = [s.t, s.energy, s.energy_budget, s.momentum, s.momentum_budget, s.deviation, s.stable_amplitude, s.unstable_amplitude, s.max_abs];
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(|e| EvolveError::Checkpoint(e.to_string()))?;
        }
        w.flush().map_err(|e| EvolveError::Checkpoint(e.to_string()))
    }
}

impl Evolver {
    fn sample_monitors(&self, monitors: &Monitors, full: bool) -> Result<MonitorSample, EvolveError> {
        let t = self.state.t;
        let mut z_plus = Vec::new();
        let mut z_minus = Vec::new();
        for (n, dir) in &monitors.directions {
            let c = self.reference.solitons[*n].center(t);
            let d = dir.centred_at(c);
            z_plus.push(self.pairing(&d.z_plus));
            z_minus.push(self.pairing(&d.z_minus));
        }
        let sols = &self.reference.solitons;
        let centers = sols
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let c = s.center(t);
                let lo = if n > 0 { 0.5 * (c + sols[n - 1].center(t)) } else { f64::NEG_INFINITY };
                let hi = if n + 1 < sols.len() { 0.5 * (c + sols[n + 1].center(t)) } else { f64::INFINITY };
                self.axis_peak(lo, hi, s.sign)
            })
            .collect();
        let (modulation, energy_report) = match (&monitors.modulation, full) {
            (Some((setup, _)), true) => {
                let basis = setup.basis(t)?;
                let d = basis.decompose(&self.state.to_pair()?)?;
                let cfg = setup.cfg.clone().with_parameters(d.state.a.clone(), d.state.b.clone()).map_err(ModulationError::from)?;
                let e = energy_report(&d.remainder, &cfg, t, &setup.spec).ok();
                (Some(d.state), e)
            }
            _ => (None, None),
        };
        Ok(MonitorSample {
            t,
            energy: self.energy(),
            energy_budget: self.energy_budget(),
            momentum: self.momentum(),
            momentum_budget: self.momentum_budget(),
            deviation: self.deviation(),
            stable_amplitude: z_plus.iter().map(|z| z * z).sum(),
            unstable_amplitude: z_minus.iter().map(|z| z * z).sum(),
            z_plus,
            z_minus,
            centers,
            max_abs: self.max_abs(),
            modulation,
            energy_report,
        })
    }

    /// Runs to `t1`, sampling monitors every `cadence` time units.
    pub fn run(&mut self, t1: f64, cadence: f64, monitors: &Monitors) -> Result<MonitorSeries, EvolveError> {
        let t0 = self.state.t;
        let every = ((cadence / self.state.dt).round() as usize).max(1);
        let steps = ((t1 - t0) / self.state.dt).round().max(0.0) as usize;
        let stride = monitors.modulation.as_ref().map_or(usize::MAX, |m| m.1.max(1));
        let mut samples = vec![self.sample_monitors(monitors, true)?];
        let mut status = RunStatus::Completed;
        for s in 1..=steps {
            if let Err(e) = self.step() {
                match e {
                    EvolveError::BlowUp { t, .. } => {
                        status = RunStatus::BlowUp { t };
                        break;
                    }
                    other => return Err(other),
                }
            }
            let tube_check = monitors.tube.is_some();
            if s % every == 0 || s == steps {
                let full = samples.len() % stride == 0;
                let sample = self.sample_monitors(monitors, full)?;
                let exit = monitors.tube.is_some_and(|g| sample.deviation > g);
                samples.push(sample);
                if exit {
                    status = RunStatus::TubeExit { t: self.state.t };
                    break;
                }
            } else if tube_check && s % every.div_ceil(4).max(1) == 0 {
                let dev = self.deviation();
                if dev > monitors.tube.unwrap_or(f64::INFINITY) {
                    samples.push(self.sample_monitors(monitors, false)?);
                    status = RunStatus::TubeExit { t: self.state.t };
                    break;
                }
            }
        }
        let drift = drift_of(&samples);
        Ok(MonitorSeries { samples, status, drift })
    }
}

fn drift_of(samples: &[MonitorSample]) -> Drift {
    let Some(first) = samples.first() else {
        return Drift { energy: 0.0, momentum: 0.0 };
    };
    let span = samples.last().map_or(0.0, |s| s.t - first.t);
    let per = (span / 10.0).max(1.0);
    let e_scale = first.energy.abs().max(f64::MIN_POSITIVE);
    let p_scale = first.momentum.abs().max(e_scale);
    let e = samples.iter().map(|s| (s.energy_budget - first.energy_budget).abs()).fold(0.0, f64::max) / e_scale;
    let p = samples.iter().map(|s| (s.momentum_budget - first.momentum_budget).abs()).fold(0.0, f64::max) / p_scale;
    Drift { energy: e / per, momentum: p / per }
}

/// Runs `(u₀, t₀)` to `t₁` on a grid; the spec-level entry point.
pub fn evolve(
    grid: CylindricalGrid,
    data: &FieldPair,
    reference: Reference,
    t0: f64,
    t1: f64,
    cadence: f64,
    monitors: &Monitors,
    config: EvolverConfig,
) -> Result<MonitorSeries, EvolveError> {
    let state = EvolutionState::sample(grid, data, t0, config.cfl)?;
    Evolver::new(state, reference, config)?.run(t1, cadence, monitors)
}

/// Margins of the bootstrap inequalities at one time; positive means satisfied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub t: f64,
    /// `C₀² t⁻² log^{−1/2} t − |a|`.
    pub a: f64,
    /// `C₀² t⁻² − |b|`.
    pub b: f64,
    /// `C₀ t⁻³ − ‖φ⃗‖_𝓗`.
    pub phi: f64,
    /// `t⁻⁶ − Σ(z⁻)²`.
    pub z_minus: f64,
    /// `t⁻⁷ − Σ(z⁺)²`.
    pub z_plus: f64,
}

impl BootstrapRow {
    pub fn holds(&self) -> bool {
        self.a > 0.0 && self.b > 0.0 && self.phi > 0.0 && self.z_minus > 0.0 && self.z_plus > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapTable {
    pub c0: f64,
    pub rows: Vec<BootstrapRow>,
    pub first_violation: Option<f64>,
}

pub fn monitor_bootstrap(series: &[ModulationState], c0: f64) -> BootstrapTable {
    let rows: Vec<BootstrapRow> = series
        .iter()
        .map(|s| {
            let t = s.t;
            let sq = |v: &Vec<Vec<f64>>| v.iter().flatten().map(|z| z * z).sum::<f64>();
            BootstrapRow {
                t,
                a: c0 * c0 * t.powi(-2) / t.ln().max(f64::MIN_POSITIVE).sqrt() - s.a_norm(),
                b: c0 * c0 * t.powi(-2) - s.b_norm(),
                phi: c0 * t.powi(-3) - s.phi_norm,
                z_minus: t.powi(-6) - sq(&s.z_minus),
                z_plus: t.powi(-7) - sq(&s.z_plus),
            }
        })
        .collect();
    let first_violation = rows.iter().find(|r| !r.holds()).map(|r| r.t);
    BootstrapTable { c0, rows, first_violation }
}

/// Observed order of a quantity measured at successive halvings of `h`.
pub fn convergence_orders(values: &[f64]) -> Result<Vec<f64>, FitError> {
    if values.len() < 2 {
        return Err(FitError::TooFewSamples(values.len()));
    }
    Ok(crate::fit::observed_orders(values))
}

/// Power fit of a monitored quantity against time, for decay checks.
pub fn fit_in_time(series: &MonitorSeries, quantity: impl Fn(&MonitorSample) -> f64) -> Result<crate::fit::PowerFit, FitError> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = series.samples.iter().map(|s| (s.t, quantity(s))).unzip();
    power_fit(&ts, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::states::ground_state;

    fn resting(h: f64, amplitude: f64) -> (Evolver, CylindricalGrid) {
        resting_with(h, amplitude, DEFAULT_CFL)
    }

    fn resting_with(h: f64, amplitude: f64, cfl: f64) -> (Evolver, CylindricalGrid) {
        let grid = CylindricalGrid::new(-6.0, 6.0, 6.0, h).unwrap();
        let w = ground_state();
        let reference = Reference::single(&w, Speed::new(0.0).unwrap());
        let bump = FnField::new("bump", Symmetry::Cylindrical, move |x| amplitude * (-(x[0] * x[0] + x[3] * x[3])).exp()).into_field();
        let data = FieldPair::joined(field::sum(w, bump), field::zero(Symmetry::Cylindrical));
        let state = EvolutionState::sample(grid, &data, 0.0, cfl).unwrap();
        (Evolver::new(state, reference, EvolverConfig { cfl, ..Default::default() }).unwrap(), grid)
    }

    #[test]
    fn cfl_violations_are_rejected() {
        let grid = CylindricalGrid::new(-2.0, 2.0, 2.0, 0.2).unwrap();
        let zeros = vec![0.0; grid.len()];
        assert!(matches!(EvolutionState::new(grid, zeros.clone(), zeros.clone(), 0.0, 0.11), Err(EvolveError::Cfl { .. })));
        let state = EvolutionState::new(grid, zeros.clone(), zeros, 0.0, 0.05).unwrap();
        let config = EvolverConfig { cfl: 0.6, ..Default::default() };
        let reference = Reference::single(&ground_state(), Speed::new(0.0).unwrap());
        assert!(Evolver::new(state, reference, config).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (mut ev, _) = resting(0.25, 0.05);
        for _ in 0..7 {
            ev.step().unwrap();
        }
        let path = std::env::temp_dir().join(format!("wave4d-checkpoint-{}.w4d", std::process::id()));
        ev.state.save(&path).unwrap();
        let back = EvolutionState::load(&path).unwrap();
        let _ = std::fs::remove_file(&path);
        assert_eq!(back.u, ev.state.u);
        assert_eq!(back.v, ev.state.v);
        assert_eq!((back.t, back.dt), (ev.state.t, ev.state.dt));
        assert_eq!(back.grid.n1, ev.state.grid.n1);
        assert!((back.grid.x1_min - ev.state.grid.x1_min).abs() < 1e-12);
    }

    #[test]
    fn verlet_is_time_reversible() {
        let (mut ev, _) = resting(0.25, 0.05);
        let start = ev.state.u.clone();
        let flip = |ev: &mut Evolver| {
            ev.state.v.iter_mut().for_each(|v| *v = -*v);
            ev.compute_force();
        };
        for _ in 0..40 {
            ev.step().unwrap();
        }
        let moved = ev.state.u.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(moved > 1e-3);
        flip(&mut ev);
        for _ in 0..40 {
            ev.step().unwrap();
        }
        let back = ev.state.u.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(back < 1e-11, "returned within {back:e}");
    }

    #[test]
    fn energy_error_is_second_order_in_time() {
        // Below the ground state the bump disperses; above it the solution blows up.
        let drift = |cfl: f64| {
            let (mut ev, _) = resting_with(0.25, -0.05, cfl);
            let e0 = ev.energy_budget();
            while ev.t() < 5.0 - 1e-9 {
                ev.step().unwrap();
            }
            ((ev.energy_budget() - e0) / e0).abs()
        };
        let (coarse, fine) = (drift(0.25), drift(0.125));
        assert!(coarse < 1e-2);
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "drift ratio {ratio}");
    }

    #[test]
    fn bootstrap_flags_the_first_violation() {
        let state = |t: f64, a: f64| ModulationState {
            t,
            a: vec![a],
            b: vec![vec![0.0]],
            z_plus: vec![vec![0.0]],
            z_minus: vec![vec![0.0]],
            c: None,
            phi_norm: 0.0,
            deviation_norm: 0.0,
            orthogonality: 0.0,
            condition: 1.0,
        };
        let ok = monitor_bootstrap(&[state(10.0, 1e-4), state(20.0, 1e-5)], 1.0);
        assert_eq!(ok.first_violation, None);
        let bad = monitor_bootstrap(&[state(10.0, 1e-4), state(20.0, 1e-2), state(40.0, 1e-2)], 1.0);
        assert_eq!(bad.first_violation, Some(20.0));
    }
}
