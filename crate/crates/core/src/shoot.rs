//! Shooting on the unstable amplitude, linearized rate measurement and the
//! stationarity refinement study, all around one boosted ground state.
//!
//! A sampled ground state is not an equilibrium of the discrete flow: its
//! truncation error has a component along the discrete unstable mode, which
//! grows like `e^{αt}`. Bisection on the amplitude of `Υ⃗⁺` cancels that
//! component and gives the background for the other studies.

use serde::{Deserialize, Serialize};

use crate::evolve::{CylindricalGrid, EvolutionState, EvolveError, Evolver, EvolverConfig, Reference};
use crate::field::{Field, FieldPair};
use crate::fit::observed_orders;
use crate::lorentz::{exp_directions, ExpDirection, Speed};
use crate::spectrum::UnstableMode;
use crate::states::linear_fit;

/// Everything fixed across the runs of one study.
#[derive(Clone, Debug)]
pub struct Background {
    pub grid: CylindricalGrid,
    pub profile: Field,
    pub speed: Speed,
    pub directions: ExpDirection,
    pub config: EvolverConfig,
}

impl Background {
    pub fn new(grid: CylindricalGrid, profile: Field, speed: Speed, mode: &UnstableMode) -> Result<Self, EvolveError> {
        let directions = exp_directions(mode.spline.clone(), mode.rate, speed)?;
        Ok(Background { grid, profile, speed, directions, config: EvolverConfig::default() })
    }

    pub fn reference(&self) -> Reference {
        Reference::single(&self.profile, self.speed)
    }

    pub fn alpha(&self) -> f64 {
        self.directions.alpha()
    }

    /// `Q⃗_ℓ + Σ cᵢ dᵢ` sampled at `t = 0`.
    pub fn state(&self, terms: &[(f64, &FieldPair)]) -> Result<EvolutionState, EvolveError> {
        let mut all = vec![(1.0, self.reference().pair(0.0))];
        all.extend(terms.iter().map(|(c, p)| (*c, (*p).clone())));
        EvolutionState::sample(self.grid, &FieldPair::combination(&all), 0.0, self.config.cfl)
    }

    pub fn evolver(&self, terms: &[(f64, &FieldPair)]) -> Result<Evolver, EvolveError> {
        Evolver::new(self.state(terms)?, self.reference(), self.config.clone())
    }

    /// `W⃗_ℓ + εΥ⃗⁺`.
    pub fn perturbed(&self, eps: f64) -> Result<Evolver, EvolveError> {
        self.evolver(&[(eps, &self.directions.upsilon_plus)])
    }

    /// Sign of the forward-unstable coordinate `z⁻` of the deviation.
    fn unstable_sign(&self, ev: &Evolver) -> f64 {
        let c = self.speed.get() * ev.t();
        ev.pairing(&self.directions.centred_at(c).z_minus).signum()
    }
}

/// Outcome of one run from `W⃗_ℓ + εΥ⃗⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub amplitude: f64,
    /// Exit time from the tube, or the final time if the run stayed inside.
    pub exit_time: f64,
    /// Sign of `z⁻` at exit, `0` if the run stayed inside.
    pub sign: f64,
    /// `(z⁻)²` at exit.
    pub unstable_amplitude: f64,
    pub blew_up: bool,
}

/// Tube radius, horizon and check cadence for exit runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub radius: f64,
    pub horizon: f64,
    pub check_every: f64,
}

impl Default for Tube {
    fn default() -> Self {
        Tube { radius: 0.5, horizon: 40.0, check_every: 0.25 }
    }
}

pub fn exit_run(bg: &Background, eps: f64, tube: &Tube) -> Result<ExitSample, EvolveError> {
    let mut ev = bg.perturbed(eps)?;
    let every = ((tube.check_every / ev.state.dt).round() as usize).max(1);
    let steps = (tube.horizon / ev.state.dt).round() as usize;
    for s in 1..=steps {
        match ev.step() {
            Ok(()) => {}
            Err(EvolveError::BlowUp { t, .. }) => {
                return Ok(ExitSample { amplitude: eps, exit_time: t, sign: bg.unstable_sign(&ev), unstable_amplitude: f64::INFINITY, blew_up: true });
            }
            Err(e) => return Err(e),
        }
        if s % every == 0 && ev.deviation() > tube.radius {
            let c = bg.speed.get() * ev.t();
            let z = ev.pairing(&bg.directions.centred_at(c).z_minus);
            return Ok(ExitSample { amplitude: eps, exit_time: ev.t(), sign: z.signum(), unstable_amplitude: z * z, blew_up: false });
        }
    }
    Ok(ExitSample { amplitude: eps, exit_time: ev.t(), sign: 0.0, unstable_amplitude: 0.0, blew_up: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootReport {
    pub speed: f64,
    pub bracket: (f64, f64),
    pub ends: [ExitSample; 2],
    /// Evenly spaced amplitudes across the bracket.
    pub scan: Vec<ExitSample>,
    pub bisection: Vec<ExitSample>,
    pub optimum: ExitSample,
    /// Scan exit times rise to one maximum and then fall.
    pub unimodal: bool,
    /// Optimum exit time over the longer bracket-end exit time.
    pub persistence_ratio: f64,
}

impl ShootReport {
    pub fn passes(&self) -> bool {
        self.unimodal && self.persistence_ratio >= 2.0
    }
}

/// Bisection keeping opposite exit signs at the two ends.
pub fn bisect(bg: &Background, bracket: (f64, f64), tube: &Tube, iterations: usize) -> Result<(Vec<ExitSample>, [ExitSample; 2]), EvolveError> {
    let lo_end = exit_run(bg, bracket.0, tube)?;
    let hi_end = exit_run(bg, bracket.1, tube)?;
    if lo_end.sign == 0.0 || hi_end.sign == 0.0 {
        return Err(EvolveError::BracketTooNarrow(tube.horizon));
    }
    if lo_end.sign == hi_end.sign {
        return Err(EvolveError::SameSign);
    }
    let (mut lo, mut hi) = bracket;
    let mut path = Vec::new();
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let s = exit_run(bg, mid, tube)?;
        path.push(s);
        if s.sign == 0.0 {
            break;
        }
        if s.sign == lo_end.sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((path, [lo_end, hi_end]))
}

fn best(samples: &[ExitSample]) -> Option<ExitSample> {
    samples.iter().copied().max_by(|a, b| a.exit_time.total_cmp(&b.exit_time))
}

/// Exit times across the bracket, plus bisection towards the longest-lived amplitude.
pub fn shooting_experiment(bg: &Background, bracket: (f64, f64), tube: &Tube, scan: usize, iterations: usize) -> Result<ShootReport, EvolveError> {
    let (bisection, ends) = bisect(bg, bracket, tube, iterations)?;
    let optimum = best(&bisection).unwrap_or(ends[0]);
    let scan: Vec<ExitSample> = (0..scan)
        .map(|k| {
            let s = k as f64 / (scan.max(2) - 1) as f64;
            exit_run(bg, bracket.0 + s * (bracket.1 - bracket.0), tube)
        })
        .collect::<Result<_, _>>()?;
    let peak = best(&scan).map(|p| p.amplitude);
    let unimodal = peak.is_some_and(|p| {
        let rising = scan.windows(2).filter(|w| w[1].amplitude <= p).all(|w| w[1].exit_time >= w[0].exit_time - 1e-9);
        let falling = scan.windows(2).filter(|w| w[0].amplitude >= p).all(|w| w[1].exit_time <= w[0].exit_time + 1e-9);
        rising && falling
    });
    let end_time = ends[0].exit_time.max(ends[1].exit_time);
    Ok(ShootReport {
        speed: bg.speed.get(),
        bracket,
        ends,
        scan,
        bisection,
        persistence_ratio: optimum.exit_time / end_time,
        optimum,
        unimodal,
    })
}

/// Amplitude of `Υ⃗⁺` that keeps the sampled soliton longest in the tube.
pub fn corrected_amplitude(bg: &Background, bracket: (f64, f64), tube: &Tube, iterations: usize) -> Result<f64, EvolveError> {
    let (path, ends) = bisect(bg, bracket, tube, iterations)?;
    Ok(best(&path).unwrap_or(ends[0]).amplitude)
}

/// Fitted exponential rates of the exponential coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRates {
    pub speed: f64,
    pub alpha: f64,
    pub amplitude: f64,
    /// Rate of `z⁻` after adding `εΥ⃗⁺`; expected `+α`.
    pub growth: f64,
    /// Rate of `z⁺` after adding `εΥ⃗⁻`; expected `−α`.
    pub decay: f64,
    pub window: (f64, f64),
    /// `z⁻` at the window start, for linearity checks.
    pub initial_growing: f64,
}

impl ModeRates {
    pub fn growth_error(&self) -> f64 {
        (self.growth - self.alpha).abs() / self.alpha
    }

    pub fn decay_error(&self) -> f64 {
        (self.decay + self.alpha).abs() / self.alpha
    }
}

/// Rates of `z∓` for `W⃗_ℓ + (ε* + ε)Υ⃗±` measured against the background run
/// `W⃗_ℓ + ε*Υ⃗⁺`, over `window` (times in units of `1/α`).
pub fn measure_mode_rates(bg: &Background, background_eps: f64, eps: f64, window: (f64, f64)) -> Result<ModeRates, EvolveError> {
    let d = &bg.directions;
    let mut base = bg.perturbed(background_eps)?;
    let mut grow = bg.evolver(&[(background_eps, &d.upsilon_plus), (eps, &d.upsilon_plus)])?;
    let mut fall = bg.evolver(&[(background_eps, &d.upsilon_plus), (eps, &d.upsilon_minus)])?;
    let alpha = bg.alpha();
    let (t0, t1) = (window.0 / alpha, window.1 / alpha);
    let dt = base.state.dt;
    let every = ((0.05 / alpha / dt).round() as usize).max(1);
    let steps = (t1 / dt).ceil() as usize;
    let (mut ts, mut zg, mut zd) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..=steps {
        if s > 0 {
            base.step()?;
            grow.step()?;
            fall.step()?;
        }
        let t = base.t();
        if s % every == 0 && t >= t0 - 1e-12 {
            let c = bg.speed.get() * t;
            let dir = d.centred_at(c);
            ts.push(t);
            zg.push(grow.pairing_with_difference(&base.state, &dir.z_minus));
            zd.push(fall.pairing_with_difference(&base.state, &dir.z_plus));
        }
    }
    if zg.last().is_some_and(|z| z.abs() > 0.1) {
        return Err(EvolveError::Saturated);
    }
    let rate = |zs: &[f64]| {
        let logs: Vec<f64> = zs.iter().map(|z| z.abs().max(f64::MIN_POSITIVE).ln()).collect();
        linear_fit(&ts, &logs).0
    };
    Ok(ModeRates {
        speed: bg.speed.get(),
        alpha,
        amplitude: eps,
        growth: rate(&zg),
        decay: rate(&zd),
        window: (t0, t1),
        initial_growing: zg.first().copied().unwrap_or(0.0),
    })
}

/// Deviation of the shoot-corrected soliton at one resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityRow {
    pub h: f64,
    pub corrected_amplitude: f64,
    /// `max_t ‖u⃗(t) − Q⃗_ℓ(t)‖_𝓗` over the window.
    pub max_deviation: f64,
    pub final_deviation: f64,
    pub center_speed: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityStudy {
    pub speed: f64,
    pub horizon: f64,
    pub rows: Vec<StationarityRow>,
    pub orders: Vec<f64>,
}

/// Runs the corrected soliton on successively refined grids.
pub fn stationarity_study(
    bgs: &[Background],
    bracket: (f64, f64),
    tube: &Tube,
    iterations: usize,
    horizon: f64,
) -> Result<StationarityStudy, EvolveError> {
    let mut rows = Vec::new();
    for bg in bgs {
        let eps = corrected_amplitude(bg, bracket, tube, iterations)?;
        let mut ev = bg.perturbed(eps)?;
        let monitors = crate::evolve::Monitors::default();
        let series = ev.run(horizon, 0.5, &monitors)?;
        let devs: Vec<f64> = series.samples.iter().map(|s| s.deviation).collect();
        rows.push(StationarityRow {
            h: bg.grid.h1,
            corrected_amplitude: eps,
            max_deviation: devs.iter().copied().fold(0.0, f64::max),
            final_deviation: devs.last().copied().unwrap_or(0.0),
            center_speed: series.center_speed(0).unwrap_or(f64::NAN),
            energy_drift: series.drift.energy,
            momentum_drift: series.drift.momentum,
        });
    }
    let orders = observed_orders(&rows.iter().map(|r| r.max_deviation).collect::<Vec<_>>());
    Ok(StationarityStudy { speed: bgs.first().map_or(0.0, |b| b.speed.get()), horizon, rows, orders })
}
