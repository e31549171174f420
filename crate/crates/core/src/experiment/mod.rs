//! Configured runs of the verification suites with CSV/JSON artifacts.
//!
//! Each run writes into `<root>/<suite>/`:
//! `config.resolved.toml`, `summary.json` (see [`summary::SUMMARY_SCHEMA`]),
//! `timing.json` and suite-specific CSV tables. Everything except
//! `timing.json` is byte-identical across runs with the same configuration.

pub mod config;
pub mod summary;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::energy::{CoercivityProbe, EnergyError};
use crate::evolve::{CylindricalGrid, EvolveError};
use crate::field::{self, FnField, Symmetry};
use crate::fit::geometric;
use crate::interaction::{psi_xi_lawcheck, rate_study, verify_g_norms, InteractionError, MultiSolitonConfig, RateCase, Soliton};
use crate::lorentz::{LorentzError, Speed};
use crate::modulation::{ground_state_setup, ModulationError};
use crate::quadrature::QuadratureSpec;
use crate::shoot::{corrected_amplitude, measure_mode_rates, shooting_experiment, stationarity_study, Background, Tube};
use crate::spectrum::{radial_unstable_mode, SpectrumError};
use crate::states::{apply_generator, ground_state, surrogate_closed_form, Generator};
use crate::suites::{
    cancellation_spec, cancellation_study, decay_table, exp_identities, exp_residual_tolerance, generator_residuals,
    initial_data_constants, kelvin_check, radial_residual_ladder, shooting_rate, spectral_suite, SuiteError,
};

pub use config::{ConfigError, ExperimentConfig, ProfileChoice, OUTPUT_ENV};
pub use summary::{render, Check, Summary};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

impl RunError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    States,
    Spectrum,
    Interactions,
    Modulate,
    Energy,
    Evolve,
    Shoot,
}

impl Suite {
    pub const ALL: [Suite; 7] =
        [Suite::States, Suite::Spectrum, Suite::Interactions, Suite::Modulate, Suite::Energy, Suite::Evolve, Suite::Shoot];

    pub fn name(self) -> &'static str {
        match self {
            Suite::States => "states",
            Suite::Spectrum => "spectrum",
            Suite::Interactions => "interactions",
            Suite::Modulate => "modulate",
            Suite::Energy => "energy",
            Suite::Evolve => "evolve",
            Suite::Shoot => "shoot",
        }
    }
}

impl FromStr for Suite {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RunError::Schema(format!("unknown suite '{s}'")))
    }
}

/// CSV and JSON writer rooted at one suite directory.
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn create(dir: PathBuf) -> Result<Self, RunError> {
        std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
        Ok(Artifacts { dir })
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| RunError::io(&path, e))?;
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))
    }
}

/// Runs one suite, writes its artifacts under `root` and returns the summary.
pub fn run_suite(suite: Suite, cfg: &ExperimentConfig, root: &Path) -> Result<Summary, RunError> {
    cfg.validate()?;
    let out = Artifacts::create(root.join(suite.name()))?;
    out.text("config.resolved.toml", &cfg.to_toml())?;
    let clock = Instant::now();
    let checks = match suite {
        Suite::States => states(cfg, &out)?,
        Suite::Spectrum => spectrum(cfg, &out)?,
        Suite::Interactions => interactions(cfg, &out)?,
        Suite::Modulate => modulate(cfg, &out)?,
        Suite::Energy => energy(cfg, &out)?,
        Suite::Evolve => evolve(cfg, &out)?,
        Suite::Shoot => shoot(cfg, &out)?,
    };
    let summary = Summary::new(suite.name(), checks, serde_json::to_value(cfg)?);
    summary.write(&out.dir)?;
    let timing = serde_json::json!({ "suite": suite.name(), "seconds": clock.elapsed().as_secs_f64() });
    out.text("timing.json", &format!("{timing}\n"))?;
    Ok(summary)
}

fn states(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.states;
    let w = ground_state();
    let mut checks = Vec::new();

    #[derive(Serialize)]
    struct LadderRow<'a> {
        profile: &'a str,
        h: f64,
        residual: f64,
    }
    let mut ladder_rows = Vec::new();
    let ladder = radial_residual_ladder(&w, s.residual_r_max, s.residual_step, s.residual_levels)?;
    ladder_rows.extend(ladder.steps.iter().zip(&ladder.norms).map(|(&h, &residual)| LadderRow { profile: "w", h, residual }));
    checks.push(Check::at_least(1, "W residual order under h/2", ladder.min_order(), s.min_order));
    if cfg.profile != ProfileChoice::W {
        let name = cfg.profile.to_string();
        let q = cfg.profile_field(cfg.profile)?;
        let other = radial_residual_ladder(&q, s.residual_r_max, s.residual_step, s.residual_levels)?;
        ladder_rows.extend(other.steps.iter().zip(&other.norms).map(|(&h, &residual)| LadderRow { profile: "selected", h, residual }));
        let row = Check::at_least(1, format!("{name} residual order under h/2"), other.min_order(), s.min_order);
        // The surrogate is not a stationary state; its residual does not vanish.
        checks.push(if cfg.profile == ProfileChoice::Surrogate { row.informational() } else { row });
    }
    out.csv("residual_ladder.csv", &ladder_rows)?;

    let k = kelvin_check(&w, 8.0, s.kelvin_points, s.kelvin_half_width, cfg.seed)?;
    checks.push(Check::at_most(1, format!("Kelvin vs 8W(8x) at {} points", k.points), k.max_error, s.kelvin_tol));

    let q = surrogate_closed_form();
    let decay = decay_table(
        &[
            ("W".into(), w.clone(), 2.0),
            ("d1 W".into(), apply_generator(w.clone(), Generator::Translation(0)), 3.0),
            ("surrogate".into(), q.clone(), 3.0),
            ("d4 surrogate".into(), apply_generator(q, Generator::Translation(3)), 4.0),
        ],
        s.decay_r0,
    )?;
    #[derive(Serialize)]
    struct DecayCsv<'a> {
        label: &'a str,
        expected: f64,
        slope: f64,
        intercept: f64,
        r_squared: f64,
    }
    out.csv(
        "decay.csv",
        &decay
            .iter()
            .map(|r| DecayCsv { label: &r.label, expected: -r.expected, slope: r.fit.slope, intercept: r.fit.intercept, r_squared: r.fit.r_squared })
            .collect::<Vec<_>>(),
    )?;
    for r in &decay {
        let mut c = Check::new(1, format!("decay slope of {}", r.label), r.fit.slope, format!("{} ± {}", -r.expected, s.decay_tol), r.passes(s.decay_tol));
        c.criterion = None;
        checks.push(c);
    }

    let gens = generator_residuals(&w, &Generator::all(), s.generator_ball, s.generator_step, s.generator_levels)?;
    #[derive(Serialize)]
    struct GenCsv<'a> {
        generator: &'a str,
        h: f64,
        residual: f64,
    }
    let mut gen_rows = Vec::new();
    for g in &gens {
        gen_rows.extend(g.ladder.steps.iter().zip(&g.ladder.norms).map(|(&h, &residual)| GenCsv { generator: &g.generator, h, residual }));
        checks.push(if g.ladder.identically_zero() {
            let largest = g.ladder.norms.iter().copied().fold(0.0, f64::max);
            Check::at_most(2, format!("generator {} annihilates W, largest residual", g.generator), largest, crate::suites::ROUNDING_FLOOR)
        } else {
            Check::at_least(2, format!("generator {} residual order", g.generator), g.ladder.min_order(), s.min_order)
        });
    }
    out.csv("generators.csv", &gen_rows)?;

    let study = cancellation_study(&w, s.cancellation_triples, cfg.seed, &cancellation_spec())?;
    #[derive(Serialize)]
    struct CanCsv {
        triple: usize,
        value: f64,
        scale: f64,
        ratio: f64,
    }
    let mut rows: Vec<CanCsv> =
        study.samples.iter().enumerate().map(|(i, c)| CanCsv { triple: i, value: c.value, scale: c.scale, ratio: c.ratio() }).collect();
    rows.push(CanCsv { triple: usize::MAX, value: study.control.value, scale: study.control.scale, ratio: study.control.ratio() });
    out.csv("cancellation.csv", &rows)?;
    checks.push(Check::at_most(2, format!("triple-product cancellation, worst of {}", study.samples.len()), study.worst_ratio, s.cancellation_tol));
    checks.push(Check::at_least(2, "bump control does not cancel", study.control.ratio(), 1e-3));
    Ok(checks)
}

fn spectrum(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.spectrum;
    let q = cfg.profile_field(cfg.profile)?;
    let is_w = cfg.profile == ProfileChoice::W;
    let mut checks = Vec::new();
    let suite = spectral_suite(&q, s.r_max, s.cells)?;

    #[derive(Serialize)]
    struct EigCsv {
        index: usize,
        eigenvalue: f64,
    }
    out.csv("eigenvalues.csv", &suite.eigenvalues.iter().enumerate().map(|(index, &eigenvalue)| EigCsv { index, eigenvalue }).collect::<Vec<_>>())?;
    #[derive(Serialize)]
    struct RefCsv {
        cells: usize,
        rate: f64,
    }
    out.csv("refinement.csv", &suite.refinement.iter().map(|&(cells, rate)| RefCsv { cells, rate }).collect::<Vec<_>>())?;

    let count = Check::new(3, "negative radial eigenvalues", suite.negative_count as f64, "== 1", suite.negative_count == 1);
    // The number of unstable directions is only known for the ground state.
    checks.push(if is_w { count } else { count.informational() });
    let oracle = shooting_rate(&q, s.oracle_r_max, (0.05, 3.0), 1e-10)?;
    checks.push(Check::at_most(3, format!("rate {:.6} vs shooting {:.6}, relative gap", suite.rate, oracle), (suite.rate / oracle - 1.0).abs(), s.oracle_tol));
    checks.push(Check::at_most(3, format!("decay fit rate {:.5}, relative error", suite.decay_rate), suite.decay_error(), s.decay_tol));

    let w = ground_state();
    let mode = radial_unstable_mode(&w, s.exp_r_max, s.exp_cells)?;
    let kernel = [
        ("conf4".to_string(), apply_generator(w.clone(), Generator::Conformal(3))),
        ("dilation".to_string(), apply_generator(w.clone(), Generator::Dilation)),
        ("d1".to_string(), apply_generator(w.clone(), Generator::Translation(0))),
    ];
    let spec = QuadratureSpec { r_max: 2.0 * s.exp_r_max, ..QuadratureSpec::default() };
    let rows = exp_identities(&w, &mode, &s.exp_speeds, &kernel, s.fd_step, &spec)?;
    let tol = exp_residual_tolerance(s.exp_r_max / s.exp_cells as f64, s.fd_step);
    #[derive(Serialize)]
    struct ExpCsv<'a> {
        speed: f64,
        alpha: f64,
        pairing: &'a str,
        value: f64,
        scale: f64,
    }
    let mut csv_rows = Vec::new();
    for r in &rows {
        csv_rows.push(ExpCsv { speed: r.speed, alpha: r.alpha, pairing: "residual+", value: r.plus_residual, scale: 1.0 });
        csv_rows.push(ExpCsv { speed: r.speed, alpha: r.alpha, pairing: "residual-", value: r.minus_residual, scale: 1.0 });
        csv_rows.extend(r.pairings.iter().map(|(n, c)| ExpCsv { speed: r.speed, alpha: r.alpha, pairing: n, value: c.value, scale: c.scale }));
        checks.push(Check::at_most(4, format!("speed {}: |H Y+ - Z+| / |Z+|", r.speed), r.plus_residual, tol));
        checks.push(Check::at_most(4, format!("speed {}: |H Y- - Z-| / |Z-|", r.speed), r.minus_residual, tol));
        checks.push(Check::at_most(4, format!("speed {}: kernel pairings with Z+-, worst ratio", r.speed), r.worst_pairing(), s.pairing_tol));
    }
    out.csv("exp_identities.csv", &csv_rows)?;
    Ok(checks)
}

fn interactions(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.interactions;
    let spec = QuadratureSpec::coarse();
    let times = geometric(s.t_start, s.t_ratio, s.t_count);
    let speeds = (s.speeds[0].min(s.speeds[1]), s.speeds[0].max(s.speeds[1]));
    let bracket = FnField::new("<x>^-2", Symmetry::Cylindrical, |x| 1.0 / (1.0 + field::norm4(x).powi(2))).with_decay(2.0).into_field();
    let mut checks = Vec::new();

    #[derive(Serialize)]
    struct RateCsv {
        alpha1: f64,
        alpha2: f64,
        t: f64,
        value: f64,
        error: f64,
    }
    #[derive(Serialize)]
    struct FitCsv {
        alpha1: f64,
        alpha2: f64,
        case: String,
        slope: f64,
        expected: f64,
        log_coefficient: Option<f64>,
        log_std_error: Option<f64>,
    }
    let (mut values, mut fits) = (Vec::new(), Vec::new());
    for (label, pairs) in [("fast", &s.fast_pairs), ("slow", &s.slow_pairs), ("critical", &s.critical_pairs)] {
        let mut passed = 0;
        for &[a1, a2] in pairs.iter() {
            let r = rate_study(&bracket, (a1, a2), speeds, &times, &spec)?;
            values.extend(r.times.iter().zip(r.values.iter().zip(&r.errors)).map(|(&t, (&value, &error))| RateCsv { alpha1: a1, alpha2: a2, t, value, error }));
            fits.push(FitCsv {
                alpha1: a1,
                alpha2: a2,
                case: format!("{:?}", r.case),
                slope: r.power.slope,
                expected: r.expected_slope,
                log_coefficient: r.log.as_ref().map(|l| l.log_coefficient),
                log_std_error: r.log.as_ref().map(|l| l.std_error),
            });
            let ok = if r.case == RateCase::Critical {
                r.log.as_ref().is_some_and(|l| l.significantly_positive(s.critical_t_stat))
            } else {
                r.passes(s.slope_tol)
            };
            passed += usize::from(ok);
            checks.push(match &r.log {
                Some(l) => Check::new(5, format!("({a1}, {a2}) log coefficient t-statistic"), l.log_coefficient / l.std_error, format!("> {}", s.critical_t_stat), ok),
                None => Check::new(5, format!("({a1}, {a2}) slope vs {:.2}", r.expected_slope), r.power.slope, format!("± {}", s.slope_tol), ok),
            });
        }
        checks.push(Check::at_least(5, format!("{label} case: pairs within tolerance"), passed as f64, 3.0));
    }
    out.csv("rate_values.csv", &values)?;
    out.csv("rate_fits.csv", &fits)?;

    #[derive(Serialize)]
    struct GCsv {
        profile: String,
        t: f64,
        g1: f64,
        g2: f64,
        g3: f64,
    }
    let mut g_rows = Vec::new();
    for &choice in &s.g1_profiles {
        let q = cfg.profile_field(choice)?;
        let soliton = |l| Soliton::new(q.clone(), 1.0, l);
        let pair = MultiSolitonConfig::new(vec![soliton(speeds.0)?, soliton(speeds.1)?])?;
        let r = verify_g_norms(&pair, &times, &spec)?;
        g_rows.extend(r.norms.iter().map(|n| GCsv { profile: choice.to_string(), t: n.t, g1: n.g1, g2: n.g2, g3: n.g3 }));
        let band = match choice {
            ProfileChoice::W => Some(s.g1_band_w),
            ProfileChoice::Surrogate => Some(s.g1_band_surrogate),
            ProfileChoice::File => None,
        };
        match band {
            Some(b) => checks.push(Check::within(6, format!("{choice} pair: G1 L2 slope"), r.g1_fit.slope, b)),
            None => checks.push(Check::new(6, "file pair: G1 L2 slope", r.g1_fit.slope, "no prediction", true).informational()),
        }
    }
    out.csv("g_norms.csv", &g_rows)?;

    let psi = apply_generator(surrogate_closed_form(), Generator::Conformal(3));
    let long = geometric(s.log_t_start, s.t_ratio, s.t_count);
    #[derive(Serialize)]
    struct LogCsv {
        speed: f64,
        partner: f64,
        t: f64,
        self_pairing: f64,
        cross_pairing: f64,
    }
    let mut log_rows = Vec::new();
    for &[l, partner] in &s.log_speeds {
        let sigma = s.sigma_fraction * (l - partner).abs();
        let r = psi_xi_lawcheck(&psi, l, partner, &long, sigma, &spec)?;
        log_rows.extend(r.times.iter().enumerate().map(|(i, &t)| LogCsv {
            speed: l,
            partner,
            t,
            self_pairing: r.self_pairing[i],
            cross_pairing: r.cross_pairing[i],
        }));
        checks.push(Check::at_most(7, format!("speed {l}: log slope {:.4} vs {:.4}, relative error", r.fit.log_coefficient, r.expected), r.relative_error, s.log_tol));
        // Bounded means the cross pairing moves by less than the self pairing grows per unit log t.
        checks.push(Check::at_most(7, format!("speed {l}: cross pairing spread over the window"), r.cross_spread, r.expected));
    }
    out.csv("log_law.csv", &log_rows)?;
    Ok(checks)
}

fn modulate(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.modulate;
    let spec = QuadratureSpec { r_max: s.quadrature_r_max, angular_nodes: 8, ..QuadratureSpec::coarse() };
    let setup = ground_state_setup(&s.speeds, spec)?;
    let c = initial_data_constants(&setup, &s.times, s.fraction)?;
    #[derive(Serialize)]
    struct ConstCsv {
        t: f64,
        constant: f64,
    }
    out.csv("constants.csv", &c.times.iter().zip(&c.constants).map(|(&t, &constant)| ConstCsv { t, constant }).collect::<Vec<_>>())?;
    Ok(vec![
        Check::at_most(8, "round trip: z+ relative error", c.round_trip, s.round_trip_tol),
        Check::at_most(8, "round trip: recovered |a| + |b| relative to |z+|", c.kernel_leak, s.round_trip_tol),
        Check::at_most(8, "size constant max/min over T", c.spread(), s.max_spread),
    ])
}

fn energy(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.energy;
    let w = ground_state();
    let mode = radial_unstable_mode(&w, 30.0, 1500)?;
    let kernel: Vec<_> = [Generator::Dilation, Generator::Translation(0)].map(|g| apply_generator(w.clone(), g)).into();
    let mut checks = Vec::new();
    #[derive(Serialize)]
    struct RatioCsv {
        speed: f64,
        sample: usize,
        ratio: f64,
    }
    #[derive(Serialize)]
    struct WeightedCsv {
        speed: f64,
        gamma: f64,
        min_ratio: f64,
        identity_error: f64,
    }
    let (mut ratios, mut weighted) = (Vec::new(), Vec::new());
    for &l in &s.speeds {
        let probe = CoercivityProbe {
            speed: Speed::new(l)?,
            profile: w.clone(),
            mode: mode.clone(),
            kernel: kernel.clone(),
            samples: s.samples,
            seed: cfg.seed,
            spread: s.spread,
            gammas: s.gammas.clone(),
            spec: QuadratureSpec::default(),
        };
        let r = probe.run()?;
        ratios.extend(r.ratios.iter().enumerate().map(|(sample, &ratio)| RatioCsv { speed: l, sample, ratio }));
        checks.push(Check::new(9, format!("speed {l}: projected minimum over {} samples", r.ratios.len()), r.min_ratio, "> 0", r.min_ratio > 0.0));
        checks.push(Check::new(9, format!("speed {l}: unprojected form on (Y, 0)"), r.negative_control, "< 0", r.negative_control < 0.0));
        for z in &r.weighted {
            weighted.push(WeightedCsv { speed: l, gamma: z.gamma, min_ratio: z.min_ratio, identity_error: z.identity_error });
            checks.push(Check::new(9, format!("speed {l}, gamma {}: weighted minimum", z.gamma), z.min_ratio, "> 0", z.min_ratio > 0.0));
            checks.push(Check::at_most(9, format!("speed {l}, gamma {}: weighted identity mismatch", z.gamma), z.identity_error, s.identity_tol));
        }
    }
    out.csv("coercivity.csv", &ratios)?;
    out.csv("weighted.csv", &weighted)?;
    Ok(checks)
}

fn tube(radius: f64, horizon: f64) -> Tube {
    Tube { radius, horizon, ..Tube::default() }
}

fn evolve(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.evolve;
    let w = ground_state();
    let mode = radial_unstable_mode(&w, 30.0, 1500)?;
    let tb = tube(s.tube_radius, s.tube_horizon);
    let bracket = (s.bracket[0], s.bracket[1]);
    let mut checks = Vec::new();
    let backgrounds = |l: f64| -> Result<Vec<Background>, RunError> {
        let hi = s.half_length + l.max(0.0) * s.horizon;
        let mut grid = CylindricalGrid::new(-s.half_length, hi, s.r_max, s.step)?;
        let mut out = Vec::new();
        for _ in 0..s.levels {
            out.push(Background::new(grid, w.clone(), Speed::new(l)?, &mode)?);
            grid = grid.refined();
        }
        Ok(out)
    };

    #[derive(Serialize)]
    struct StatCsv {
        speed: f64,
        h: f64,
        corrected_amplitude: f64,
        max_deviation: f64,
        final_deviation: f64,
        center_speed: f64,
        energy_drift: f64,
        momentum_drift: f64,
    }
    let mut rows = Vec::new();
    for l in [0.0, s.boost_speed] {
        let study = stationarity_study(&backgrounds(l)?, bracket, &tb, s.iterations, s.horizon)?;
        for r in &study.rows {
            rows.push(StatCsv {
                speed: l,
                h: r.h,
                corrected_amplitude: r.corrected_amplitude,
                max_deviation: r.max_deviation,
                final_deviation: r.final_deviation,
                center_speed: r.center_speed,
                energy_drift: r.energy_drift,
                momentum_drift: r.momentum_drift,
            });
            checks.push(Check::at_most(10, format!("speed {l}, h {}: max deviation", r.h), r.max_deviation, s.deviation_constant * r.h * r.h));
            checks.push(Check::at_most(10, format!("speed {l}, h {}: energy drift per 10 time units", r.h), r.energy_drift, s.drift_tol));
            checks.push(Check::at_most(10, format!("speed {l}, h {}: momentum drift per 10 time units", r.h), r.momentum_drift, s.drift_tol));
        }
        let order = study.orders.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::at_least(10, format!("speed {l}: self-convergence order"), order, s.min_order));
        if l != 0.0 {
            let finest = study.rows.last().expect("at least two levels");
            checks.push(Check::at_most(10, format!("speed {l}: centre speed {:.5}, relative error", finest.center_speed), (finest.center_speed / l - 1.0).abs(), s.speed_tol));
        }
    }
    out.csv("stationarity.csv", &rows)?;

    #[derive(Serialize)]
    struct RateCsv {
        speed: f64,
        alpha: f64,
        growth: f64,
        decay: f64,
        window_start: f64,
        window_end: f64,
    }
    let mut rates = Vec::new();
    for &l in &s.mode_speeds {
        let hi = s.half_length + l.max(0.0) * 2.0 * s.mode_window[1];
        let bg = Background::new(CylindricalGrid::new(-s.half_length, hi, s.r_max, s.step)?, w.clone(), Speed::new(l)?, &mode)?;
        let eps = corrected_amplitude(&bg, bracket, &tb, s.iterations)?;
        let m = measure_mode_rates(&bg, eps, s.mode_amplitude, (s.mode_window[0], s.mode_window[1]))?;
        rates.push(RateCsv { speed: l, alpha: m.alpha, growth: m.growth, decay: m.decay, window_start: m.window.0, window_end: m.window.1 });
        checks.push(Check::at_most(10, format!("speed {l}: growth rate {:.5} vs {:.5}, relative error", m.growth, m.alpha), m.growth_error(), s.rate_tol));
        checks.push(Check::at_most(10, format!("speed {l}: decay rate {:.5} vs {:.5}, relative error", m.decay, -m.alpha), m.decay_error(), s.rate_tol));
    }
    out.csv("mode_rates.csv", &rates)?;
    Ok(checks)
}

fn shoot(cfg: &ExperimentConfig, out: &Artifacts) -> Result<Vec<Check>, RunError> {
    let s = &cfg.shoot;
    let w = ground_state();
    let mode = radial_unstable_mode(&w, 30.0, 1500)?;
    let hi = s.half_length + s.speed.max(0.0) * s.horizon;
    let grid = CylindricalGrid::new(-s.half_length + s.speed.min(0.0) * s.horizon, hi, s.r_max, s.step)?;
    let bg = Background::new(grid, w, Speed::new(s.speed)?, &mode)?;
    let r = shooting_experiment(&bg, (s.bracket[0], s.bracket[1]), &tube(s.tube_radius, s.horizon), s.scan, s.iterations)?;
    out.csv("scan.csv", &r.scan)?;
    out.csv("bisection.csv", &r.bisection)?;
    Ok(vec![
        Check::new(11, "exit time unimodal over the scan", f64::from(u8::from(r.unimodal)), "== 1", r.unimodal),
        Check::at_least(11, format!("optimum {:+.6e} persistence over bracket ends", r.optimum.amplitude), r.persistence_ratio, s.min_ratio),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_schema_error() {
        assert!(matches!("bogus".parse::<Suite>(), Err(RunError::Schema(_))));
        assert_eq!("shoot".parse::<Suite>().unwrap(), Suite::Shoot);
    }

    #[test]
    fn modulate_writes_artifacts() {
        let dir = std::env::temp_dir().join(format!("wave4d-mod-{}", std::process::id()));
        let mut cfg = ExperimentConfig::default();
        cfg.modulate.times = vec![20.0, 40.0];
        let s = run_suite(Suite::Modulate, &cfg, &dir).unwrap();
        assert!(s.passed, "{}", render(&[s.clone()]));
        let back = Summary::read(&dir.join("modulate").join("summary.json")).unwrap();
        assert_eq!(back, s);
        assert!(dir.join("modulate").join("constants.csv").is_file());
        let _ = std::fs::remove_dir_all(&dir);
    }
}
