//! Acceptance run: every suite at its reference configuration, one PASS/FAIL
//! line per criterion. Tolerances and sample sizes are pinned here rather
//! than read from the config defaults.

use std::process::ExitCode;
use std::time::Instant;

use wave4d::experiment::{run_suite, Check, ExperimentConfig, Suite};

/// Suite that measures each criterion and its runtime budget in seconds.
const CRITERIA: [(u8, Suite, f64); 11] = [
    (1, Suite::States, 60.0),
    (2, Suite::States, 300.0),
    (3, Suite::Spectrum, 120.0),
    (4, Suite::Spectrum, 300.0),
    (5, Suite::Interactions, 600.0),
    (6, Suite::Interactions, 600.0),
    (7, Suite::Interactions, 300.0),
    (8, Suite::Modulate, 120.0),
    (9, Suite::Energy, 600.0),
    (10, Suite::Evolve, 1800.0),
    (11, Suite::Shoot, 1800.0),
];

fn pinned() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.states.min_order = 1.8;
    c.states.kelvin_points = 1000;
    c.states.kelvin_tol = 1e-10;
    c.states.cancellation_triples = 20;
    c.states.cancellation_tol = 1e-6;
    c.spectrum.oracle_tol = 0.01;
    c.spectrum.decay_tol = 0.1;
    c.spectrum.exp_speeds = vec![0.0, 0.3, 0.6];
    c.spectrum.pairing_tol = 1e-6;
    c.interactions.speeds = vec![-0.5, 0.5];
    c.interactions.t_start = 10.0;
    c.interactions.t_ratio = 2.0;
    c.interactions.t_count = 5;
    c.interactions.slope_tol = 0.3;
    c.interactions.g1_band_surrogate = [-4.5, -3.5];
    c.interactions.g1_band_w = [-2.5, -1.5];
    c.interactions.log_speeds = vec![[0.0, 0.5], [0.6, 0.0]];
    c.interactions.log_tol = 0.05;
    c.modulate.times = vec![20.0, 40.0, 80.0];
    c.modulate.round_trip_tol = 1e-8;
    c.energy.speeds = vec![0.0, 0.5];
    c.energy.samples = 100;
    c.energy.gammas = vec![0.025, 0.05, 0.1];
    c.evolve.min_order = 1.8;
    c.evolve.speed_tol = 0.01;
    c.evolve.drift_tol = 1e-3;
    c.evolve.mode_speeds = vec![0.0, 0.5];
    c.evolve.rate_tol = 0.05;
    c.shoot.min_ratio = 2.0;
    c
}

fn main() -> ExitCode {
    let cfg = pinned();
    let root = std::env::temp_dir().join(format!("wave4d-acceptance-{}", std::process::id()));
    let mut results: Vec<(Suite, Result<Vec<Check>, String>, f64)> = Vec::new();
    for suite in Suite::ALL {
        let clock = Instant::now();
        let outcome = run_suite(suite, &cfg, &root).map(|s| s.checks).map_err(|e| e.to_string());
        results.push((suite, outcome, clock.elapsed().as_secs_f64()));
    }
    let _ = std::fs::remove_dir_all(&root);

    let mut all_pass = true;
    for (k, suite, budget) in CRITERIA {
        let (_, outcome, seconds) = results.iter().find(|(s, _, _)| *s == suite).expect("every suite ran");
        let (pass, detail) = match outcome {
            Err(e) => (false, format!("{} suite error: {e}", suite.name())),
            Ok(checks) => {
                let rows: Vec<&Check> = checks.iter().filter(|c| c.criterion == Some(k) && c.asserted).collect();
                let failing: Vec<&str> = rows.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                let in_time = *seconds < budget;
                let mut detail = format!("{} checks, {} suite {seconds:.1} s (budget {budget} s)", rows.len(), suite.name());
                if !failing.is_empty() {
                    detail.push_str(&format!("; failing: {}", failing.join("; ")));
                }
                if !in_time {
                    detail.push_str("; over budget");
                }
                (!rows.is_empty() && failing.is_empty() && in_time, detail)
            }
        };
        all_pass &= pass;
        println!("criterion {k}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
