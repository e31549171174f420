//! Randomized invariants of the symmetry maps, fits, config and summaries.

use proptest::prelude::*;

use wave4d::experiment::summary::{render, Check, Summary};
use wave4d::experiment::ExperimentConfig;
use wave4d::fit::{geometric, power_fit};
use wave4d::lorentz::Speed;
use wave4d::states::{dilate, ground_state, kelvin, surrogate_closed_form};

fn point() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-6.0..6.0f64).prop_filter("away from the origin", |x| x.iter().map(|v| v * v).sum::<f64>() > 1e-4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kelvin_is_an_involution(x in point()) {
        let q = surrogate_closed_form();
        let twice = kelvin(kelvin(q.clone()).unwrap()).unwrap();
        let (a, b) = (twice.value(&x), q.value(&x));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn dilations_compose(x in point(), a in 0.2..5.0f64, b in 0.2..5.0f64) {
        let w = ground_state();
        let two = dilate(dilate(w.clone(), a).unwrap(), b).unwrap();
        let one = dilate(w, a * b).unwrap();
        prop_assert!((two.value(&x) - one.value(&x)).abs() <= 1e-12 * one.value(&x).abs().max(1.0));
    }

    #[test]
    fn speeds_are_subluminal(l in -2.0..2.0f64) {
        prop_assert_eq!(Speed::new(l).is_ok(), l.abs() < 1.0);
    }

    #[test]
    fn power_fit_recovers_exact_laws(c in 0.1..10.0f64, p in -5.0..-0.5f64) {
        let ts = geometric(10.0, 2.0, 5);
        let ys: Vec<f64> = ts.iter().map(|t| c * t.powf(p)).collect();
        let fit = power_fit(&ts, &ys).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn config_survives_toml(seed in 0..=i64::MAX as u64, step in 0.05..0.5f64, samples in 100usize..400) {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.evolve.step = step;
        cfg.energy.samples = samples;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn summaries_count_failures(values in prop::collection::vec((0.0..2.0f64, any::<bool>()), 0..12)) {
        let checks: Vec<Check> = values
            .iter()
            .enumerate()
            .map(|(i, &(v, asserted))| {
                let c = Check::at_most(1, format!("row {i}"), v, 1.0);
                if asserted { c } else { c.informational() }
            })
            .collect();
        let failing = values.iter().filter(|(v, asserted)| *asserted && *v > 1.0).count();
        let s = Summary::new("states", checks, serde_json::Value::Null);
        prop_assert_eq!(s.passed, failing == 0);
        let table = render(&[s]);
        let marked = table.lines().filter(|l| l.starts_with(">>")).count();
        prop_assert_eq!(marked, failing);
        let footer = format!("1 suites, {} checks, {} failed", values.len(), failing);
        prop_assert!(table.trim_end().ends_with(&footer));
    }
}
