//! End-to-end behaviour of the `wave4d` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wave4d::experiment::summary::{Check, Summary, SUMMARY_SCHEMA};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wave4d-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn wave4d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wave4d")).args(args).env_remove("WAVE4D_OUT").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn states_verify_writes_reproducible_artifacts() {
    let root = scratch("states");
    let first = wave4d(&["states", "verify", "--out", arg(&root)]);
    assert_eq!(first.status.code(), Some(0), "{}", text(&first.stderr));
    let dir = root.join("states");
    for name in ["summary.json", "config.resolved.toml", "timing.json", "residual_ladder.csv", "cancellation.csv"] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let summary = Summary::read(&dir.join("summary.json")).unwrap();
    assert_eq!(summary.schema, SUMMARY_SCHEMA);
    assert!(summary.passed);
    assert!(summary.checks.iter().any(|c| c.criterion == Some(1)) && summary.checks.iter().any(|c| c.criterion == Some(2)));

    let bytes = std::fs::read(dir.join("summary.json")).unwrap();
    let second = wave4d(&["states", "verify", "--out", arg(&root)]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.join("summary.json")).unwrap(), bytes);

    let a = wave4d(&["report", "--out", arg(&root)]);
    let b = wave4d(&["report", "--out", arg(&root)]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(text(&a.stdout).contains("1 suites"));
}

#[test]
fn unknown_config_keys_are_all_listed() {
    let root = scratch("keys");
    let cfg = root.join("bad.toml");
    std::fs::write(&cfg, "seed = 3\nflavour = 1\n[states]\nresidual_levels = 3\nbogus = true\n").unwrap();
    let out = wave4d(&["states", "verify", "--config", arg(&cfg), "--out", arg(&root)]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("flavour") && err.contains("states.bogus"), "{err}");
    assert!(!root.join("states").exists());
}

#[test]
fn unknown_suite_is_a_schema_error() {
    let out = wave4d(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("schema error: unknown suite"));
}

#[test]
fn flags_override_the_config_file() {
    let root = scratch("precedence");
    let cfg = root.join("c.toml");
    std::fs::write(&cfg, "seed = 3\n[evolve]\nstep = 0.25\nhorizon = 12.0\n").unwrap();
    let out = wave4d(&["evolve", "--config", arg(&cfg), "--seed", "11", "--horizon", "20", "--print-config"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let resolved = wave4d::experiment::ExperimentConfig::from_toml(&text(&out.stdout)).unwrap();
    assert_eq!(resolved.seed, 11);
    assert_eq!(resolved.evolve.step, 0.25);
    assert_eq!(resolved.evolve.horizon, 20.0);
}

#[test]
fn invalid_values_are_rejected() {
    let out = wave4d(&["energy", "--speeds", "0,1.2", "--print-config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_marks_failures_and_handles_empty_roots() {
    let root = scratch("report");
    let empty = wave4d(&["report", "--out", arg(&root)]);
    assert_eq!(empty.status.code(), Some(0));
    assert!(text(&empty.stdout).contains("0 suites, 0 checks, 0 failed"));

    let dir = root.join("energy");
    std::fs::create_dir_all(&dir).unwrap();
    let checks = vec![Check::at_least(9, "projected minimum", -0.1, 0.0), Check::at_most(9, "identity", 1e-6, 1e-4)];
    Summary::new("energy", checks, serde_json::json!({})).write(&dir).unwrap();
    let out = wave4d(&["report", "--out", arg(&root)]);
    assert_eq!(out.status.code(), Some(1));
    let table = text(&out.stdout);
    let marked: Vec<&str> = table.lines().filter(|l| l.starts_with(">>")).collect();
    assert_eq!(marked.len(), 1);
    assert!(marked[0].contains("projected minimum"));

    std::fs::write(dir.join("summary.json"), r#"{"schema":"other/9","suite":"x","passed":true,"checks":[],"config":null}"#).unwrap();
    let out = wave4d(&["report", "--out", arg(&root)]);
    assert_eq!(out.status.code(), Some(2));
}
