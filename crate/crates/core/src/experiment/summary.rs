//! Machine-readable pass/fail summaries and their text rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;

/// Version tag written into every summary.
pub const SUMMARY_SCHEMA: &str = "wave4d.summary/1";
pub const SUMMARY_FILE: &str = "summary.json";

/// One checked quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Acceptance criterion number, if the row belongs to one.
    pub criterion: Option<u8>,
    pub name: String,
    /// `None` when the measurement is not finite.
    pub value: Option<f64>,
    pub threshold: String,
    pub passed: bool,
    /// Informational rows never fail a run.
    pub asserted: bool,
}

impl Check {
    pub fn new(criterion: u8, name: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Check {
            criterion: Some(criterion),
            name: name.into(),
            value: value.is_finite().then_some(value),
            threshold: threshold.into(),
            passed: passed && value.is_finite(),
            asserted: true,
        }
    }

    /// `value ≤ bound`.
    pub fn at_most(criterion: u8, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(criterion, name, value, format!("<= {}", short(bound)), value <= bound)
    }

    /// `value ≥ bound`.
    pub fn at_least(criterion: u8, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(criterion, name, value, format!(">= {bound}"), value >= bound)
    }

    pub fn within(criterion: u8, name: impl Into<String>, value: f64, band: [f64; 2]) -> Self {
        Check::new(criterion, name, value, format!("in [{}, {}]", band[0], band[1]), value >= band[0] && value <= band[1])
    }

    pub fn informational(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub fn fails(&self) -> bool {
        self.asserted && !self.passed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// The fully resolved configuration of the run.
    pub config: serde_json::Value,
}

impl Summary {
    pub fn new(suite: &str, checks: Vec<Check>, config: serde_json::Value) -> Self {
        let passed = !checks.iter().any(Check::fails);
        Summary { schema: SUMMARY_SCHEMA.into(), suite: suite.into(), passed, checks, config }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, RunError> {
        let path = dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Summary, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let s: Summary = serde_json::from_str(&text)?;
        if s.schema != SUMMARY_SCHEMA {
            return Err(RunError::Schema(format!("{}: schema '{}' is not {SUMMARY_SCHEMA}", path.display(), s.schema)));
        }
        Ok(s)
    }
}

/// Every `*/summary.json` directly under `root`, sorted by path.
pub fn discover(root: &Path) -> Result<Vec<PathBuf>, RunError> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| RunError::io(root, e))? {
        let p = entry.map_err(|e| RunError::io(root, e))?.path().join(SUMMARY_FILE);
        if p.is_file() {
            found.push(p);
        }
    }
    found.sort();
    Ok(found)
}

/// Plain, exact scientific or four-digit scientific, whichever fits first.
fn short(x: f64) -> String {
    let plain = format!("{x}");
    let sci = format!("{x:e}");
    if plain.len() <= 6 {
        plain
    } else if sci.len() <= 8 {
        sci
    } else {
        format!("{x:.4e}")
    }
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        None => "non-finite".into(),
        Some(x) if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e5) => format!("{x:.3e}"),
        Some(x) => format!("{x:.5}"),
    }
}

/// Fixed-width pass/fail table. Failing asserted rows are marked `>>`.
pub fn render(summaries: &[Summary]) -> String {
    let mut rows: Vec<[String; 6]> = Vec::new();
    for s in summaries {
        for c in &s.checks {
            let status = match (c.passed, c.asserted) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            rows.push([
                if c.fails() { ">>".into() } else { String::new() },
                c.criterion.map_or("-".into(), |k| k.to_string()),
                s.suite.clone(),
                c.name.clone(),
                format!("{} ({})", fmt_value(c.value), c.threshold),
                status.into(),
            ]);
        }
    }
    let header = ["", "crit", "suite", "check", "value (threshold)", "status"];
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = w - cell.chars().count();
            s.push_str(cell);
            s.extend(std::iter::repeat(' ').take(pad));
        }
        s.trim_end().to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&header.map(String::from)));
    for r in &rows {
        let _ = writeln!(out, "{}", line(r));
    }
    let failed = rows.iter().filter(|r| r[5] == "FAIL").count();
    let _ = writeln!(out, "{} suites, {} checks, {} failed", summaries.len(), rows.len(), failed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(pass: bool) -> Summary {
        Summary::new(
            "states",
            vec![Check::at_most(1, "kelvin", if pass { 1e-16 } else { 1.0 }, 1e-10), Check::at_least(1, "order", 2.0, 1.8)],
            serde_json::json!({"seed": 7}),
        )
    }

    #[test]
    fn empty_table() {
        let t = render(&[]);
        assert!(t.ends_with("0 suites, 0 checks, 0 failed\n"));
    }

    #[test]
    fn failing_row_is_marked() {
        let s = summary(false);
        assert!(!s.passed);
        let t = render(&[s]);
        let bad: Vec<&str> = t.lines().filter(|l| l.starts_with(">>")).collect();
        assert_eq!(bad.len(), 1);
        assert!(bad[0].contains("kelvin") && bad[0].contains("FAIL"));
    }

    #[test]
    fn informational_rows_do_not_fail() {
        let s = Summary::new("x", vec![Check::at_most(1, "a", 2.0, 1.0).informational()], serde_json::Value::Null);
        assert!(s.passed);
    }

    #[test]
    fn non_finite_values_fail() {
        let c = Check::at_most(3, "nan", f64::NAN, 1.0);
        assert!(!c.passed && c.value.is_none());
    }

    #[test]
    fn render_is_deterministic() {
        let s = [summary(true), summary(false)];
        assert_eq!(render(&s), render(&s));
    }
}
