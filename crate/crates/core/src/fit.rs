//! Regression helpers for rate laws measured on time or radius grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::states::linear_fit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("fit window [{lo}, {hi}] spans less than one decade")]
    WindowTooSmall { lo: f64, hi: f64 },
    #[error("need at least 3 positive samples, got {0}")]
    TooFewSamples(usize),
}

/// Power law `y ≈ e^{intercept} t^{slope}` fitted in log-log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

impl PowerFit {
    pub fn within(&self, expected: f64, tol: f64) -> bool {
        (self.slope - expected).abs() <= tol
    }

    pub fn model(&self, t: f64) -> f64 {
        (self.intercept + self.slope * t.ln()).exp()
    }
}

fn window(ts: &[f64]) -> (f64, f64) {
    ts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)))
}

fn check_samples(ts: &[f64], ys: &[f64], decade: bool) -> Result<(f64, f64), FitError> {
    let good = ts.iter().zip(ys).filter(|(t, y)| **t > 0.0 && **y > 0.0 && y.is_finite()).count();
    if good < 3 || good != ts.len() {
        return Err(FitError::TooFewSamples(good));
    }
    let (lo, hi) = window(ts);
    if decade && hi < 10.0 * lo {
        return Err(FitError::WindowTooSmall { lo, hi });
    }
    Ok((lo, hi))
}

/// Fits a power law; the window must span at least one decade.
pub fn power_fit(ts: &[f64], ys: &[f64]) -> Result<PowerFit, FitError> {
    let window = check_samples(ts, ys, true)?;
    let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&lt, &ly);
    Ok(PowerFit { slope, intercept, r_squared, window })
}

/// `y ≈ a + b log t` with the standard error of `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub constant: f64,
    pub log_coefficient: f64,
    pub std_error: f64,
    pub window: (f64, f64),
}

impl LogFit {
    /// `b` is positive and at least `k` standard errors from zero.
    pub fn significantly_positive(&self, k: f64) -> bool {
        self.log_coefficient > 0.0 && self.log_coefficient > k * self.std_error
    }

    pub fn model(&self, t: f64) -> f64 {
        self.constant + self.log_coefficient * t.ln()
    }
}

pub fn log_fit(ts: &[f64], ys: &[f64]) -> Result<LogFit, FitError> {
    if ts.len() < 3 || ts.len() != ys.len() {
        return Err(FitError::TooFewSamples(ts.len().min(ys.len())));
    }
    let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let (b, a, _) = linear_fit(&lt, ys);
    let n = ts.len() as f64;
    let mean = lt.iter().sum::<f64>() / n;
    let sxx: f64 = lt.iter().map(|l| (l - mean).powi(2)).sum();
    let ss_res: f64 = lt.iter().zip(ys).map(|(l, y)| (y - a - b * l).powi(2)).sum();
    let std_error = (ss_res / (n - 2.0) / sxx).sqrt();
    Ok(LogFit { constant: a, log_coefficient: b, std_error, window: window(ts) })
}

/// Geometric grid `start·ratio^k`, `k = 0..count`.
pub fn geometric(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Order of convergence from errors at successive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_and_log_laws() {
        let ts = geometric(10.0, 2.0, 5);
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-2.5)).collect();
        let f = power_fit(&ts, &ys).unwrap();
        assert!((f.slope + 2.5).abs() < 1e-12 && f.r_squared > 0.999_999);
        let zs: Vec<f64> = ts.iter().map(|t| 1.0 + 0.5 * t.ln() + 1e-3 * (t * 7.0).sin()).collect();
        let g = log_fit(&ts, &zs).unwrap();
        assert!((g.log_coefficient - 0.5).abs() < 1e-2 && g.significantly_positive(3.0));
    }

    #[test]
    fn short_window_rejected() {
        let ts = [10.0, 20.0, 40.0, 80.0];
        assert!(matches!(power_fit(&ts, &[1.0, 0.5, 0.25, 0.125]), Err(FitError::WindowTooSmall { .. })));
        assert!(power_fit(&[1.0, 100.0], &[1.0, 1.0]).is_err());
    }
}
