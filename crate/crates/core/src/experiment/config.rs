//! Experiment configuration: one TOML file with a section per suite.
//!
//! Precedence, lowest first: built-in defaults, the config file, command-line
//! flags. The fully resolved configuration is echoed into every output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{container, Field, FieldError};
use crate::states::{ground_state, surrogate_closed_form};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("schema error: unknown keys {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("schema error: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileChoice {
    /// The ground state.
    W,
    /// The closed-form excited-state stand-in.
    Surrogate,
    /// A sampled profile read from `profile_file`.
    File,
}

impl std::str::FromStr for ProfileChoice {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.to_ascii_lowercase().as_str() {
            "w" => Ok(ProfileChoice::W),
            "surrogate" => Ok(ProfileChoice::Surrogate),
            "file" => Ok(ProfileChoice::File),
            other => Err(ConfigError::Invalid(format!("unknown profile '{other}' (expected w, surrogate or file)"))),
        }
    }
}

impl std::fmt::Display for ProfileChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProfileChoice::W => "w",
            ProfileChoice::Surrogate => "surrogate",
            ProfileChoice::File => "file",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatesConfig {
    pub residual_r_max: f64,
    pub residual_step: f64,
    pub residual_levels: usize,
    pub min_order: f64,
    pub kelvin_points: usize,
    pub kelvin_half_width: f64,
    pub kelvin_tol: f64,
    pub decay_r0: f64,
    pub decay_tol: f64,
    pub generator_ball: f64,
    pub generator_step: f64,
    pub generator_levels: usize,
    pub cancellation_triples: usize,
    pub cancellation_tol: f64,
}

impl Default for StatesConfig {
    fn default() -> Self {
        StatesConfig {
            residual_r_max: 20.0,
            residual_step: 0.2,
            residual_levels: 4,
            min_order: 1.8,
            kelvin_points: 1000,
            kelvin_half_width: 5.0,
            kelvin_tol: 1e-10,
            decay_r0: 10.0,
            decay_tol: 0.1,
            generator_ball: 5.0,
            generator_step: 0.2,
            generator_levels: 3,
            cancellation_triples: 20,
            cancellation_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub r_max: f64,
    pub cells: usize,
    pub oracle_r_max: f64,
    pub oracle_tol: f64,
    pub decay_tol: f64,
    pub exp_speeds: Vec<f64>,
    pub exp_r_max: f64,
    pub exp_cells: usize,
    pub fd_step: f64,
    pub pairing_tol: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            r_max: 30.0,
            cells: 1500,
            oracle_r_max: 25.0,
            oracle_tol: 0.01,
            decay_tol: 0.1,
            exp_speeds: vec![0.0, 0.3, 0.6],
            exp_r_max: 45.0,
            exp_cells: 18000,
            fd_step: 1e-2,
            pairing_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionsConfig {
    pub speeds: Vec<f64>,
    pub t_start: f64,
    pub t_ratio: f64,
    pub t_count: usize,
    pub fast_pairs: Vec<[f64; 2]>,
    pub slow_pairs: Vec<[f64; 2]>,
    pub critical_pairs: Vec<[f64; 2]>,
    pub slope_tol: f64,
    pub critical_t_stat: f64,
    /// Profiles for the `G₁` decay rows.
    pub g1_profiles: Vec<ProfileChoice>,
    pub g1_band_surrogate: [f64; 2],
    pub g1_band_w: [f64; 2],
    pub log_speeds: Vec<[f64; 2]>,
    pub log_t_start: f64,
    pub log_tol: f64,
    pub sigma_fraction: f64,
}

impl Default for InteractionsConfig {
    fn default() -> Self {
        InteractionsConfig {
            speeds: vec![-0.5, 0.5],
            t_start: 10.0,
            t_ratio: 2.0,
            t_count: 5,
            fast_pairs: vec![[1.0, 3.0], [1.5, 3.0], [0.8, 3.5]],
            slow_pairs: vec![[1.5, 1.5], [1.2, 1.2], [1.0, 1.5]],
            critical_pairs: vec![[1.0, 2.0], [1.5, 2.0], [2.0, 2.0]],
            slope_tol: 0.3,
            critical_t_stat: 3.0,
            g1_profiles: vec![ProfileChoice::Surrogate, ProfileChoice::W],
            g1_band_surrogate: [-4.5, -3.5],
            g1_band_w: [-2.5, -1.5],
            log_speeds: vec![[0.0, 0.5], [0.6, 0.0]],
            log_t_start: 100.0,
            log_tol: 0.05,
            sigma_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulateConfig {
    pub speeds: Vec<f64>,
    pub times: Vec<f64>,
    /// Prescribed `|z⁺|` as a fraction of `T^{−7/2}`.
    pub fraction: f64,
    pub round_trip_tol: f64,
    pub max_spread: f64,
    pub quadrature_r_max: f64,
}

impl Default for ModulateConfig {
    fn default() -> Self {
        ModulateConfig {
            speeds: vec![-0.5, 0.5],
            times: vec![20.0, 40.0, 80.0],
            fraction: 0.5,
            round_trip_tol: 1e-8,
            max_spread: 1.1,
            quadrature_r_max: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub speeds: Vec<f64>,
    pub samples: usize,
    pub spread: f64,
    pub gammas: Vec<f64>,
    /// The weighted integration-by-parts identity is exact on all of space; on the
    /// truncated domain it misses a boundary flux of order `r_max^(−2−2γ)` from the
    /// `r⁻²` tail of the dilation direction, about 2.5e-5 at the default radius.
    pub identity_tol: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig { speeds: vec![0.0, 0.5], samples: 100, spread: 3.0, gammas: vec![0.025, 0.05, 0.1], identity_tol: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub step: f64,
    pub levels: usize,
    pub half_length: f64,
    pub r_max: f64,
    pub horizon: f64,
    pub tube_radius: f64,
    pub tube_horizon: f64,
    pub bracket: [f64; 2],
    pub iterations: usize,
    /// Allowed `max ‖u⃗ − W⃗‖_𝓗 ≤ C h²`.
    pub deviation_constant: f64,
    pub min_order: f64,
    pub boost_speed: f64,
    pub speed_tol: f64,
    pub drift_tol: f64,
    pub mode_speeds: Vec<f64>,
    /// Fit window in units of `1/α`.
    pub mode_window: [f64; 2],
    pub mode_amplitude: f64,
    pub rate_tol: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            step: 0.2,
            levels: 2,
            half_length: 20.0,
            r_max: 20.0,
            horizon: 30.0,
            tube_radius: 0.5,
            tube_horizon: 45.0,
            bracket: [-0.2, 0.2],
            iterations: 45,
            deviation_constant: 10.0,
            min_order: 1.8,
            boost_speed: 0.4,
            speed_tol: 0.01,
            drift_tol: 1e-3,
            mode_speeds: vec![0.0, 0.5],
            mode_window: [0.5, 3.5],
            mode_amplitude: 1e-3,
            rate_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootConfig {
    pub speed: f64,
    pub step: f64,
    pub half_length: f64,
    pub r_max: f64,
    pub bracket: [f64; 2],
    pub tube_radius: f64,
    pub horizon: f64,
    pub scan: usize,
    pub iterations: usize,
    pub min_ratio: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            speed: 0.0,
            step: 0.2,
            half_length: 20.0,
            r_max: 20.0,
            bracket: [-0.1, 0.1],
            tube_radius: 0.5,
            horizon: 40.0,
            scan: 9,
            iterations: 40,
            min_ratio: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output root; `WAVE4D_OUT` and `--out` take precedence.
    pub output: PathBuf,
    pub profile: ProfileChoice,
    /// Container file read when `profile = "file"`.
    pub profile_file: PathBuf,
    pub states: StatesConfig,
    pub spectrum: SpectrumConfig,
    pub interactions: InteractionsConfig,
    pub modulate: ModulateConfig,
    pub energy: EnergyConfig,
    pub evolve: EvolveConfig,
    pub shoot: ShootConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            output: PathBuf::from("wave4d-out"),
            profile: ProfileChoice::W,
            profile_file: PathBuf::new(),
            states: StatesConfig::default(),
            spectrum: SpectrumConfig::default(),
            interactions: InteractionsConfig::default(),
            modulate: ModulateConfig::default(),
            energy: EnergyConfig::default(),
            evolve: EvolveConfig::default(),
            shoot: ShootConfig::default(),
        }
    }
}

/// Dotted paths present in `user` but not in `reference`. Arrays are leaves.
fn unknown_keys(user: &toml::Value, reference: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let (toml::Value::Table(u), toml::Value::Table(r)) = (user, reference) {
        for (k, v) in u {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match r.get(k) {
                Some(rv) => unknown_keys(v, rv, &path, out),
                None => out.push(path),
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses a config, listing every unknown key rather than the first.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Value = toml::from_str(text)?;
        let reference = toml::Value::try_from(ExperimentConfig::default()).expect("defaults serialize");
        let mut unknown = Vec::new();
        unknown_keys(&user, &reference, "", &mut unknown);
        if !unknown.is_empty() {
            unknown.sort();
            return Err(ConfigError::UnknownKeys(unknown));
        }
        let cfg: ExperimentConfig = user.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
                ExperimentConfig::from_toml(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        let speeds = |name: &str, v: &[f64], bad: &mut Vec<String>| {
            if v.iter().any(|l| !(l.abs() < 1.0)) {
                bad.push(format!("{name} must lie in (-1, 1)"));
            }
        };
        // TOML integers are signed.
        if i64::try_from(self.seed).is_err() {
            bad.push(format!("seed must be at most {}", i64::MAX));
        }
        speeds("spectrum.exp_speeds", &self.spectrum.exp_speeds, &mut bad);
        speeds("interactions.speeds", &self.interactions.speeds, &mut bad);
        speeds("modulate.speeds", &self.modulate.speeds, &mut bad);
        speeds("energy.speeds", &self.energy.speeds, &mut bad);
        speeds("evolve.mode_speeds", &self.evolve.mode_speeds, &mut bad);
        speeds("evolve.boost_speed", &[self.evolve.boost_speed], &mut bad);
        speeds("shoot.speed", &[self.shoot.speed], &mut bad);
        if self.interactions.speeds.len() != 2 {
            bad.push("interactions.speeds needs exactly two speeds".into());
        }
        if self.states.residual_levels < 2 || self.states.generator_levels < 2 || self.evolve.levels < 2 {
            bad.push("refinement ladders need at least two levels".into());
        }
        if self.profile == ProfileChoice::File && self.profile_file.as_os_str().is_empty() {
            bad.push("profile = \"file\" requires profile_file".into());
        }
        if self.shoot.bracket[0] >= self.shoot.bracket[1] || self.evolve.bracket[0] >= self.evolve.bracket[1] {
            bad.push("brackets must be increasing".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad.join("; ")))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Output root: `--out`, then `WAVE4D_OUT`, then the config value.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUTPUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output.clone(),
        }
    }

    pub fn profile_field(&self, choice: ProfileChoice) -> Result<Field, ConfigError> {
        match choice {
            ProfileChoice::W => Ok(ground_state()),
            ProfileChoice::Surrogate => Ok(surrogate_closed_form()),
            ProfileChoice::File => {
                let mut fields = container::read(&self.profile_file)?;
                if fields.is_empty() {
                    return Err(ConfigError::Invalid(format!("{} holds no field", self.profile_file.display())));
                }
                Ok(Arc::new(fields.swap_remove(0)))
            }
        }
    }
}

/// Environment variable naming the output root.
pub const OUTPUT_ENV: &str = "WAVE4D_OUT";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn lists_every_unknown_key() {
        let err = ExperimentConfig::from_toml("sed = 1\n[states]\nmin_ordr = 2\n[bogus]\nx = 1\n").unwrap_err();
        match err {
            ConfigError::UnknownKeys(k) => assert_eq!(k, vec!["bogus", "sed", "states.min_ordr"]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = ExperimentConfig::from_toml("[shoot]\nscan = 5\n").unwrap();
        assert_eq!(cfg.shoot.scan, 5);
        assert_eq!(cfg.shoot.horizon, ShootConfig::default().horizon);
    }

    #[test]
    fn rejects_superluminal_speeds() {
        assert!(matches!(ExperimentConfig::from_toml("[energy]\nspeeds = [1.2]\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn rejects_seeds_toml_cannot_hold() {
        let cfg = ExperimentConfig { seed: u64::MAX, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
