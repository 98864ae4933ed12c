//! Benchmark configuration: TOML parsing, defaults, validation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{CovarianceForm, FilterSpec};
use crate::model::CoordinatedTurnParams;
use crate::sde::Scheme;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(&'static str),
}

/// How each Monte Carlo run's reference trajectory starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthInitial {
    /// Every run starts exactly at the nominal initial mean; only the
    /// filters' priors carry the initial covariance.
    Mean,
    /// Each run starts at an independent draw from the `N(x̄₀, Π₀)` prior.
    PriorSample,
}

/// Scenario-level knobs of the tracking benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// End of the observation window, starting at `t = 0`.
    pub t_end: f64,
    /// Period between consecutive measurements.
    pub sampling_period: f64,
    /// Number of Monte Carlo replications.
    pub mc_runs: usize,
    /// Base seed; every random stream in the sweep is derived from it.
    pub seed: u64,
    /// Ill-conditioning parameters to sweep, strictly decreasing.
    pub delta_ill: Vec<f64>,
    /// Substeps per sampling period for the reference trajectory, which is
    /// always generated with the 1.5-order scheme.
    pub truth_substeps: usize,
    /// Initial-state policy for the reference trajectory.
    pub truth_initial: TruthInitial,
    /// Whether the reference trajectory's turn rate receives its Brownian
    /// forcing.  When `false` the true turn rate stays at its initial
    /// value; the filters still model the full diffusion either way.
    pub truth_turn_rate_noise: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            t_end: 150.0,
            sampling_period: 1.0,
            mc_runs: 100,
            seed: 42,
            delta_ill: (1..=14).map(|e| 10f64.powi(-e)).collect(),
            truth_substeps: 64,
            truth_initial: TruthInitial::Mean,
            truth_turn_rate_noise: false,
        }
    }
}

impl Scenario {
    /// Number of measurement steps in the window.
    pub fn steps(&self) -> usize {
        (self.t_end / self.sampling_period).round() as usize
    }
}

/// Full benchmark configuration as read from a TOML file.
///
/// Everything has a default: an empty file reproduces the standard
/// full-scale sweep — eight filters (all four covariance forms with the
/// 1.5-order scheme at 64 substeps and the 0.5-order scheme at 512), a
/// hundred runs, fourteen decades of ill-conditioning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub model: CoordinatedTurnParams,
    #[serde(default = "default_filter_bank")]
    pub filters: Vec<FilterSpec>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            scenario: Scenario::default(),
            model: CoordinatedTurnParams::default(),
            filters: default_filter_bank(),
        }
    }
}

/// All four covariance forms for each scheme, at the substep counts that
/// give the two schemes comparable per-interval work.
pub fn default_filter_bank() -> Vec<FilterSpec> {
    let mut bank = Vec::new();
    for form in CovarianceForm::ALL {
        bank.push(FilterSpec::new(Scheme::ItoTaylor15, form, 64));
    }
    for form in CovarianceForm::ALL {
        bank.push(FilterSpec::new(Scheme::EulerMaruyama05, form, 512));
    }
    bank
}

impl BenchmarkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: BenchmarkConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if !(s.t_end > 0.0) || !(s.sampling_period > 0.0) {
            return Err(ConfigError::Invalid(
                "t_end and sampling_period must be positive",
            ));
        }
        let ratio = s.t_end / s.sampling_period;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(ConfigError::Invalid(
                "t_end must be a whole, positive number of sampling periods",
            ));
        }
        if s.mc_runs == 0 {
            return Err(ConfigError::Invalid("mc_runs must be at least 1"));
        }
        if s.truth_substeps == 0 {
            return Err(ConfigError::Invalid("truth_substeps must be at least 1"));
        }
        if s.delta_ill.is_empty() {
            return Err(ConfigError::Invalid("delta_ill must not be empty"));
        }
        if s.delta_ill.iter().any(|&d| !(d > 0.0)) {
            return Err(ConfigError::Invalid("delta_ill values must be positive"));
        }
        if s.delta_ill.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::Invalid(
                "delta_ill values must be strictly decreasing",
            ));
        }
        if self.filters.is_empty() {
            return Err(ConfigError::Invalid("at least one filter is required"));
        }
        if self.filters.iter().any(|f| f.substeps == 0) {
            return Err(ConfigError::Invalid("filter substeps must be at least 1"));
        }
        let mut seen = std::collections::HashSet::new();
        if self.filters.iter().any(|f| !seen.insert(*f)) {
            return Err(ConfigError::Invalid("duplicate filter entry"));
        }
        Ok(())
    }
}
