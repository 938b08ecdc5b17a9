use std::path::Path;

use anyhow::{bail, Context, Result};
use fsor_core::formulation::{BuildOptions, DEFAULT_HOP_LIMIT};
use fsor_core::telemetry::{FreshnessPolicy, DEFAULT_CYCLE_SECS};
use fsor_core::twin::{LoopConfig, TwinConfig};
use serde::{Deserialize, Serialize};

/// Main configuration file. Every field is optional.
///
/// `twin.congestion_threshold` also stands in for restoration margins on
/// shared optical links: capacity above it is treated as reserved.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Carbon weight in [0, 1]; water gets the complement.
    pub alpha: f64,
    pub cycle_secs: i64,
    /// Forecast horizon Δ [min].
    pub horizon_min: f64,
    /// Wall-clock budget per optimize phase [s].
    pub budget_secs: f64,
    pub hop_limit: usize,
    pub transport_term: bool,
    pub freshness: FreshnessPolicy,
    pub twin: TwinConfig,
    /// Generator seed for commands that draw random instances.
    pub seed: u64,
    /// Scenario seeds; empty keeps the scenario file's own list.
    pub seeds: Vec<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            cycle_secs: DEFAULT_CYCLE_SECS,
            horizon_min: 60.0,
            budget_secs: 300.0,
            hop_limit: DEFAULT_HOP_LIMIT,
            transport_term: false,
            freshness: FreshnessPolicy::default(),
            twin: TwinConfig::default(),
            seed: 1,
            seeds: Vec::new(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))?;
        config.validate().with_context(|| format!("config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            bail!("field `alpha` must lie in [0, 1], got {}", self.alpha);
        }
        if !(self.budget_secs > 0.0) {
            bail!("field `budget_secs` must be positive, got {}", self.budget_secs);
        }
        if self.cycle_secs <= 0 {
            bail!("field `cycle_secs` must be positive, got {}", self.cycle_secs);
        }
        if !(self.horizon_min >= 0.0) {
            bail!("field `horizon_min` must be >= 0, got {}", self.horizon_min);
        }
        if self.hop_limit == 0 {
            bail!("field `hop_limit` must be at least 1");
        }
        if !(self.twin.congestion_threshold > 0.0) || !(self.twin.ambient_derating > 0.0) {
            bail!("field `twin`: thresholds must be positive");
        }
        self.freshness.validate().context("field `freshness`")?;
        Ok(())
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            hop_limit: self.hop_limit,
            transport_term: self.transport_term,
            ..BuildOptions::with_alpha(self.alpha)
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            alpha: self.alpha,
            cycle_secs: self.cycle_secs,
            horizon_min: self.horizon_min,
            budget_secs: self.budget_secs,
            hop_limit: self.hop_limit,
            transport_term: self.transport_term,
            twin: self.twin.clone(),
            freshness: self.freshness.clone(),
            ..LoopConfig::default()
        }
    }
}
