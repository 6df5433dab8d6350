//! JSON configuration files. Every field has a default, so a config file
//! only needs the values it changes; command-line flags override both.

use prpm_core::eventlog::SplitFractions;
use prpm_core::sim::{DurationConfig, DurationKind};
use prpm_core::{CostParams, LabelingRules, Policy, SimConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub rules: LabelingRules,
    pub fractions: SplitFractions,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            rules: LabelingRules::loan_application(),
            fractions: SplitFractions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub training: TrainConfig,
    /// Percentile of trace lengths used as the prefix-length cap.
    pub prefix_percentile: f64,
    /// Activity counted by the `offer_count` feature.
    pub offer_activity: String,
    /// Features left out of the confounder set.
    pub w_exclude: Vec<String>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            training: TrainConfig::default(),
            prefix_percentile: 0.9,
            offer_activity: LabelingRules::loan_application().offer_activity,
            w_exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    GainRanked,
    ProbabilityRanked,
    Both,
}

impl PolicyChoice {
    pub fn policies(self) -> Vec<Policy> {
        match self {
            PolicyChoice::GainRanked => vec![Policy::GainRanked],
            PolicyChoice::ProbabilityRanked => vec![Policy::ProbabilityRanked],
            PolicyChoice::Both => Policy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub c_uout: f64,
    pub c_t1: f64,
    pub tau: f64,
    pub capacity: usize,
    pub duration: DurationConfig,
    pub policy: PolicyChoice,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            c_uout: 20.0,
            c_t1: 1.0,
            tau: 0.5,
            capacity: 2,
            duration: DurationConfig::default(),
            policy: PolicyChoice::Both,
            seed: 0,
        }
    }
}

impl SimSettings {
    pub fn sim_config(&self, policy: Policy) -> Result<SimConfig> {
        self.duration.validate()?;
        Ok(SimConfig {
            params: CostParams::new(self.c_uout, self.c_t1, self.tau)?,
            capacity: self.capacity,
            duration: self.duration.clone(),
            policy,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub resource_counts: Vec<usize>,
    pub c_uout_values: Vec<f64>,
    pub c_t1: f64,
    pub tau_values: Vec<f64>,
    pub duration_kinds: Vec<DurationKind>,
    pub seeds: Vec<u64>,
    pub policies: Vec<Policy>,
    /// Shared duration parameters; `kind` is taken from `duration_kinds`.
    pub duration: DurationConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            resource_counts: (1..=10).collect(),
            c_uout_values: vec![1.0, 2.0, 3.0, 5.0, 10.0, 20.0],
            c_t1: 1.0,
            tau_values: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            duration_kinds: DurationKind::ALL.to_vec(),
            seeds: vec![0],
            policies: Policy::ALL.to_vec(),
            duration: DurationConfig::default(),
        }
    }
}

fn distinct<T: PartialEq + std::fmt::Debug>(name: &str, values: &[T]) -> Result<()> {
    if values.is_empty() {
        return Err(CliError::config(format!("{name} must not be empty")));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(CliError::config(format!("{name} lists {v:?} twice")));
        }
    }
    Ok(())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        distinct("resource_counts", &self.resource_counts)?;
        distinct("c_uout_values", &self.c_uout_values)?;
        distinct("tau_values", &self.tau_values)?;
        distinct("duration_kinds", &self.duration_kinds)?;
        distinct("seeds", &self.seeds)?;
        distinct("policies", &self.policies)?;
        if self.max_resources() == 0 {
            return Err(CliError::config("resource_counts needs a positive entry"));
        }
        for &u in &self.c_uout_values {
            for &tau in &self.tau_values {
                CostParams::new(u, self.c_t1, tau)?;
            }
        }
        for &kind in &self.duration_kinds {
            DurationConfig {
                kind,
                ..self.duration.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn max_resources(&self) -> usize {
        self.resource_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn grid_size(&self) -> usize {
        self.resource_counts.len()
            * self.c_uout_values.len()
            * self.tau_values.len()
            * self.duration_kinds.len()
            * self.policies.len()
            * self.seeds.len()
    }
}

pub const DEFAULT_TAU_GRID: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
