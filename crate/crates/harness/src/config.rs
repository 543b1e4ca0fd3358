//! Experiment configuration: parsing, validation and canonical hashing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fkc_core::metrics::{GridSpec, MmdEstimator, W2dMethod};
use fkc_core::{BetaSchedule, ResamplingPolicy, Scheme, SimulationConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub schedule: ScheduleConfig,
    /// Named data distributions; targets refer to them by key.
    pub models: BTreeMap<String, ModelConfig>,
    pub target: TargetConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub resampling: ResamplingPolicy,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Ve { sigma_min: f64, sigma_max: f64 },
    Vp { beta_min: f64, beta_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Gaussian {
        mean: Vec<f64>,
        variance: f64,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
    },
    /// The 2D 40-mode benchmark with seeded mode locations.
    Gmm40 {
        seed: u64,
        #[serde(default = "unit")]
        variance: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardConfig {
    Quadratic { center: Vec<f64>, scale: f64 },
    Linear { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Annealed {
        model: String,
        beta: BetaSchedule,
        #[serde(default)]
        a: f64,
    },
    Product {
        models: [String; 2],
        beta: BetaSchedule,
        #[serde(default)]
        a: f64,
    },
    Geometric {
        models: [String; 2],
        beta: f64,
        #[serde(default)]
        a: f64,
    },
    WeightedProduct {
        models: Vec<String>,
        betas: Vec<f64>,
    },
    PoeCfg {
        uncond: String,
        cond: [String; 2],
        beta: f64,
    },
    RewardTilted {
        model: String,
        reward: RewardConfig,
        beta: BetaSchedule,
    },
}

impl TargetConfig {
    /// Model keys in the order the builder takes them, with their field paths.
    pub fn model_refs(&self) -> Vec<(String, &str)> {
        match self {
            TargetConfig::Annealed { model, .. } | TargetConfig::RewardTilted { model, .. } => {
                vec![("target.model".into(), model.as_str())]
            }
            TargetConfig::Product { models, .. } | TargetConfig::Geometric { models, .. } => models
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("target.models[{i}]"), m.as_str()))
                .collect(),
            TargetConfig::WeightedProduct { models, .. } => models
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("target.models[{i}]"), m.as_str()))
                .collect(),
            TargetConfig::PoeCfg { uncond, cond, .. } => {
                let mut v = vec![("target.uncond".to_string(), uncond.as_str())];
                v.extend(
                    cond.iter()
                        .enumerate()
                        .map(|(i, m)| (format!("target.cond[{i}]"), m.as_str())),
                );
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    TotalVar,
    Mmd,
    W1,
    W2,
    EnergyW1,
    EnergyW2,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::TotalVar => "total_var",
            MetricKind::Mmd => "mmd",
            MetricKind::W1 => "w1",
            MetricKind::W2 => "w2",
            MetricKind::EnergyW1 => "energy_w1",
            MetricKind::EnergyW2 => "energy_w2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Oracle sample count; defaults to the particle count.
    pub n_samples: Option<usize>,
    /// Added to the run seed to seed the oracle sampler.
    pub seed: u64,
    /// Largest exact power mixture the oracle will expand.
    pub max_components: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            n_samples: None,
            seed: 1_000_003,
            max_components: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub list: Vec<MetricKind>,
    pub grid: GridSpec,
    pub w2d: W2dMethod,
    pub mmd_estimator: MmdEstimator,
    /// Explicit bandwidths; the median heuristic when absent.
    pub mmd_scales: Option<Vec<f64>>,
    /// Samples with energy above this are dropped from the energy metrics.
    pub energy_max: Option<f64>,
    pub reference: ReferenceConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            list: vec![
                MetricKind::EnergyW2,
                MetricKind::Mmd,
                MetricKind::TotalVar,
                MetricKind::W1,
                MetricKind::W2,
            ],
            grid: GridSpec::default(),
            w2d: W2dMethod::default(),
            mmd_estimator: MmdEstimator::default(),
            mmd_scales: None,
            energy_max: None,
            reference: ReferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<DumpFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs"),
            formats: vec![DumpFormat::Binary],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub beta: Vec<f64>,
    pub a: Vec<f64>,
    pub scheme: Vec<Scheme>,
    pub n_particles: Vec<usize>,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: SweepAxes,
    pub seeds: usize,
    /// Refuse grids needing more runs (cells times seeds) than this.
    pub max_runs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axes: SweepAxes::default(),
            seeds: 1,
            max_runs: 500,
        }
    }
}

/// Parses JSON, reporting the field path of the first mismatch.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        HarnessError::validation(path, e.into_inner().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    parse_config(&text)
}

impl ExperimentConfig {
    /// Canonical JSON: keys sorted at every level, no whitespace.
    pub fn canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string(&sort_keys(value))?)
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        // serde_json's default map is ordered by key
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}
