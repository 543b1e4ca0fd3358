//! Turns a validated config into a weighted SDE and, where the target at
//! `t = 1` is itself a Gaussian mixture, an exact reference mixture.

use std::collections::BTreeMap;
use std::sync::Arc;

use fkc_core::rules::{LinearReward, QuadraticReward, Reward};
use fkc_core::{
    build_annealed, build_geometric, build_poe_cfg, build_product, build_reward_tilted,
    build_weighted_product, power_product, AnnealSpec, BetaSchedule, DiffusedGaussianMixture,
    FkcSde, GaussianMixture, NoiseSchedule, ScoreModel,
};

use crate::config::{
    ExperimentConfig, MetricKind, ModelConfig, RewardConfig, ScheduleConfig, TargetConfig,
};
use crate::error::{HarnessError, Result};

pub struct Experiment {
    pub sde: FkcSde,
    pub dim: usize,
    /// The normalized target at `t = 1`, when it has a closed form.
    pub reference: Option<GaussianMixture>,
}

fn model_mixture(m: &ModelConfig) -> fkc_core::Result<GaussianMixture> {
    match m {
        ModelConfig::Gaussian { mean, variance } => {
            GaussianMixture::gaussian(mean.clone(), *variance)
        }
        ModelConfig::Mixture {
            weights,
            means,
            variances,
        } => GaussianMixture::new(weights.clone(), means.clone(), variances.clone()),
        ModelConfig::Gmm40 { seed, variance } => GaussianMixture::gmm40(*seed, *variance),
    }
}

fn schedule(s: &ScheduleConfig, dim: usize) -> fkc_core::Result<NoiseSchedule> {
    match *s {
        ScheduleConfig::Ve {
            sigma_min,
            sigma_max,
        } => NoiseSchedule::ve_geometric(sigma_min, sigma_max, dim),
        ScheduleConfig::Vp { beta_min, beta_max } => {
            NoiseSchedule::vp_linear(beta_min, beta_max, dim)
        }
    }
}

/// `Some(n)` when `x` is a nonnegative integer.
fn as_power(x: f64) -> Option<u32> {
    (x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64).then_some(x as u32)
}

fn final_beta(b: &BetaSchedule) -> f64 {
    b.value(1.0)
}

impl Experiment {
    /// Validates every cross-field constraint and builds the SDE; errors carry
    /// the config field path.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.models.is_empty() {
            return Err(HarnessError::validation(
                "models",
                "at least one model is required",
            ));
        }
        let mut mixtures = BTreeMap::new();
        for (name, m) in &cfg.models {
            let g = model_mixture(m)
                .map_err(|e| HarnessError::validation(format!("models.{name}"), e.to_string()))?;
            mixtures.insert(name.as_str(), g);
        }
        let refs = cfg.target.model_refs();
        let mut used = Vec::with_capacity(refs.len());
        for (path, key) in &refs {
            let g = mixtures.get(key).ok_or_else(|| {
                HarnessError::validation(path.clone(), format!("unknown model `{key}`"))
            })?;
            used.push(g.clone());
        }
        let dim = used[0].dim();
        for ((path, _), g) in refs.iter().zip(&used) {
            if g.dim() != dim {
                return Err(HarnessError::validation(
                    path.clone(),
                    format!("model dimension {} differs from {dim}", g.dim()),
                ));
            }
        }
        let sched = schedule(&cfg.schedule, dim)
            .map_err(|e| HarnessError::validation("schedule", e.to_string()))?;
        let models: Vec<Arc<dyn ScoreModel>> = used
            .iter()
            .map(|g| {
                DiffusedGaussianMixture::new(g.clone(), sched)
                    .map(|m| Arc::new(m) as Arc<dyn ScoreModel>)
                    .map_err(|e| HarnessError::validation("schedule", e.to_string()))
            })
            .collect::<Result<_>>()?;
        let target_err = |e: fkc_core::FkcError| HarnessError::validation("target", e.to_string());
        let m = |i: usize| models[i].clone();

        let (sde, powers): (FkcSde, Option<Vec<(usize, f64)>>) = match &cfg.target {
            TargetConfig::Annealed { beta, a, .. } => (
                build_annealed(m(0), &sched, AnnealSpec::new(*beta, *a)).map_err(target_err)?,
                Some(vec![(0, final_beta(beta))]),
            ),
            TargetConfig::Product { beta, a, .. } => {
                let b = final_beta(beta);
                (
                    build_product(m(0), m(1), &sched, AnnealSpec::new(*beta, *a))
                        .map_err(target_err)?,
                    Some(vec![(0, b), (1, b)]),
                )
            }
            TargetConfig::Geometric { beta, a, .. } => (
                build_geometric(m(0), m(1), &sched, *beta, *a).map_err(target_err)?,
                Some(vec![(0, 1.0 - beta), (1, *beta)]),
            ),
            TargetConfig::WeightedProduct { betas, .. } => (
                build_weighted_product(models.clone(), betas.clone(), &sched)
                    .map_err(target_err)?,
                Some(betas.iter().copied().enumerate().collect()),
            ),
            TargetConfig::PoeCfg { beta, .. } => (
                build_poe_cfg(m(0), m(1), m(2), &sched, *beta).map_err(target_err)?,
                Some(vec![(0, 2.0 * (1.0 - beta)), (1, *beta), (2, *beta)]),
            ),
            TargetConfig::RewardTilted { reward, beta, .. } => {
                let r: Arc<dyn Reward> = match reward {
                    RewardConfig::Quadratic { center, scale } => {
                        if center.len() != dim {
                            return Err(HarnessError::validation(
                                "target.reward.center",
                                format!(
                                    "length {} differs from model dimension {dim}",
                                    center.len()
                                ),
                            ));
                        }
                        Arc::new(QuadraticReward {
                            center: center.clone(),
                            scale: *scale,
                        })
                    }
                    RewardConfig::Linear { direction } => {
                        if direction.len() != dim {
                            return Err(HarnessError::validation(
                                "target.reward.direction",
                                format!(
                                    "length {} differs from model dimension {dim}",
                                    direction.len()
                                ),
                            ));
                        }
                        Arc::new(LinearReward {
                            direction: direction.clone(),
                        })
                    }
                };
                (
                    build_reward_tilted(m(0), &sched, r, *beta).map_err(target_err)?,
                    None,
                )
            }
        };

        let reference = match (&cfg.target, powers) {
            (TargetConfig::RewardTilted { reward, beta, .. }, _) => match reward {
                RewardConfig::Quadratic { center, scale } if final_beta(beta) * scale > 0.0 => {
                    Some(used[0].tilt_gaussian(center, 1.0 / (final_beta(beta) * scale))?)
                }
                _ => None,
            },
            (_, Some(powers)) => {
                let ints: Option<Vec<(usize, u32)>> = powers
                    .iter()
                    .map(|&(i, p)| as_power(p).map(|n| (i, n)))
                    .collect();
                match ints {
                    Some(ints) if ints.iter().any(|&(_, n)| n > 0) => {
                        let factors: Vec<(&GaussianMixture, u32)> = ints
                            .iter()
                            .filter(|(_, n)| *n > 0)
                            .map(|&(i, n)| (&used[i], n))
                            .collect();
                        power_product(&factors, cfg.metrics.reference.max_components).ok()
                    }
                    _ => None,
                }
            }
            _ => None,
        };

        cfg.simulation
            .validate()
            .map_err(|e| HarnessError::validation("simulation", e.to_string()))?;
        cfg.resampling
            .validate()
            .map_err(|e| HarnessError::validation("resampling", e.to_string()))?;
        if cfg.metrics.list.contains(&MetricKind::TotalVar) {
            if dim != 2 {
                return Err(HarnessError::validation(
                    "metrics.list",
                    format!("total_var needs 2D samples, the target is {dim}D"),
                ));
            }
            cfg.metrics
                .grid
                .validate()
                .map_err(|e| HarnessError::validation("metrics.grid", e.to_string()))?;
        }
        if let Some(s) = &cfg.metrics.mmd_scales {
            if s.is_empty() || s.iter().any(|v| !(*v > 0.0)) {
                return Err(HarnessError::validation(
                    "metrics.mmd_scales",
                    "bandwidths must be positive",
                ));
            }
        }
        if cfg.metrics.reference.n_samples == Some(0) {
            return Err(HarnessError::validation(
                "metrics.reference.n_samples",
                "must be at least 1",
            ));
        }
        if cfg.output.formats.is_empty() {
            return Err(HarnessError::validation(
                "output.formats",
                "at least one dump format is required",
            ));
        }
        Ok(Self {
            sde,
            dim,
            reference,
        })
    }
}
