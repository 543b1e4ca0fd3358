use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BetaSchedule, Reward, WeightedSde};
use crate::error::{FkcError, Result};
use crate::math::{dot, norm_sq};
use crate::models::ScoreModel;
use crate::schedule::NoiseSchedule;

/// Inverse temperature plus the drift/noise mixing parameter `a`
/// (`a = 0`: target-score SDE, `a = 1/2`: tempered-noise SDE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSpec {
    pub beta: BetaSchedule,
    #[serde(default)]
    pub a: f64,
}

impl AnnealSpec {
    pub fn new(beta: impl Into<BetaSchedule>, a: f64) -> Self {
        Self {
            beta: beta.into(),
            a,
        }
    }

    pub fn target_score(beta: f64) -> Self {
        Self::new(beta, 0.0)
    }

    pub fn tempered_noise(beta: f64) -> Self {
        Self::new(beta, 0.5)
    }

    /// `(eta, zeta)` at inverse temperature `beta`.
    pub fn coefficients(a: f64, beta: f64) -> (f64, f64) {
        let eta = beta + (1.0 - beta) * a;
        let zeta2 = (beta + (1.0 - beta) * 2.0 * a) / beta;
        (eta, zeta2.max(0.0).sqrt())
    }

    fn validate(&self) -> Result<()> {
        self.beta.check_finite()?;
        let (lo, _) = self.beta.range();
        if lo <= 0.0 {
            return Err(FkcError::Parameter(format!(
                "annealing needs beta > 0 on [0, 1], got {:?}",
                self.beta
            )));
        }
        // (beta + 2a(1 - beta)) / beta = 1 - 2a + 2a / beta is monotone in beta
        for b in [self.beta.value(0.0), self.beta.value(1.0)] {
            if (b + (1.0 - b) * 2.0 * self.a) / b < 0.0 {
                return Err(FkcError::Parameter(format!(
                    "(beta + (1 - beta) 2a) / beta < 0 for beta = {b}, a = {}",
                    self.a
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub enum Target {
    Annealed {
        model: Arc<dyn ScoreModel>,
        spec: AnnealSpec,
    },
    Product {
        m1: Arc<dyn ScoreModel>,
        m2: Arc<dyn ScoreModel>,
        spec: AnnealSpec,
    },
    GeometricAvg {
        m1: Arc<dyn ScoreModel>,
        m2: Arc<dyn ScoreModel>,
        beta: f64,
        a: f64,
    },
    WeightedProduct {
        models: Vec<Arc<dyn ScoreModel>>,
        betas: Vec<f64>,
    },
    PoeCfg {
        uncond: Arc<dyn ScoreModel>,
        cond1: Arc<dyn ScoreModel>,
        cond2: Arc<dyn ScoreModel>,
        beta: f64,
    },
    RewardTilted {
        model: Arc<dyn ScoreModel>,
        reward: Arc<dyn Reward>,
        beta: BetaSchedule,
    },
}

impl Target {
    fn name(&self) -> &'static str {
        match self {
            Target::Annealed { .. } => "annealed",
            Target::Product { .. } => "product",
            Target::GeometricAvg { .. } => "geometric",
            Target::WeightedProduct { .. } => "weighted_product",
            Target::PoeCfg { .. } => "poe_cfg",
            Target::RewardTilted { .. } => "reward_tilted",
        }
    }
}

impl std::fmt::Debug for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A weighted SDE assembled by one of the `build_*` functions.
#[derive(Debug, Clone)]
pub struct FkcSde {
    schedule: NoiseSchedule,
    target: Target,
}

fn check_models(sched: &NoiseSchedule, models: &[&Arc<dyn ScoreModel>]) -> Result<()> {
    sched.validate()?;
    if models.is_empty() {
        return Err(FkcError::Empty("model list"));
    }
    for m in models {
        if m.dim() != sched.dim {
            return Err(FkcError::Shape {
                expected: sched.dim,
                got: m.dim(),
            });
        }
        if m.schedule() != sched {
            return Err(FkcError::Configuration(
                "all composed models must share one noise schedule".into(),
            ));
        }
    }
    Ok(())
}

fn require_density(models: &[&Arc<dyn ScoreModel>], why: &str) -> Result<()> {
    if models.iter().all(|m| m.capabilities().log_density) {
        Ok(())
    } else {
        Err(FkcError::Capability(format!(
            "{why} needs model log-densities"
        )))
    }
}

/// `q_t^beta` via `-f + eta sigma^2 s` and noise `zeta sigma`.
pub fn build_annealed(
    model: Arc<dyn ScoreModel>,
    sched: &NoiseSchedule,
    spec: AnnealSpec,
) -> Result<FkcSde> {
    check_models(sched, &[&model])?;
    spec.validate()?;
    if !spec.beta.is_constant() {
        require_density(&[&model], "time-dependent beta")?;
    }
    Ok(FkcSde {
        schedule: *sched,
        target: Target::Annealed { model, spec },
    })
}

/// `(q^1_t q^2_t)^beta`.
pub fn build_product(
    m1: Arc<dyn ScoreModel>,
    m2: Arc<dyn ScoreModel>,
    sched: &NoiseSchedule,
    spec: AnnealSpec,
) -> Result<FkcSde> {
    check_models(sched, &[&m1, &m2])?;
    spec.validate()?;
    if !spec.beta.is_constant() {
        require_density(&[&m1, &m2], "time-dependent beta")?;
    }
    Ok(FkcSde {
        schedule: *sched,
        target: Target::Product { m1, m2, spec },
    })
}

/// `(q^1_t)^(1 - beta) (q^2_t)^beta`.
pub fn build_geometric(
    m1: Arc<dyn ScoreModel>,
    m2: Arc<dyn ScoreModel>,
    sched: &NoiseSchedule,
    beta: f64,
    a: f64,
) -> Result<FkcSde> {
    check_models(sched, &[&m1, &m2])?;
    if !beta.is_finite() || !a.is_finite() {
        return Err(FkcError::Parameter("non-finite beta or a".into()));
    }
    if beta == 0.0 {
        if a != 0.0 {
            return Err(FkcError::Parameter("beta = 0 requires a = 0".into()));
        }
    } else if (beta + 2.0 * a * (1.0 - beta)) / beta < 0.0 {
        return Err(FkcError::Parameter(format!(
            "(beta + 2a(1 - beta)) / beta < 0 for beta = {beta}, a = {a}"
        )));
    }
    Ok(FkcSde {
        schedule: *sched,
        target: Target::GeometricAvg { m1, m2, beta, a },
    })
}

/// `prod_i (q^i_t)^beta_i`.
pub fn build_weighted_product(
    models: Vec<Arc<dyn ScoreModel>>,
    betas: Vec<f64>,
    sched: &NoiseSchedule,
) -> Result<FkcSde> {
    check_models(sched, &models.iter().collect::<Vec<_>>())?;
    if models.len() != betas.len() {
        return Err(FkcError::Shape {
            expected: models.len(),
            got: betas.len(),
        });
    }
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(FkcError::Parameter("non-finite weight in betas".into()));
    }
    Ok(FkcSde {
        schedule: *sched,
        target: Target::WeightedProduct { models, betas },
    })
}

/// `(q^0_t)^(2(1 - beta)) (q^1_t q^2_t)^beta`.
pub fn build_poe_cfg(
    uncond: Arc<dyn ScoreModel>,
    cond1: Arc<dyn ScoreModel>,
    cond2: Arc<dyn ScoreModel>,
    sched: &NoiseSchedule,
    beta: f64,
) -> Result<FkcSde> {
    check_models(sched, &[&uncond, &cond1, &cond2])?;
    if !beta.is_finite() {
        return Err(FkcError::Parameter("non-finite beta".into()));
    }
    Ok(FkcSde {
        schedule: *sched,
        target: Target::PoeCfg {
            uncond,
            cond1,
            cond2,
            beta,
        },
    })
}

/// `q_t exp(beta_t r)`.
pub fn build_reward_tilted(
    model: Arc<dyn ScoreModel>,
    sched: &NoiseSchedule,
    reward: Arc<dyn Reward>,
    beta: BetaSchedule,
) -> Result<FkcSde> {
    check_models(sched, &[&model])?;
    beta.check_finite()?;
    Ok(FkcSde {
        schedule: *sched,
        target: Target::RewardTilted {
            model,
            reward,
            beta,
        },
    })
}

/// `out = -f + c * v` where `out` holds `f` on entry.
fn negate_and_add(out: &mut [f64], c: f64, v: &[f64]) {
    for (o, vi) in out.iter_mut().zip(v) {
        *o = -*o + c * vi;
    }
}

impl FkcSde {
    pub fn target(&self) -> &Target {
        &self.target
    }
}

impl WeightedSde for FkcSde {
    fn dim(&self) -> usize {
        self.schedule.dim
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn diffusion_scale(&self, t: f64) -> f64 {
        let sigma = self.schedule.gen_sigma(t);
        let zeta = match &self.target {
            Target::Annealed { spec, .. } | Target::Product { spec, .. } => {
                AnnealSpec::coefficients(spec.a, spec.beta.value(t)).1
            }
            Target::GeometricAvg { beta, a, .. } => {
                if *beta == 0.0 {
                    1.0
                } else {
                    (1.0 + 2.0 * a * (1.0 - beta) / beta).max(0.0).sqrt()
                }
            }
            _ => 1.0,
        };
        zeta * sigma
    }

    fn evaluate(&self, x: &[f64], t: f64, drift: &mut [f64]) -> f64 {
        let d = self.schedule.dim;
        let sigma = self.schedule.gen_sigma(t);
        let s2 = sigma * sigma;
        let div = self.schedule.gen_drift_into(x, t, drift);
        match &self.target {
            Target::Annealed { model, spec } => {
                let beta = spec.beta.value(t);
                let dbeta = spec.beta.derivative(t);
                let (eta, _) = AnnealSpec::coefficients(spec.a, beta);
                let mut s = vec![0.0; d];
                let mut g = 0.0;
                if dbeta != 0.0 {
                    let lq = model
                        .score_and_log_density(x, t, &mut s)
                        .unwrap_or(f64::NAN);
                    g += dbeta * lq;
                } else {
                    model.score_into(x, t, &mut s);
                }
                negate_and_add(drift, eta * s2, &s);
                g + (beta - 1.0) * (div + 0.5 * s2 * beta * norm_sq(&s))
            }
            Target::Product { m1, m2, spec } => {
                let beta = spec.beta.value(t);
                let dbeta = spec.beta.derivative(t);
                let (eta, _) = AnnealSpec::coefficients(spec.a, beta);
                let mut s1 = vec![0.0; d];
                let mut s2v = vec![0.0; d];
                let mut g = 0.0;
                if dbeta != 0.0 {
                    let l1 = m1.score_and_log_density(x, t, &mut s1).unwrap_or(f64::NAN);
                    let l2 = m2.score_and_log_density(x, t, &mut s2v).unwrap_or(f64::NAN);
                    g += dbeta * (l1 + l2);
                } else {
                    m1.score_into(x, t, &mut s1);
                    m2.score_into(x, t, &mut s2v);
                }
                let sum: Vec<f64> = s1.iter().zip(&s2v).map(|(a, b)| a + b).collect();
                negate_and_add(drift, eta * s2, &sum);
                g + beta * (beta - 1.0) * 0.5 * s2 * norm_sq(&sum)
                    + beta * s2 * dot(&s1, &s2v)
                    + (2.0 * beta - 1.0) * div
            }
            Target::GeometricAvg { m1, m2, beta, a } => {
                let beta = *beta;
                let mut s1 = vec![0.0; d];
                let mut s2v = vec![0.0; d];
                m1.score_into(x, t, &mut s1);
                m2.score_into(x, t, &mut s2v);
                let scale = if beta == 0.0 {
                    1.0
                } else {
                    1.0 + a * (1.0 - beta) / beta
                };
                let mix: Vec<f64> = s1
                    .iter()
                    .zip(&s2v)
                    .map(|(u, w)| (1.0 - beta) * u + beta * w)
                    .collect();
                negate_and_add(drift, s2 * scale, &mix);
                let diff: f64 = s1.iter().zip(&s2v).map(|(u, w)| (u - w) * (u - w)).sum();
                0.5 * s2 * beta * (beta - 1.0) * diff
                    + 2.0 * a * s2 * (beta - 1.0).powi(2) * dot(&s1, &s2v)
            }
            Target::WeightedProduct { models, betas } => {
                let mut s = vec![0.0; d];
                let mut mix = vec![0.0; d];
                let mut sum_norms = 0.0;
                for (m, &b) in models.iter().zip(betas) {
                    m.score_into(x, t, &mut s);
                    for (acc, si) in mix.iter_mut().zip(&s) {
                        *acc += b * si;
                    }
                    sum_norms += b * norm_sq(&s);
                }
                negate_and_add(drift, s2, &mix);
                let total: f64 = betas.iter().sum();
                (total - 1.0) * div + 0.5 * s2 * norm_sq(&mix) - 0.5 * s2 * sum_norms
            }
            Target::PoeCfg {
                uncond,
                cond1,
                cond2,
                beta,
            } => {
                let beta = *beta;
                let mut s0 = vec![0.0; d];
                let mut s1 = vec![0.0; d];
                let mut s2v = vec![0.0; d];
                uncond.score_into(x, t, &mut s0);
                cond1.score_into(x, t, &mut s1);
                cond2.score_into(x, t, &mut s2v);
                let v1: Vec<f64> = s0
                    .iter()
                    .zip(&s1)
                    .map(|(u, c)| (1.0 - beta) * u + beta * c)
                    .collect();
                let v2: Vec<f64> = s0
                    .iter()
                    .zip(&s2v)
                    .map(|(u, c)| (1.0 - beta) * u + beta * c)
                    .collect();
                let both: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
                negate_and_add(drift, s2, &both);
                let d1: f64 = s0.iter().zip(&s1).map(|(u, c)| (u - c) * (u - c)).sum();
                let d2: f64 = s0.iter().zip(&s2v).map(|(u, c)| (u - c) * (u - c)).sum();
                0.5 * s2 * beta * (beta - 1.0) * (d1 + d2) + s2 * dot(&v1, &v2) + div
            }
            Target::RewardTilted {
                model,
                reward,
                beta,
            } => {
                let b = beta.value(t);
                let db = beta.derivative(t);
                let mut s = vec![0.0; d];
                let mut gr = vec![0.0; d];
                model.score_into(x, t, &mut s);
                reward.gradient_into(x, &mut gr);
                // drift still holds f here
                let f_dot = dot(&gr, drift);
                let r = if db != 0.0 { reward.value(x) } else { 0.0 };
                for ((o, si), gi) in drift.iter_mut().zip(&s).zip(&gr) {
                    *o = -*o + s2 * (si + 0.5 * b * gi);
                }
                db * r - b * f_dot + b * 0.5 * s2 * dot(&gr, &s)
            }
        }
    }

    fn target_log_density(&self, x: &[f64], t: f64) -> Option<f64> {
        match &self.target {
            Target::Annealed { model, spec } => Some(spec.beta.value(t) * model.log_density(x, t)?),
            Target::Product { m1, m2, spec } => {
                Some(spec.beta.value(t) * (m1.log_density(x, t)? + m2.log_density(x, t)?))
            }
            Target::GeometricAvg { m1, m2, beta, .. } => {
                let mut l = 0.0;
                // skip zero exponents so a model without densities can still sit at weight 0
                if *beta != 1.0 {
                    l += (1.0 - beta) * m1.log_density(x, t)?;
                }
                if *beta != 0.0 {
                    l += beta * m2.log_density(x, t)?;
                }
                Some(l)
            }
            Target::WeightedProduct { models, betas } => {
                let mut l = 0.0;
                for (m, b) in models.iter().zip(betas) {
                    if *b != 0.0 {
                        l += b * m.log_density(x, t)?;
                    }
                }
                Some(l)
            }
            Target::PoeCfg {
                uncond,
                cond1,
                cond2,
                beta,
            } => {
                let mut l = beta * (cond1.log_density(x, t)? + cond2.log_density(x, t)?);
                if *beta != 1.0 {
                    l += 2.0 * (1.0 - beta) * uncond.log_density(x, t)?;
                }
                Some(l)
            }
            Target::RewardTilted {
                model,
                reward,
                beta,
            } => Some(model.log_density(x, t)? + beta.value(t) * reward.value(x)),
        }
    }

    fn initial_exponent(&self, t: f64) -> f64 {
        match &self.target {
            Target::Annealed { spec, .. } => spec.beta.value(t),
            Target::Product { spec, .. } => 2.0 * spec.beta.value(t),
            Target::GeometricAvg { .. } | Target::RewardTilted { .. } => 1.0,
            Target::WeightedProduct { betas, .. } => betas.iter().sum(),
            Target::PoeCfg { .. } => 2.0,
        }
    }
}
