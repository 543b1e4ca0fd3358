//! Euler-Maruyama particle simulation of weighted SDEs with SMC resampling.

mod ensemble;
mod io;
mod resample;

pub use ensemble::ParticleEnsemble;
pub use io::{read_binary, write_binary, write_csv, BinaryDump, BINARY_MAGIC};
pub use resample::{
    bdc_clocks_step, ess, jump_resample_step, normalized_weights, systematic_resample,
    systematic_resample_with_offset,
};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FkcError, Result};
use crate::math::log_sum_exp;
use crate::models::log_normal_iso;
use crate::rules::WeightedSde;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Weights are tracked but ignored: the plain (uncorrected) SDE.
    None,
    /// Weights accumulate over the whole run and are returned with the samples.
    #[default]
    SnisFinal,
    /// Systematic resampling on the accumulated weights, then reset.
    Systematic,
    /// Continuous-time jump process in place of reweighting.
    Jump,
    /// Birth-death moves triggered by exponential clocks.
    BdcClocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResamplingPolicy {
    pub scheme: Scheme,
    /// Active interval in generation time.
    pub t_min: f64,
    pub t_max: f64,
    /// Resample every `cadence` active steps (systematic only).
    pub cadence: usize,
    /// Only resample when `ESS / K` drops below this fraction.
    pub ess_threshold: Option<f64>,
    /// Leave increments outside the active interval out of `log Z` too.
    pub exclude_inactive_from_log_z: bool,
}

impl Default for ResamplingPolicy {
    fn default() -> Self {
        Self {
            scheme: Scheme::SnisFinal,
            t_min: 0.0,
            t_max: 1.0,
            cadence: 1,
            ess_threshold: None,
            exclude_inactive_from_log_z: false,
        }
    }
}

impl ResamplingPolicy {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Default::default()
        }
    }

    pub fn active_between(mut self, t_min: f64, t_max: f64) -> Self {
        self.t_min = t_min;
        self.t_max = t_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.t_min && self.t_min <= self.t_max && self.t_max <= 1.0) {
            return Err(FkcError::Parameter(format!(
                "active interval [{}, {}] must satisfy 0 <= t_min <= t_max <= 1",
                self.t_min, self.t_max
            )));
        }
        if self.cadence == 0 {
            return Err(FkcError::Parameter("cadence must be at least 1".into()));
        }
        if let Some(f) = self.ess_threshold {
            if !(0.0..=1.0).contains(&f) {
                return Err(FkcError::Parameter(format!(
                    "ESS threshold {f} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn is_active(&self, t: f64) -> bool {
        self.t_min <= t && t <= self.t_max
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_particles: usize,
    pub n_steps: usize,
    /// Optional explicit step; must tile `[t_start, 1]`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Generation time to start from (a warm start skips the noisiest part).
    #[serde(default)]
    pub t_start: f64,
    /// Per-particle cap on the drift norm.
    #[serde(default)]
    pub clip_drift: Option<f64>,
    /// Importance-weight the initial Gaussian against the target at `t_start`
    /// when the target density is analytic.
    #[serde(default = "yes")]
    pub initial_weights: bool,
}

impl SimulationConfig {
    pub fn new(n_particles: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_particles,
            n_steps,
            dt: None,
            seed,
            t_start: 0.0,
            clip_drift: None,
            initial_weights: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(FkcError::Parameter("n_particles must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(FkcError::Parameter("n_steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.t_start) {
            return Err(FkcError::Parameter(format!(
                "t_start {} outside [0, 1)",
                self.t_start
            )));
        }
        if let Some(dt) = self.dt {
            let span = self.n_steps as f64 * dt;
            if (span - (1.0 - self.t_start)).abs() > 1e-12 {
                return Err(FkcError::Parameter(format!(
                    "n_steps * dt = {span} does not span [{}, 1]",
                    self.t_start
                )));
            }
        }
        if let Some(c) = self.clip_drift {
            if !(c > 0.0) {
                return Err(FkcError::Parameter(format!(
                    "clip_drift {c} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (1.0 - self.t_start) / self.n_steps as f64
    }
}

/// Per-step record of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Left endpoint of every step.
    pub times: Vec<f64>,
    /// ESS after the step.
    pub ess: Vec<f64>,
    /// Running `log Z` estimate after the step.
    pub log_z: Vec<f64>,
    /// Steps at which a systematic resample happened.
    pub resample_steps: Vec<usize>,
    /// Jumps / clock firings per step.
    pub jumps: Vec<usize>,
    /// `log Z` of the initial importance weights.
    pub initial_log_z: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub ensemble: ParticleEnsemble,
    pub log_z: f64,
    pub diagnostics: Diagnostics,
}

fn initial_ensemble(
    sde: &dyn WeightedSde,
    cfg: &SimulationConfig,
) -> Result<(ParticleEnsemble, f64)> {
    let d = sde.dim();
    let t0 = cfg.t_start;
    let power = sde.initial_exponent(t0);
    if !(power > 0.0 && power.is_finite()) {
        return Err(FkcError::Configuration(format!(
            "target at t = {t0} is the reference Gaussian to the power {power}, which is not normalizable"
        )));
    }
    let var = sde.schedule().gen_marginal(t0).1 / power;
    let mut ens = ParticleEnsemble::new(vec![0.0; cfg.n_particles * d], d, cfg.seed)?;
    ens.t = t0;
    let sd = var.sqrt();
    ens.positions
        .par_chunks_mut(d)
        .zip(ens.rngs.par_iter_mut())
        .for_each(|(x, rng)| {
            x.iter_mut()
                .for_each(|xi| *xi = sd * Distribution::<f64>::sample(&StandardNormal, rng))
        });
    let mut log_z = 0.0;
    if cfg.initial_weights && sde.target_log_density(ens.particle(0), t0).is_some() {
        let zero = vec![0.0; d];
        let lw: Vec<f64> = ens
            .positions
            .par_chunks(d)
            .map(|x| {
                sde.target_log_density(x, t0).unwrap_or(f64::NAN) - log_normal_iso(x, &zero, var)
            })
            .collect();
        if let Some(k) = lw.iter().position(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(FkcError::SimulationFailure {
                step: 0,
                t: t0,
                particle: k,
                what: "initial importance weight is not finite".into(),
            });
        }
        log_z = log_sum_exp(&lw) - (cfg.n_particles as f64).ln();
        ens.log_weights = lw;
    }
    Ok((ens, log_z))
}

/// Simulates `sde` from the reference Gaussian at `cfg.t_start` to `t = 1`.
///
/// Each step moves every particle by Euler-Maruyama from `t_n`, adds
/// `(g(x_n) - g_bar) dt` to its log-weight (`g_bar` the weighted mean), adds
/// `log sum_k W_k exp(g_k dt)` to `log Z`, and applies the policy. The result is
/// a deterministic function of the seed regardless of thread count.
pub fn simulate(
    sde: &dyn WeightedSde,
    cfg: &SimulationConfig,
    policy: &ResamplingPolicy,
) -> Result<SimulationOutput> {
    cfg.validate()?;
    policy.validate()?;
    let d = sde.dim();
    let k = cfg.n_particles;
    let h = cfg.dt.unwrap_or_else(|| cfg.step());
    let sqrt_h = h.sqrt();
    let (mut ens, mut log_z) = initial_ensemble(sde, cfg)?;
    let mut diag = Diagnostics {
        initial_log_z: log_z,
        ..Default::default()
    };
    let mut drift = vec![0.0; k * d];
    let mut g = vec![0.0; k];
    let mut active_steps = 0usize;

    for n in 0..cfg.n_steps {
        let t = cfg.t_start + n as f64 * h;
        let scale = sde.diffusion_scale(t);
        let failure = ens
            .positions
            .par_chunks_mut(d)
            .zip(drift.par_chunks_mut(d))
            .zip(ens.rngs.par_iter_mut())
            .zip(g.par_iter_mut())
            .enumerate()
            .map(|(i, (((x, v), rng), gi))| {
                let rate = sde.evaluate(x, t, v);
                if !rate.is_finite() {
                    return Some((i, format!("weight rate is {rate}")));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Some((i, "drift is not finite".to_string()));
                }
                if let Some(cap) = cfg.clip_drift {
                    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if norm > cap {
                        v.iter_mut().for_each(|c| *c *= cap / norm);
                    }
                }
                for (xi, vi) in x.iter_mut().zip(v.iter()) {
                    let z: f64 = StandardNormal.sample(rng);
                    *xi += vi * h + scale * sqrt_h * z;
                }
                if x.iter().any(|c| !c.is_finite()) {
                    return Some((i, "position is not finite".to_string()));
                }
                *gi = rate;
                None
            })
            .find_first(|r| r.is_some())
            .flatten();
        if let Some((particle, what)) = failure {
            return Err(FkcError::SimulationFailure {
                step: n,
                t,
                particle,
                what,
            });
        }

        let active = policy.is_active(t);
        let w = ens.weights()?;
        let gbar: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
        if active || !policy.exclude_inactive_from_log_z {
            // log sum_k W_k exp(g_k h), shifted by g_bar for stability
            let s: f64 = w
                .iter()
                .zip(&g)
                .map(|(a, b)| a * ((b - gbar) * h).exp())
                .sum();
            log_z += gbar * h + s.ln();
        }

        let mut jumps = 0;
        match policy.scheme {
            Scheme::Jump | Scheme::BdcClocks if active => {
                if !ens.is_uniform() {
                    ens.resample_systematic()?;
                    diag.resample_steps.push(n);
                }
                jumps = if policy.scheme == Scheme::Jump {
                    jump_resample_step(&mut ens, &mut g, h)?
                } else {
                    bdc_clocks_step(&mut ens, &mut g, h)?.len()
                };
            }
            Scheme::Jump | Scheme::BdcClocks => {}
            _ if active => {
                for (lw, gi) in ens.log_weights.iter_mut().zip(&g) {
                    *lw += (gi - gbar) * h;
                }
                if policy.scheme == Scheme::Systematic {
                    active_steps += 1;
                    let due = active_steps % policy.cadence == 0;
                    let low = match policy.ess_threshold {
                        Some(f) => ens.ess()? < f * k as f64,
                        None => true,
                    };
                    if due && low {
                        ens.resample_systematic()?;
                        diag.resample_steps.push(n);
                    }
                }
            }
            _ => {}
        }
        ens.t = t + h;
        diag.times.push(t);
        diag.ess.push(ens.ess()?);
        diag.log_z.push(log_z);
        diag.jumps.push(jumps);
    }
    ens.t = 1.0;
    if policy.scheme == Scheme::None {
        ens.log_weights.iter_mut().for_each(|w| *w = 0.0);
    }
    Ok(SimulationOutput {
        ensemble: ens,
        log_z,
        diagnostics: diag,
    })
}
