//! Reference noising dynamics shared by every model in a composition.
//!
//! Two time conventions coexist. The primitives on [`NoiseSchedule`]
//! (`sigma_at`, `drift_at`, `vp_marginal_params`, `accumulated_variance`) take
//! the *noising* time `tau`, where `tau = 0` is data and `tau = 1` is fully
//! noised. Everything that simulates or scores (models, builders, the particle
//! engine) uses *generation* time `t = 1 - tau`; the `gen_*` helpers do the
//! conversion.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, FkcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Zero drift, `sigma(tau) = sigma_min * (sigma_max / sigma_min)^tau`.
    VeGeometric { sigma_min: f64, sigma_max: f64 },
    /// `f(x) = -beta_hat(tau) x / 2`, `sigma(tau) = sqrt(beta_hat(tau))`, with
    /// `beta_hat` linear between the endpoints.
    VpLinear { beta_min: f64, beta_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    pub dim: usize,
}

fn check_time(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(FkcError::Domain(format!("time {tau} outside [0, 1]")))
    }
}

impl NoiseSchedule {
    pub fn ve_geometric(sigma_min: f64, sigma_max: f64, dim: usize) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::VeGeometric {
                sigma_min,
                sigma_max,
            },
            dim,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn vp_linear(beta_min: f64, beta_max: f64, dim: usize) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::VpLinear { beta_min, beta_max },
            dim,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(FkcError::Parameter(
                "schedule dimension must be positive".into(),
            ));
        }
        match self.kind {
            ScheduleKind::VeGeometric {
                sigma_min,
                sigma_max,
            } => {
                if !(sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite()) {
                    return Err(FkcError::Parameter(format!(
                        "VE schedule needs 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})"
                    )));
                }
            }
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                if !(beta_min > 0.0 && beta_max > 0.0 && beta_max.is_finite()) {
                    return Err(FkcError::Parameter(format!(
                        "VP schedule needs positive beta endpoints, got ({beta_min}, {beta_max})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_vp(&self) -> bool {
        matches!(self.kind, ScheduleKind::VpLinear { .. })
    }

    /// Diffusion coefficient at noising time `tau`.
    pub fn sigma_at(&self, tau: f64) -> Result<f64> {
        check_time(tau)?;
        Ok(self.sigma(tau))
    }

    pub(crate) fn sigma(&self, tau: f64) -> f64 {
        match self.kind {
            ScheduleKind::VeGeometric {
                sigma_min,
                sigma_max,
            } => sigma_min * (sigma_max / sigma_min).powf(tau),
            ScheduleKind::VpLinear { .. } => self.beta_hat(tau).sqrt(),
        }
    }

    /// `beta_hat(tau)` of a VP schedule; zero for VE.
    pub fn beta_hat(&self, tau: f64) -> f64 {
        match self.kind {
            ScheduleKind::VeGeometric { .. } => 0.0,
            ScheduleKind::VpLinear { beta_min, beta_max } => beta_min + (beta_max - beta_min) * tau,
        }
    }

    fn integrated_beta(&self, tau: f64) -> f64 {
        match self.kind {
            ScheduleKind::VeGeometric { .. } => 0.0,
            ScheduleKind::VpLinear { beta_min, beta_max } => {
                beta_min * tau + 0.5 * (beta_max - beta_min) * tau * tau
            }
        }
    }

    /// Forward drift `f(x)` at noising time `tau` and its divergence.
    pub fn drift_at(&self, x: &[f64], tau: f64) -> Result<(Vec<f64>, f64)> {
        check_time(tau)?;
        check_len(self.dim, x.len())?;
        let mut out = vec![0.0; self.dim];
        let div = self.drift_into(x, tau, &mut out);
        Ok((out, div))
    }

    /// Writes `f(x)` into `out`, returns the (x-independent) divergence.
    pub(crate) fn drift_into(&self, x: &[f64], tau: f64, out: &mut [f64]) -> f64 {
        let b = self.beta_hat(tau);
        if b == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return 0.0;
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -0.5 * b * xi;
        }
        self.divergence(tau)
    }

    pub fn divergence(&self, tau: f64) -> f64 {
        -0.5 * self.dim as f64 * self.beta_hat(tau)
    }

    /// `(alpha, sigma^2)` of the VP marginal `N(alpha x0, sigma^2 I)`.
    pub fn vp_marginal_params(&self, tau: f64) -> Result<(f64, f64)> {
        check_time(tau)?;
        if !self.is_vp() {
            return Err(FkcError::UnsupportedKind(
                "vp_marginal_params requires a VP schedule",
            ));
        }
        Ok(self.marginal(tau))
    }

    /// Variance accumulated by the noising process up to `tau` (VE:
    /// `int_0^tau sigma(s)^2 ds`; VP: `1 - alpha^2`).
    pub fn accumulated_variance(&self, tau: f64) -> Result<f64> {
        check_time(tau)?;
        Ok(self.marginal(tau).1)
    }

    /// Mean scale and added noise variance of the transition kernel from data
    /// to noising time `tau`.
    pub(crate) fn marginal(&self, tau: f64) -> (f64, f64) {
        match self.kind {
            ScheduleKind::VeGeometric {
                sigma_min,
                sigma_max,
            } => {
                let log_ratio = (sigma_max / sigma_min).ln();
                let var =
                    sigma_min * sigma_min / (2.0 * log_ratio) * (2.0 * tau * log_ratio).exp_m1();
                (1.0, var)
            }
            ScheduleKind::VpLinear { .. } => {
                let b = self.integrated_beta(tau);
                ((-0.5 * b).exp(), -(-b).exp_m1())
            }
        }
    }

    /// Variance of the isotropic Gaussian the generation process starts from.
    pub fn reference_variance(&self) -> f64 {
        self.marginal(1.0).1
    }

    /// Diffusion coefficient at generation time `t`.
    pub fn gen_sigma(&self, t: f64) -> f64 {
        self.sigma(1.0 - t)
    }

    /// Forward drift at generation time `t` (the `f_t` appearing as `-f_t` in the
    /// denoising drift); returns its divergence.
    pub fn gen_drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> f64 {
        self.drift_into(x, 1.0 - t, out)
    }

    pub fn gen_divergence(&self, t: f64) -> f64 {
        self.divergence(1.0 - t)
    }

    pub fn gen_marginal(&self, t: f64) -> (f64, f64) {
        self.marginal(1.0 - t)
    }
}
