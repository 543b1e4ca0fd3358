//! Weighted SDEs for composed targets, the per-term conversion rules they are
//! built from, and a finite-difference residual check against a density path.

mod builders;
mod conversion;
mod residual;

pub use builders::{
    build_annealed, build_geometric, build_poe_cfg, build_product, build_reward_tilted,
    build_weighted_product, AnnealSpec, FkcSde, Target,
};
pub use conversion::{conversion_weight, ConversionInputs, ConversionRule, SimulatedTerm};
pub use residual::{pde_residual, pde_residual_for, Lattice, ResidualReport};

use serde::{Deserialize, Serialize};

use crate::error::{FkcError, Result};
use crate::schedule::NoiseSchedule;

/// A drift / diffusion / weight-rate triple simulated by the particle engine,
/// in generation time.
pub trait WeightedSde: Send + Sync {
    fn dim(&self) -> usize;

    fn schedule(&self) -> &NoiseSchedule;

    /// `zeta * sigma_t`, the coefficient in front of `dW`.
    fn diffusion_scale(&self, t: f64) -> f64;

    /// Writes the drift into `drift` and returns the un-centered weight rate `g_t(x)`.
    fn evaluate(&self, x: &[f64], t: f64, drift: &mut [f64]) -> f64;

    /// Unnormalized log-density of the intermediate target, when analytic.
    fn target_log_density(&self, _x: &[f64], _t: f64) -> Option<f64> {
        None
    }

    /// Power of the reference Gaussian appearing in the target at time `t`;
    /// the engine starts particles from that Gaussian raised to this power.
    fn initial_exponent(&self, _t: f64) -> f64 {
        1.0
    }

    fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate(x, t, &mut out);
        out
    }

    fn weight_rate(&self, x: &[f64], t: f64) -> f64 {
        let mut out = vec![0.0; self.dim()];
        self.evaluate(x, t, &mut out)
    }
}

/// Inverse temperature as a function of generation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSchedule {
    Constant(f64),
    /// `beta_t = at0 + (at1 - at0) t`.
    Linear {
        at0: f64,
        at1: f64,
    },
}

impl From<f64> for BetaSchedule {
    fn from(b: f64) -> Self {
        BetaSchedule::Constant(b)
    }
}

impl BetaSchedule {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            BetaSchedule::Constant(b) => b,
            BetaSchedule::Linear { at0, at1 } => at0 + (at1 - at0) * t,
        }
    }

    pub fn derivative(&self, _t: f64) -> f64 {
        match *self {
            BetaSchedule::Constant(_) => 0.0,
            BetaSchedule::Linear { at0, at1 } => at1 - at0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.derivative(0.0) == 0.0
    }

    /// Extreme values over `[0, 1]`.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.value(0.0), self.value(1.0));
        (a.min(b), a.max(b))
    }

    fn check_finite(&self) -> Result<()> {
        let (lo, hi) = self.range();
        if lo.is_finite() && hi.is_finite() {
            Ok(())
        } else {
            Err(FkcError::Parameter(format!(
                "non-finite beta schedule {self:?}"
            )))
        }
    }
}

/// A differentiable reward `r(x)` for reward-tilted targets.
pub trait Reward: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
}

/// `r(x) = -scale / 2 * |x - center|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticReward {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Reward for QuadraticReward {
    fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        -0.5 * self.scale * sq
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = -self.scale * (a - c);
        }
    }
}

/// `r(x) = <direction, x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReward {
    pub direction: Vec<f64>,
}

impl Reward for LinearReward {
    fn value(&self, x: &[f64]) -> f64 {
        crate::math::dot(&self.direction, x)
    }

    fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.direction);
    }
}
