//! Analytic score oracles and test energies.

mod diffused;
mod lj;
mod mixture;

pub use diffused::DiffusedGaussianMixture;
pub use lj::LennardJonesSystem;
pub use mixture::{gmm_integer_power, power_product, GaussianMixture};

pub(crate) use mixture::log_normal_iso;

use crate::schedule::NoiseSchedule;

/// What a score model can evaluate beyond its score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub log_density: bool,
    pub laplacian: bool,
}

/// Marginals `q_t` of a diffusion model under a reference schedule, in generation time.
pub trait ScoreModel: Send + Sync {
    fn dim(&self) -> usize;

    fn schedule(&self) -> &NoiseSchedule;

    fn capabilities(&self) -> Capabilities;

    /// Writes `grad log q_t(x)` into `out`.
    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, t, &mut out);
        out
    }

    /// Writes the score and returns `log q_t(x)` in one pass; `None` without the capability.
    fn score_and_log_density(&self, x: &[f64], t: f64, out: &mut [f64]) -> Option<f64> {
        self.score_into(x, t, out);
        self.log_density(x, t)
    }

    fn log_density(&self, _x: &[f64], _t: f64) -> Option<f64> {
        None
    }

    fn laplacian_log_density(&self, _x: &[f64], _t: f64) -> Option<f64> {
        None
    }
}
