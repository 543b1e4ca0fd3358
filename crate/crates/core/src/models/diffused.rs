use std::f64::consts::PI;

use super::{Capabilities, GaussianMixture, ScoreModel};
use crate::error::{check_len, FkcError, Result};
use crate::schedule::NoiseSchedule;

/// A Gaussian mixture pushed through the reference noising process.
///
/// At generation time `t` every component `N(mu_k, v_k)` becomes
/// `N(c mu_k, c^2 v_k + s^2)` where `(c, s^2)` is the schedule's transition
/// kernel at noising time `1 - t` (VE: `c = 1`, `s^2 = sigma_bar^2`; VP:
/// `c = alpha`, `s^2 = 1 - alpha^2`). All quantities are responsibility-weighted
/// closed forms evaluated with a streaming log-sum-exp, so no allocation happens
/// on the hot path.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusedGaussianMixture {
    mixture: GaussianMixture,
    schedule: NoiseSchedule,
}

struct Eval {
    log_q: f64,
    /// `Delta q / q`, only accumulated on request.
    lap_ratio: f64,
}

impl DiffusedGaussianMixture {
    pub fn new(mixture: GaussianMixture, schedule: NoiseSchedule) -> Result<Self> {
        check_len(schedule.dim, mixture.dim())?;
        Ok(Self { mixture, schedule })
    }

    /// Single diffused Gaussian `N(mean, variance I)` at data time.
    pub fn gaussian(mean: Vec<f64>, variance: f64, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(GaussianMixture::gaussian(mean, variance)?, schedule)
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    /// The mixture describing `q_t` exactly.
    pub fn marginal_mixture(&self, t: f64) -> Result<GaussianMixture> {
        if !(0.0..=1.0).contains(&t) {
            return Err(FkcError::Domain(format!("time {t} outside [0, 1]")));
        }
        let (c, s2) = self.schedule.gen_marginal(t);
        GaussianMixture::new(
            self.mixture.weights().to_vec(),
            self.mixture
                .means()
                .map(|m| m.iter().map(|x| c * x).collect())
                .collect(),
            self.mixture
                .variances()
                .iter()
                .map(|v| c * c * v + s2)
                .collect(),
        )
    }

    fn eval(&self, x: &[f64], t: f64, mut score: Option<&mut [f64]>, want_lap: bool) -> Eval {
        let d = self.mixture.dim();
        let (c, s2) = self.schedule.gen_marginal(t);
        let mut m = f64::NEG_INFINITY;
        let mut total = 0.0;
        let mut lap = 0.0;
        if let Some(out) = score.as_deref_mut() {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        for (k, (&w, &v)) in self
            .mixture
            .weights()
            .iter()
            .zip(self.mixture.variances())
            .enumerate()
        {
            if w == 0.0 {
                continue;
            }
            let var = c * c * v + s2;
            let mean = self.mixture.mean(k);
            let sq: f64 = mean
                .iter()
                .zip(x)
                .map(|(mu, xi)| (c * mu - xi).powi(2))
                .sum();
            let l = w.ln() - 0.5 * d as f64 * (2.0 * PI * var).ln() - 0.5 * sq / var;
            if l > m {
                let scale = if m == f64::NEG_INFINITY {
                    0.0
                } else {
                    (m - l).exp()
                };
                total *= scale;
                lap *= scale;
                if let Some(out) = score.as_deref_mut() {
                    out.iter_mut().for_each(|o| *o *= scale);
                }
                m = l;
            }
            let e = (l - m).exp();
            total += e;
            if let Some(out) = score.as_deref_mut() {
                for ((o, mu), xi) in out.iter_mut().zip(mean).zip(x) {
                    *o += e * (c * mu - xi) / var;
                }
            }
            if want_lap {
                lap += e * (sq / (var * var) - d as f64 / var);
            }
        }
        if let Some(out) = score {
            out.iter_mut().for_each(|o| *o /= total);
        }
        Eval {
            log_q: m + total.ln(),
            lap_ratio: lap / total,
        }
    }
}

impl ScoreModel for DiffusedGaussianMixture {
    fn dim(&self) -> usize {
        self.mixture.dim()
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            log_density: true,
            laplacian: true,
        }
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.eval(x, t, Some(out), false);
    }

    fn score_and_log_density(&self, x: &[f64], t: f64, out: &mut [f64]) -> Option<f64> {
        Some(self.eval(x, t, Some(out), false).log_q)
    }

    fn log_density(&self, x: &[f64], t: f64) -> Option<f64> {
        Some(self.eval(x, t, None, false).log_q)
    }

    fn laplacian_log_density(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut s = vec![0.0; self.dim()];
        let e = self.eval(x, t, Some(&mut s), true);
        Some(e.lap_ratio - s.iter().map(|v| v * v).sum::<f64>())
    }
}
