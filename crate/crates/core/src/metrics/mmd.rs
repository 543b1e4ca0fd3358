use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{FkcError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    /// Self-similarity sums exclude the diagonal.
    #[default]
    Unbiased,
    Biased,
}

fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn kernel_sum(d2: f64, inv_two_var: &[f64]) -> f64 {
    inv_two_var.iter().map(|c| (-d2 * c).exp()).sum()
}

/// `sum_{i != j} w_i w_j k(x_i, x_j)`, plus the diagonal when `diagonal`.
/// Row sums are added in index order so the result ignores the thread count.
fn self_term(s: &SampleSet, inv: &[f64], diagonal: bool) -> f64 {
    let w = s.weights();
    let off: f64 = (0..s.len())
        .into_par_iter()
        .map(|i| {
            let xi = s.point(i);
            (i + 1..s.len())
                .map(|j| w[j] * kernel_sum(dist_sq(xi, s.point(j)), inv))
                .sum::<f64>()
                * w[i]
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * 2.0;
    if diagonal {
        off + w.iter().map(|x| x * x).sum::<f64>() * inv.len() as f64
    } else {
        off
    }
}

fn cross_term(a: &SampleSet, b: &SampleSet, inv: &[f64]) -> f64 {
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let xi = a.point(i);
            (0..b.len())
                .map(|j| b.weights()[j] * kernel_sum(dist_sq(xi, b.point(j)), inv))
                .sum::<f64>()
                * a.weights()[i]
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Multi-scale RBF MMD, `sqrt(max(0, sum_s MMD_s^2))`, with kernels
/// `exp(-|x - y|^2 / (2 s^2))`. The unbiased form divides the weighted
/// off-diagonal self-similarity by `1 - sum w_i^2`.
pub fn mmd_rbf(
    a: &SampleSet,
    b: &SampleSet,
    scales: &[f64],
    estimator: MmdEstimator,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(FkcError::Shape {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(FkcError::Parameter(format!(
            "bandwidths {scales:?} must be positive"
        )));
    }
    let inv: Vec<f64> = scales.iter().map(|s| 0.5 / (s * s)).collect();
    let self_part = |s: &SampleSet| -> Result<f64> {
        match estimator {
            MmdEstimator::Biased => Ok(self_term(s, &inv, true)),
            MmdEstimator::Unbiased => {
                if s.len() < 2 {
                    return Err(FkcError::Parameter(
                        "unbiased MMD needs at least two samples per set".into(),
                    ));
                }
                let norm = 1.0 - s.weights().iter().map(|x| x * x).sum::<f64>();
                if norm <= 1e-12 {
                    return Err(FkcError::Parameter(
                        "unbiased MMD needs more than one sample with weight".into(),
                    ));
                }
                Ok(self_term(s, &inv, false) / norm)
            }
        }
    };
    let (xx, yy, xy) = (self_part(a)?, self_part(b)?, cross_term(a, b, &inv));
    let mmd2 = xx + yy - 2.0 * xy;
    // below this the difference is cancellation round-off
    let floor = 64.0 * f64::EPSILON * (xx.abs() + yy.abs() + 2.0 * xy.abs());
    Ok(if mmd2 <= floor { 0.0 } else { mmd2.sqrt() })
}

/// `{0.5, 1, 2, 4, 8}` times the median distance between pooled points (at
/// most 1000 points, taken with an even stride).
pub fn default_scales(a: &SampleSet, b: &SampleSet) -> Result<Vec<f64>> {
    const MAX_POINTS: usize = 1000;
    let pooled: Vec<&[f64]> = (0..a.len())
        .map(|i| a.point(i))
        .chain((0..b.len()).map(|i| b.point(i)))
        .collect();
    let stride = pooled.len().div_ceil(MAX_POINTS);
    let pts: Vec<&[f64]> = pooled.into_iter().step_by(stride).collect();
    let mut d: Vec<f64> = (0..pts.len())
        .flat_map(|i| (i + 1..pts.len()).map(move |j| (i, j)))
        .map(|(i, j)| dist_sq(pts[i], pts[j]).sqrt())
        .collect();
    if d.is_empty() {
        return Err(FkcError::Empty("pairs for the median heuristic"));
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if !(m > 0.0) {
        return Err(FkcError::Domain("median pairwise distance is zero".into()));
    }
    Ok([0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|c| c * m).collect())
}
