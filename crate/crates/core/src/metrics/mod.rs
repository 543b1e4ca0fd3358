//! Distances between a (possibly weighted) sample set and reference samples.

mod grid;
mod mmd;
mod transport;

pub use grid::{histogram_2d, total_variation_grid, GridSpec};
pub use mmd::{default_scales, mmd_rbf, MmdEstimator};
pub use transport::{
    distance_w2_pairwise, energy_distance, hungarian, wasserstein_1d, wasserstein_2d, W2dMethod,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::ParticleEnsemble;
use crate::error::{FkcError, Result};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// `N` points in `d` dimensions with probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    uniform: bool,
}

impl SampleSet {
    /// Uniformly weighted points, row-major `N x dim`.
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return Err(FkcError::Empty("sample set"));
        }
        if points.len() % dim != 0 {
            return Err(FkcError::Shape {
                expected: points.len() / dim * dim,
                got: points.len(),
            });
        }
        let n = points.len() / dim;
        Ok(Self {
            dim,
            points,
            weights: vec![1.0 / n as f64; n],
            uniform: true,
        })
    }

    /// Weights must be nonnegative and sum to one within `1e-9`.
    pub fn weighted(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(points, dim)?;
        crate::error::check_len(s.len(), weights.len())?;
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(FkcError::Parameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(FkcError::Parameter(format!(
                "weights sum to {total}, not 1"
            )));
        }
        s.uniform = weights.windows(2).all(|w| w[0] == w[1]);
        s.weights = weights;
        Ok(s)
    }

    /// Particles weighted by the softmax of their log-weights.
    pub fn from_ensemble(ens: &ParticleEnsemble) -> Result<Self> {
        Self::weighted(ens.positions.clone(), ens.dim(), ens.weights()?)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Every coordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.points.iter_mut().for_each(|x| *x *= c);
        s
    }

    /// Rows selected by index, reweighted uniformly.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            pts.extend_from_slice(self.point(i));
        }
        Self::new(pts, self.dim)
    }

    /// `m` uniform points: a seeded subsample without replacement when the
    /// weights are uniform, systematic resampling otherwise.
    pub fn reduce<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(FkcError::Empty("subsample"));
        }
        if self.uniform {
            if m >= self.len() {
                return Ok(self.clone());
            }
            let idx = rand::seq::index::sample(rng, self.len(), m).into_vec();
            return self.select(&idx);
        }
        let u: f64 = rng.random();
        let mut idx = Vec::with_capacity(m);
        let mut cum = self.weights[0];
        let mut j = 0;
        for i in 0..m {
            let p = (i as f64 + u) / m as f64;
            while p >= cum && j + 1 < self.len() {
                j += 1;
                cum += self.weights[j];
            }
            while self.weights[j] == 0.0 && j > 0 {
                j -= 1;
            }
            idx.push(j);
        }
        self.select(&idx)
    }
}

/// One metric value as written to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub params: serde_json::Value,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn weights_validated() {
        assert!(SampleSet::weighted(vec![0.0, 1.0], 1, vec![0.5, 0.4]).is_err());
        assert!(SampleSet::weighted(vec![0.0, 1.0], 1, vec![1.5, -0.5]).is_err());
        assert!(SampleSet::new(vec![], 1).is_err());
        assert!(SampleSet::new(vec![1.0; 3], 2).is_err());
        let s = SampleSet::weighted(vec![0.0, 1.0], 1, vec![0.5, 0.5]).unwrap();
        assert!(s.is_uniform());
    }

    #[test]
    fn reduce_weighted_follows_weights() {
        let s = SampleSet::weighted(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let r = s.reduce(10, &mut rng).unwrap();
        let ones = r.points().iter().filter(|&&x| x == 1.0).count();
        assert_eq!(ones, 5);
        assert!(r.points().iter().all(|&x| x == 1.0 || x == 3.0));
    }
}
