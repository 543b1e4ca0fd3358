use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::resample::normalized_weights;
use crate::error::{check_len, FkcError, Result};

/// `K` particles in `d` dimensions with log-weights and one random stream each.
///
/// Stream `k + 1` of the run seed belongs to slot `k`; stream 0 is reserved for
/// ensemble-wide resampling draws. Streams stay with the slot when particles
/// are copied, so results do not depend on how the work is scheduled.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub(crate) dim: usize,
    /// Row-major `K x d`.
    pub positions: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub t: f64,
    pub(crate) rngs: Vec<ChaCha8Rng>,
    pub(crate) resample_rng: ChaCha8Rng,
    pub(crate) clock_threshold: Vec<f64>,
    pub(crate) clock_accum: Vec<f64>,
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || positions.is_empty() {
            return Err(FkcError::Empty("ensemble"));
        }
        if positions.len() % dim != 0 {
            return Err(FkcError::Shape {
                expected: positions.len() / dim * dim,
                got: positions.len(),
            });
        }
        let k = positions.len() / dim;
        Ok(Self {
            dim,
            positions,
            log_weights: vec![0.0; k],
            t: 0.0,
            rngs: (0..k as u64).map(|i| stream(seed, i + 1)).collect(),
            resample_rng: stream(seed, 0),
            clock_threshold: Vec::new(),
            clock_accum: Vec::new(),
        })
    }

    pub fn with_log_weights(mut self, log_weights: Vec<f64>) -> Result<Self> {
        check_len(self.len(), log_weights.len())?;
        self.log_weights = log_weights;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        normalized_weights(&self.log_weights)
    }

    pub fn ess(&self) -> Result<f64> {
        super::resample::ess(&self.log_weights)
    }

    pub fn is_uniform(&self) -> bool {
        self.log_weights.windows(2).all(|w| w[0] == w[1])
    }

    /// Replaces the particles by the given parents and resets the weights.
    pub fn reindex(&mut self, parents: &[usize]) {
        let d = self.dim;
        let old = self.positions.clone();
        for (i, &p) in parents.iter().enumerate() {
            self.positions[i * d..(i + 1) * d].copy_from_slice(&old[p * d..(p + 1) * d]);
        }
        self.log_weights.iter_mut().for_each(|w| *w = 0.0);
    }

    /// Systematic resampling with the ensemble's own resampling stream.
    pub fn resample_systematic(&mut self) -> Result<()> {
        let parents =
            super::resample::systematic_resample(&self.log_weights, &mut self.resample_rng)?;
        self.reindex(&parents);
        Ok(())
    }

    pub(crate) fn ensure_clocks(&mut self) {
        if self.clock_threshold.len() != self.len() {
            self.clock_threshold = self.rngs.iter_mut().map(|r| Exp1.sample(r)).collect();
            self.clock_accum = vec![0.0; self.len()];
        }
    }

    /// Self-normalized estimate of `E[phi]`.
    pub fn snis_expectation<F: Fn(&[f64]) -> f64>(&self, phi: F) -> Result<f64> {
        let w = self.weights()?;
        Ok(w.iter()
            .enumerate()
            .filter(|(_, &wk)| wk > 0.0)
            .map(|(k, wk)| wk * phi(self.particle(k)))
            .sum())
    }

    /// One index drawn with probability `softmax(log_weights)`.
    pub fn snis_select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let w = self.weights()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += wk;
            if u < acc {
                return Ok(k);
            }
        }
        Ok(w.iter().rposition(|&x| x > 0.0).unwrap_or(0))
    }
}
