use crate::error::{check_len, FkcError, Result};

/// Lennard-Jones cluster with a harmonic restraint towards the center of mass.
///
/// Energy, with `d_ij` the distance between particles `i != j` (ordered pairs):
/// `E = eps / (2 tau) * sum_ij ((r_m/d_ij)^12 - (r_m/d_ij)^6) + c/2 * sum_i |x_i - x_com|^2`.
/// The pair term is repulsive at short range, so collisions carry large energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LennardJonesSystem {
    pub n_particles: usize,
    pub spatial_dim: usize,
    pub r_m: f64,
    pub tau: f64,
    pub eps: f64,
    pub c: f64,
}

const MIN_DISTANCE: f64 = 1e-9;

impl Default for LennardJonesSystem {
    fn default() -> Self {
        Self::lj13()
    }
}

impl LennardJonesSystem {
    pub fn lj13() -> Self {
        Self::with_particles(13)
    }

    pub fn with_particles(n_particles: usize) -> Self {
        Self {
            n_particles,
            spatial_dim: 3,
            r_m: 1.0,
            tau: 1.0,
            eps: 2.0,
            c: 1.0,
        }
    }

    pub fn n_coordinates(&self) -> usize {
        self.n_particles * self.spatial_dim
    }

    fn particle<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[i * self.spatial_dim..(i + 1) * self.spatial_dim]
    }

    fn center_of_mass(&self, x: &[f64]) -> Vec<f64> {
        let mut com = vec![0.0; self.spatial_dim];
        for i in 0..self.n_particles {
            for (c, xi) in com.iter_mut().zip(self.particle(x, i)) {
                *c += xi;
            }
        }
        com.iter_mut().for_each(|c| *c /= self.n_particles as f64);
        com
    }

    fn distance(&self, x: &[f64], i: usize, j: usize) -> Result<f64> {
        let d = self
            .particle(x, i)
            .iter()
            .zip(self.particle(x, j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d < MIN_DISTANCE {
            return Err(FkcError::Singularity(format!(
                "particles {i} and {j} coincide (distance {d:e})"
            )));
        }
        Ok(d)
    }

    /// All `n (n - 1) / 2` unordered pairwise distances, `i < j` order.
    pub fn pairwise_distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_coordinates(), x.len())?;
        let mut out = Vec::with_capacity(self.n_particles * (self.n_particles - 1) / 2);
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                out.push(self.distance(x, i, j)?);
            }
        }
        Ok(out)
    }

    /// Lennard-Jones part only.
    pub fn pair_energy(&self, x: &[f64]) -> Result<f64> {
        let mut e = 0.0;
        for d in self.pairwise_distances(x)? {
            let r6 = (self.r_m / d).powi(6);
            e += r6 * r6 - r6;
        }
        // ordered-pair sum is twice the unordered one
        Ok(self.eps / self.tau * e)
    }

    pub fn harmonic_energy(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_coordinates(), x.len())?;
        let com = self.center_of_mass(x);
        let mut e = 0.0;
        for i in 0..self.n_particles {
            e += self
                .particle(x, i)
                .iter()
                .zip(&com)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>();
        }
        Ok(0.5 * e)
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(self.pair_energy(x)? + self.c * self.harmonic_energy(x)?)
    }

    pub fn energy_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_coordinates(), x.len())?;
        let sd = self.spatial_dim;
        let mut grad = vec![0.0; x.len()];
        for i in 0..self.n_particles {
            for j in i + 1..self.n_particles {
                let d = self.distance(x, i, j)?;
                let r6 = (self.r_m / d).powi(6);
                // dE/dd for the unordered pair (weight eps/tau)
                let de_dd = self.eps / self.tau * (-12.0 * r6 * r6 + 6.0 * r6) / d;
                for k in 0..sd {
                    let u = (x[i * sd + k] - x[j * sd + k]) / d;
                    grad[i * sd + k] += de_dd * u;
                    grad[j * sd + k] -= de_dd * u;
                }
            }
        }
        let com = self.center_of_mass(x);
        for i in 0..self.n_particles {
            for k in 0..sd {
                grad[i * sd + k] += self.c * (x[i * sd + k] - com[k]);
            }
        }
        Ok(grad)
    }
}
