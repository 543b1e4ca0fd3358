use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, FkcError, Result};
use crate::math::log_sum_exp;

/// Isotropic Gaussian mixture `sum_k w_k N(mu_k, v_k I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    /// Row-major `K x dim`.
    means: Vec<f64>,
    variances: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MixtureRepr {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl TryFrom<MixtureRepr> for GaussianMixture {
    type Error = FkcError;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        GaussianMixture::new(r.weights, r.means, r.variances)
    }
}

impl From<GaussianMixture> for MixtureRepr {
    fn from(g: GaussianMixture) -> Self {
        MixtureRepr {
            means: g.means.chunks(g.dim).map(<[f64]>::to_vec).collect(),
            weights: g.weights,
            variances: g.variances,
        }
    }
}

/// Tolerance on the input weight sum; accepted inputs are renormalized exactly.
const WEIGHT_SUM_TOL: f64 = 1e-9;

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(FkcError::Empty("mixture needs at least one component"));
        }
        check_len(k, means.len())?;
        check_len(k, variances.len())?;
        let dim = means[0].len();
        if dim == 0 {
            return Err(FkcError::Parameter(
                "mixture dimension must be positive".into(),
            ));
        }
        let mut flat = Vec::with_capacity(k * dim);
        for m in &means {
            check_len(dim, m.len())?;
            flat.extend_from_slice(m);
        }
        Self::from_flat(dim, weights, flat, variances)
    }

    fn from_flat(
        dim: usize,
        mut weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FkcError::Parameter(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(FkcError::Parameter(format!(
                "mixture weights sum to {sum}, not 1"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FkcError::Parameter(
                "component variances must be positive".into(),
            ));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(FkcError::Parameter("component means must be finite".into()));
        }
        Ok(Self {
            dim,
            weights,
            means,
            variances,
        })
    }

    /// Builds a mixture from unnormalized log-weights.
    fn from_log_weights(
        dim: usize,
        log_w: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        let lse = log_sum_exp(&log_w);
        if !lse.is_finite() {
            return Err(FkcError::Parameter(
                "mixture has no component with positive weight".into(),
            ));
        }
        let mut weights: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Self::from_flat(dim, weights, means, variances)
    }

    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    /// The 2D 40-mode benchmark: modes uniform on `[-40, 40]^2`, equal weights,
    /// isotropic `component_variance`.
    pub fn gmm40(seed: u64, component_variance: f64) -> Result<Self> {
        Self::random_modes(40, 2, 40.0, component_variance, seed)
    }

    pub fn random_modes(
        n_modes: usize,
        dim: usize,
        half_width: f64,
        variance: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = (0..n_modes * dim)
            .map(|_| rng.random_range(-half_width..half_width))
            .collect();
        Self::from_flat(
            dim,
            vec![1.0 / n_modes as f64; n_modes],
            means,
            vec![variance; n_modes],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn means(&self) -> impl Iterator<Item = &[f64]> {
        self.means.chunks(self.dim)
    }

    /// Log-density of the mixture, evaluated with log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_len(self.dim, x.len())?;
        let terms: Vec<f64> = (0..self.n_components())
            .map(|k| self.weights[k].ln() + log_normal_iso(x, self.mean(k), self.variances[k]))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Draws `n` i.i.d. samples, returned row-major (`n x dim`).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(FkcError::Empty("sample count must be positive"));
        }
        let index = WeightedIndex::new(&self.weights)
            .map_err(|e| FkcError::Parameter(format!("mixture weights: {e}")))?;
        let mut out = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let k = index.sample(rng);
            let sd = self.variances[k].sqrt();
            for &m in self.mean(k) {
                let z: f64 = rng.sample(StandardNormal);
                out.push(m + sd * z);
            }
        }
        Ok(out)
    }

    /// Exact mixture proportional to the pointwise product `self(x) * other(x)`.
    pub fn product(&self, other: &GaussianMixture) -> Result<GaussianMixture> {
        check_len(self.dim, other.dim)?;
        let d = self.dim;
        let n = self.n_components() * other.n_components();
        let mut log_w = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n * d);
        let mut variances = Vec::with_capacity(n);
        for i in 0..self.n_components() {
            for j in 0..other.n_components() {
                let (va, vb) = (self.variances[i], other.variances[j]);
                let (ma, mb) = (self.mean(i), other.mean(j));
                // N(x; a, va) N(x; b, vb) = N(a; b, va + vb) N(x; m, v)
                let v = va * vb / (va + vb);
                means.extend(
                    ma.iter()
                        .zip(mb)
                        .map(|(a, b)| (a * vb + b * va) / (va + vb)),
                );
                variances.push(v);
                log_w.push(
                    self.weights[i].ln() + other.weights[j].ln() + log_normal_iso(ma, mb, va + vb),
                );
            }
        }
        Self::from_log_weights(d, log_w, means, variances)
    }

    /// Mixture proportional to `self(x) * N(x; center, variance I)`.
    pub fn tilt_gaussian(&self, center: &[f64], variance: f64) -> Result<GaussianMixture> {
        let g = Self::gaussian(center.to_vec(), variance)?;
        self.product(&g)
    }
}

/// Number of components of `prod_i g_i^{p_i}` before any pruning.
fn power_product_size(factors: &[(&GaussianMixture, u32)]) -> u128 {
    factors
        .iter()
        .map(|(g, p)| (g.n_components() as u128).saturating_pow(*p))
        .fold(1u128, |a, b| a.saturating_mul(b))
}

/// Exact mixture proportional to `g(x)^beta` for integer `beta >= 1`: one component per
/// multi-index, so `K^beta` components. Fails when that count exceeds `cap`.
pub fn gmm_integer_power(g: &GaussianMixture, beta: u32, cap: usize) -> Result<GaussianMixture> {
    if beta == 0 {
        return Err(FkcError::Parameter(
            "integer power must be at least 1".into(),
        ));
    }
    power_product(&[(g, beta)], cap)
}

/// Exact mixture proportional to `prod_i g_i(x)^{p_i}` (nonnegative integer powers, not all zero).
pub fn power_product(factors: &[(&GaussianMixture, u32)], cap: usize) -> Result<GaussianMixture> {
    let requested = power_product_size(factors);
    if requested > cap as u128 {
        return Err(FkcError::Capacity { requested, cap });
    }
    let mut acc: Option<GaussianMixture> = None;
    for (g, p) in factors {
        for _ in 0..*p {
            acc = Some(match acc {
                None => (*g).clone(),
                Some(a) => a.product(g)?,
            });
        }
    }
    acc.ok_or_else(|| FkcError::Parameter("power product needs a positive exponent".into()))
}

pub(crate) fn log_normal_iso(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * d * (2.0 * PI * var).ln() - 0.5 * sq / var
}
