use super::WeightedSde;
use crate::error::{FkcError, Result};
use crate::math::log_sum_exp;

/// Regular grid with spacing `h` in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    lo: Vec<f64>,
    n: Vec<usize>,
    h: f64,
}

/// Minimum nodes per axis: the stencil needs interior points with both neighbours.
const MIN_NODES: usize = 5;

impl Lattice {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, h: f64) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(FkcError::Shape {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() || lo.len() > 2 {
            return Err(FkcError::Parameter(format!(
                "lattice must be 1D or 2D, got {}D",
                lo.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FkcError::Parameter(format!(
                "mesh width {h} must be positive"
            )));
        }
        let mut n = Vec::with_capacity(lo.len());
        for (a, b) in lo.iter().zip(&hi) {
            let cells = ((b - a) / h).round();
            if !(cells.is_finite() && cells + 1.0 >= MIN_NODES as f64) {
                return Err(FkcError::Parameter(format!(
                    "grid too coarse: [{a}, {b}] with h = {h} gives fewer than {MIN_NODES} nodes"
                )));
            }
            n.push(cells as usize + 1);
        }
        Ok(Self { lo, n, h })
    }

    pub fn line(lo: f64, hi: f64, h: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi], h)
    }

    pub fn square(lo: f64, hi: f64, h: f64) -> Result<Self> {
        Self::new(vec![lo, lo], vec![hi, hi], h)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn strides(&self) -> Vec<usize> {
        if self.dim() == 1 {
            vec![1]
        } else {
            vec![self.n[1], 1]
        }
    }

    fn multi_index(&self, k: usize) -> Vec<usize> {
        if self.dim() == 1 {
            vec![k]
        } else {
            vec![k / self.n[1], k % self.n[1]]
        }
    }

    /// Coordinates of node `k` (row-major).
    pub fn point(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .zip(&self.lo)
            .map(|(&i, lo)| lo + i as f64 * self.h)
            .collect()
    }

    fn is_interior(&self, k: usize) -> bool {
        self.multi_index(k)
            .iter()
            .zip(&self.n)
            .all(|(&i, &n)| i > 0 && i + 1 < n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Largest `|R|` over interior nodes.
    pub max_abs: f64,
    /// Where it is attained.
    pub argmax: Vec<f64>,
    /// `R` at every node in row-major order; zero on the boundary.
    pub field: Vec<f64>,
    /// Density-weighted mean of the weight rate, the centering constant.
    pub mean_weight: f64,
}

/// Residual of the Feynman-Kac PDE for `sde` against the density path
/// `exp(log_target(x, t))` (unnormalized), in log form:
///
/// `R = d/dt log p - [ -div v - <v, grad log p> + D (lap log p + |grad log p|^2) + g - E_p g ]`
///
/// with `D = (zeta sigma)^2 / 2`, central differences in `t` and `x`, and
/// `log Z` and `E_p g` from grid quadrature.
pub fn pde_residual(
    sde: &dyn WeightedSde,
    log_target: &dyn Fn(&[f64], f64) -> f64,
    lattice: &Lattice,
    t: f64,
    dt: f64,
) -> Result<ResidualReport> {
    let d = lattice.dim();
    if sde.dim() != d {
        return Err(FkcError::Shape {
            expected: sde.dim(),
            got: d,
        });
    }
    if !(dt > 0.0 && t - dt >= 0.0 && t + dt <= 1.0) {
        return Err(FkcError::Domain(format!(
            "stencil [{}, {}] leaves [0, 1]",
            t - dt,
            t + dt
        )));
    }
    let n = lattice.len();
    let points: Vec<Vec<f64>> = (0..n).map(|k| lattice.point(k)).collect();
    let eval = |s: f64| -> Result<Vec<f64>> {
        let v: Vec<f64> = points.iter().map(|x| log_target(x, s)).collect();
        if let Some(k) = v.iter().position(|l| !l.is_finite()) {
            return Err(FkcError::Domain(format!(
                "target log-density not finite at {:?}, t = {s}",
                points[k]
            )));
        }
        Ok(v)
    };
    let log_cell = d as f64 * lattice.h.ln();
    let (lm, l0, lp) = (eval(t - dt)?, eval(t)?, eval(t + dt)?);
    let (zm, zp) = (log_sum_exp(&lm) + log_cell, log_sum_exp(&lp) + log_cell);

    let mut drift = vec![0.0; n * d];
    let mut g = vec![0.0; n];
    for (k, x) in points.iter().enumerate() {
        g[k] = sde.evaluate(x, t, &mut drift[k * d..(k + 1) * d]);
    }
    let lmax = l0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (l, gk) in l0.iter().zip(&g) {
        let w = (l - lmax).exp();
        num += w * gk;
        den += w;
    }
    let mean_g = num / den;
    let diff = 0.5 * sde.diffusion_scale(t).powi(2);

    let h = lattice.h;
    let strides = lattice.strides();
    let mut field = vec![0.0; n];
    let (mut max_abs, mut argmax) = (0.0f64, points[0].clone());
    for k in (0..n).filter(|&k| lattice.is_interior(k)) {
        let dlogp = ((lp[k] - zp) - (lm[k] - zm)) / (2.0 * dt);
        let (mut grad_sq, mut lap, mut div_v, mut v_grad) = (0.0, 0.0, 0.0, 0.0);
        for (a, &st) in strides.iter().enumerate() {
            let (up, dn) = (k + st, k - st);
            let gl = (l0[up] - l0[dn]) / (2.0 * h);
            grad_sq += gl * gl;
            lap += (l0[up] - 2.0 * l0[k] + l0[dn]) / (h * h);
            div_v += (drift[up * d + a] - drift[dn * d + a]) / (2.0 * h);
            v_grad += drift[k * d + a] * gl;
        }
        let rhs = -div_v - v_grad + diff * (lap + grad_sq) + g[k] - mean_g;
        let r = dlogp - rhs;
        if !r.is_finite() {
            return Err(FkcError::Domain(format!(
                "non-finite residual at {:?}",
                points[k]
            )));
        }
        field[k] = r;
        if r.abs() > max_abs {
            max_abs = r.abs();
            argmax = points[k].clone();
        }
    }
    Ok(ResidualReport {
        max_abs,
        argmax,
        field,
        mean_weight: mean_g,
    })
}

/// [`pde_residual`] against the SDE's own analytic target.
pub fn pde_residual_for(
    sde: &dyn WeightedSde,
    lattice: &Lattice,
    t: f64,
    dt: f64,
) -> Result<ResidualReport> {
    if sde.target_log_density(&lattice.point(0), t).is_none() {
        return Err(FkcError::Capability(
            "SDE exposes no target log-density".into(),
        ));
    }
    let target = |x: &[f64], s: f64| sde.target_log_density(x, s).unwrap_or(f64::NAN);
    pde_residual(sde, &target, lattice, t, dt)
}
