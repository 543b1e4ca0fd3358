use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::ParticleEnsemble;
use crate::error::{FkcError, Result};
use crate::math::softmax;

/// Normalized weights; degenerate-ensemble error when every entry is `-inf`.
pub fn normalized_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    if log_w.is_empty() {
        return Err(FkcError::Empty("log-weights"));
    }
    softmax(log_w).ok_or(FkcError::DegenerateEnsemble)
}

/// Effective sample size `(sum w)^2 / sum w^2`, in `[1, K]`.
pub fn ess(log_w: &[f64]) -> Result<f64> {
    let w = normalized_weights(log_w)?;
    Ok(1.0 / w.iter().map(|x| x * x).sum::<f64>())
}

/// Systematic resampling: `K` parent indices from one uniform draw.
pub fn systematic_resample<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let u: f64 = rng.random();
    systematic_resample_with_offset(log_w, u)
}

/// Systematic resampling with the offset fixed: the `i`-th pointer sits at
/// `(i + u) / K` for `u` in `[0, 1)`.
pub fn systematic_resample_with_offset(log_w: &[f64], u: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&u) {
        return Err(FkcError::Domain(format!("offset {u} outside [0, 1)")));
    }
    let w = normalized_weights(log_w)?;
    let k = w.len();
    let mut out = Vec::with_capacity(k);
    let mut cum = w[0];
    let mut j = 0;
    for i in 0..k {
        let p = (i as f64 + u) / k as f64;
        while p >= cum && j + 1 < k {
            j += 1;
            cum += w[j];
        }
        // skip zero-weight tail entries that rounding could otherwise land on
        while w[j] == 0.0 && j > 0 {
            j -= 1;
        }
        out.push(j);
    }
    Ok(out)
}

fn categorical<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().unwrap();
    let u = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Rates of the jump process for one step: `lambda_k = (g_k - g_bar)^-` and the
/// cumulative destination masses `(g_j - g_bar)^+ w_j`.
fn jump_rates(g: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let gbar: f64 = g.iter().zip(weights).map(|(a, w)| a * w).sum();
    let lambda: Vec<f64> = g.iter().map(|a| (gbar - a).max(0.0)).collect();
    let mut acc = 0.0;
    let cum: Vec<f64> = g
        .iter()
        .zip(weights)
        .map(|(a, w)| {
            acc += (a - gbar).max(0.0) * w;
            acc
        })
        .collect();
    (lambda, cum, acc)
}

fn copy_particle(ens: &mut ParticleEnsemble, snapshot: &[f64], from: usize, to: usize) {
    let d = ens.dim;
    ens.positions[to * d..(to + 1) * d].copy_from_slice(&snapshot[from * d..(from + 1) * d]);
}

/// One jump-process step replacing reweighting over `dt`. Each particle leaves
/// with probability `lambda_k dt` and lands on particle `j` with probability
/// proportional to `(g_j - g_bar)^+`; rates are copied with the state. Steps
/// with `max lambda dt > 1` are split. Log-weights are equalized afterwards.
/// Returns the number of jumps.
pub fn jump_resample_step(ens: &mut ParticleEnsemble, g: &mut [f64], dt: f64) -> Result<usize> {
    let k = ens.len();
    if g.len() != k {
        return Err(FkcError::Shape {
            expected: k,
            got: g.len(),
        });
    }
    let weights = normalized_weights(&ens.log_weights)?;
    let (lambda, _, _) = jump_rates(g, &weights);
    let max_rate = lambda.iter().copied().fold(0.0, f64::max);
    let n_sub = (max_rate * dt).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;
    let mut jumps = 0;
    for _ in 0..n_sub {
        let (lambda, cum, mass) = jump_rates(g, &weights);
        if mass <= 0.0 {
            assert!(
                lambda.iter().all(|&l| l == 0.0),
                "positive leave rate with zero destination mass"
            );
            break;
        }
        let snapshot = ens.positions.clone();
        let g_snap = g.to_vec();
        for i in 0..k {
            let rng = &mut ens.rngs[i];
            if rng.random::<f64>() < lambda[i] * h {
                let j = categorical(&cum, rng);
                copy_particle(ens, &snapshot, j, i);
                g[i] = g_snap[j];
                jumps += 1;
            }
        }
    }
    ens.log_weights.iter_mut().for_each(|w| *w = 0.0);
    Ok(jumps)
}

/// Birth-death step driven by exponential clocks: every particle accumulates
/// `lambda_k dt` and, once it passes its Exp(1) threshold, redraws its state
/// from the same destination law as [`jump_resample_step`] and restarts its
/// clock. Returns the indices that fired.
pub fn bdc_clocks_step(ens: &mut ParticleEnsemble, g: &mut [f64], dt: f64) -> Result<Vec<usize>> {
    let k = ens.len();
    if g.len() != k {
        return Err(FkcError::Shape {
            expected: k,
            got: g.len(),
        });
    }
    ens.ensure_clocks();
    let weights = normalized_weights(&ens.log_weights)?;
    let (lambda, cum, mass) = jump_rates(g, &weights);
    let snapshot = ens.positions.clone();
    let g_snap = g.to_vec();
    let mut fired = Vec::new();
    for i in 0..k {
        ens.clock_accum[i] += lambda[i] * dt;
        if ens.clock_accum[i] >= ens.clock_threshold[i] {
            let rng = &mut ens.rngs[i];
            if mass > 0.0 {
                let j = categorical(&cum, rng);
                copy_particle(ens, &snapshot, j, i);
                g[i] = g_snap[j];
            }
            let rng = &mut ens.rngs[i];
            ens.clock_accum[i] = 0.0;
            ens.clock_threshold[i] = Exp1.sample(rng);
            fired.push(i);
        }
    }
    ens.log_weights.iter_mut().for_each(|w| *w = 0.0);
    Ok(fired)
}
