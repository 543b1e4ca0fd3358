use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{FkcError, Result};

fn check_order(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(FkcError::Parameter(format!(
            "transport order p = {p} must be >= 1"
        )))
    }
}

/// `W_p^p` between two weighted 1D laws given as `(value, weight)` pairs,
/// via the monotone (quantile) coupling.
fn wasserstein_1d_pow(mut a: Vec<(f64, f64)>, mut b: Vec<(f64, f64)>, p: f64) -> f64 {
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    loop {
        let m = ra.min(rb);
        if m > 0.0 {
            cost += m * (a[i].0 - b[j].0).abs().powf(p);
        }
        ra -= m;
        rb -= m;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    cost
}

fn pairs_1d(s: &SampleSet) -> Vec<(f64, f64)> {
    s.points()
        .iter()
        .copied()
        .zip(s.weights().iter().copied())
        .collect()
}

/// Exact `W_p` between one-dimensional sample sets.
pub fn wasserstein_1d(a: &SampleSet, b: &SampleSet, p: f64) -> Result<f64> {
    check_order(p)?;
    for s in [a, b] {
        if s.dim() != 1 {
            return Err(FkcError::Shape {
                expected: 1,
                got: s.dim(),
            });
        }
    }
    Ok(wasserstein_1d_pow(pairs_1d(a), pairs_1d(b), p).powf(1.0 / p))
}

fn energies<F>(s: &SampleSet, energy: &F, max_energy: Option<f64>) -> Result<SampleSet>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let e: Vec<f64> = (0..s.len())
        .into_par_iter()
        .map(|i| energy(s.point(i)))
        .collect();
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| match max_energy {
            Some(cap) => e[i].is_finite() && e[i] <= cap,
            None => true,
        })
        .collect();
    if let Some(i) = keep.iter().find(|&&i| !e[i].is_finite()) {
        return Err(FkcError::Domain(format!(
            "energy of sample {i} is {}",
            e[*i]
        )));
    }
    let mass: f64 = keep.iter().map(|&i| s.weights()[i]).sum();
    if keep.is_empty() || mass <= 0.0 {
        return Err(FkcError::Empty("samples left after the energy filter"));
    }
    let values = keep.iter().map(|&i| e[i]).collect();
    let weights = keep.iter().map(|&i| s.weights()[i] / mass).collect();
    SampleSet::weighted(values, 1, weights)
}

/// `W_p` between the energy distributions of two sample sets. Samples with
/// energy above `max_energy` (or non-finite) are dropped first and the
/// remaining weights renormalized.
pub fn energy_distance<F>(
    a: &SampleSet,
    b: &SampleSet,
    energy: F,
    p: f64,
    max_energy: Option<f64>,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let ea = energies(a, &energy, max_energy)?;
    let eb = energies(b, &energy, max_energy)?;
    wasserstein_1d(&ea, &eb, p)
}

fn pair_distances(s: &SampleSet, spatial_dim: usize) -> Result<Vec<(f64, f64)>> {
    let d = s.dim();
    if d % spatial_dim != 0 || d / spatial_dim < 2 {
        return Err(FkcError::Parameter(format!(
            "row length {d} is not a set of at least two {spatial_dim}-dimensional particles"
        )));
    }
    let n = d / spatial_dim;
    let n_pairs = (n * (n - 1) / 2) as f64;
    Ok((0..s.len())
        .into_par_iter()
        .flat_map_iter(|r| {
            let x = s.point(r);
            let w = s.weights()[r] / n_pairs;
            (0..n).flat_map(move |i| {
                (i + 1..n).map(move |j| {
                    let xi = &x[i * spatial_dim..(i + 1) * spatial_dim];
                    let xj = &x[j * spatial_dim..(j + 1) * spatial_dim];
                    let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2.sqrt(), w)
                })
            })
        })
        .collect())
}

/// `W_2` between the flattened interparticle-distance clouds of two sets of
/// 3D multi-particle configurations.
pub fn distance_w2_pairwise(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    let da = pair_distances(a, 3)?;
    let db = pair_distances(b, 3)?;
    Ok(wasserstein_1d_pow(da, db, 2.0).sqrt())
}

/// Minimum-cost perfect matching on a square cost matrix (row-major `n x n`).
/// Returns the column assigned to each row.
pub fn hungarian(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(FkcError::Shape {
            expected: n * n,
            got: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(FkcError::Domain("assignment cost is not finite".into()));
    }
    // potentials u (rows), v (columns); column 0 is a virtual sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    Ok(assign)
}

/// How [`wasserstein_2d`] solves the transport problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum W2dMethod {
    /// Optimal assignment between equal-size uniform sets. With `subsample`,
    /// both sets are first reduced to that many uniform points (seeded).
    ExactAssignment { subsample: Option<usize>, seed: u64 },
    /// Sliced approximation: mean of `W_p^p` over random 1D projections.
    Sliced { projections: usize, seed: u64 },
}

impl Default for W2dMethod {
    fn default() -> Self {
        W2dMethod::ExactAssignment {
            subsample: Some(2000),
            seed: 0,
        }
    }
}

/// `W_p` with respect to the Euclidean ground metric.
pub fn wasserstein_2d(a: &SampleSet, b: &SampleSet, p: f64, method: W2dMethod) -> Result<f64> {
    check_order(p)?;
    let d = a.dim();
    if b.dim() != d {
        return Err(FkcError::Shape {
            expected: d,
            got: b.dim(),
        });
    }
    match method {
        W2dMethod::ExactAssignment { subsample, seed } => {
            let (a, b) = match subsample {
                Some(m) => {
                    let m = m.min(a.len()).min(b.len());
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    (a.reduce(m, &mut rng)?, b.reduce(m, &mut rng)?)
                }
                None => {
                    if a.len() != b.len() {
                        return Err(FkcError::Shape {
                            expected: a.len(),
                            got: b.len(),
                        });
                    }
                    if !a.is_uniform() || !b.is_uniform() {
                        return Err(FkcError::Parameter(
                            "exact assignment without subsampling needs uniform weights".into(),
                        ));
                    }
                    (a.clone(), b.clone())
                }
            };
            let n = a.len();
            let cost: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|ij| {
                    let (x, y) = (a.point(ij / n), b.point(ij % n));
                    let d2: f64 = x.iter().zip(y).map(|(s, t)| (s - t) * (s - t)).sum();
                    d2.sqrt().powf(p)
                })
                .collect();
            let assign = hungarian(&cost, n)?;
            let total: f64 = assign
                .iter()
                .enumerate()
                .map(|(i, &j)| cost[i * n + j])
                .sum();
            Ok((total / n as f64).powf(1.0 / p))
        }
        W2dMethod::Sliced { projections, seed } => {
            if projections == 0 {
                return Err(FkcError::Parameter(
                    "sliced transport needs at least one projection".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dirs: Vec<Vec<f64>> = (0..projections)
                .map(|_| loop {
                    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = crate::math::norm_sq(&v).sqrt();
                    if norm > 1e-12 {
                        break v.iter().map(|c| c / norm).collect();
                    }
                })
                .collect();
            let project = |s: &SampleSet, dir: &[f64]| -> Vec<(f64, f64)> {
                (0..s.len())
                    .map(|i| (crate::math::dot(s.point(i), dir), s.weights()[i]))
                    .collect()
            };
            let total: f64 = dirs
                .par_iter()
                .map(|dir| wasserstein_1d_pow(project(a, dir), project(b, dir), p))
                .collect::<Vec<_>>()
                .iter()
                .sum();
            Ok((total / projections as f64).powf(1.0 / p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> SampleSet {
        SampleSet::new(xs.to_vec(), 1).unwrap()
    }

    #[test]
    fn one_dimensional_cases() {
        let a = line(&[0.0, 1.0, 2.0]);
        assert_eq!(wasserstein_1d(&a, &a, 1.0).unwrap(), 0.0);
        let w = wasserstein_1d(&a, &line(&[1.0, 2.0, 3.0]), 1.0).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        for p in [1.0, 2.0] {
            let w = wasserstein_1d(&line(&[0.0]), &line(&[3.0]), p).unwrap();
            assert!((w - 3.0).abs() < 1e-12);
        }
        assert!(wasserstein_1d(&a, &a, 0.5).is_err());
    }

    #[test]
    fn unequal_sizes_and_weights() {
        // {0, 2} uniform vs {1}: every unit of mass moves by 1
        let w = wasserstein_1d(&line(&[0.0, 2.0]), &line(&[1.0]), 2.0).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        let a = SampleSet::weighted(vec![0.0, 10.0], 1, vec![0.75, 0.25]).unwrap();
        let b = line(&[0.0]);
        assert!((wasserstein_1d(&a, &b, 1.0).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn energy_filter_and_shift() {
        let a = line(&[0.0, 1.0, 50.0]);
        let id = |x: &[f64]| x[0];
        let shifted = |x: &[f64]| x[0] + 4.0;
        let b = line(&[0.0, 1.0, 50.0]);
        assert_eq!(energy_distance(&a, &b, id, 2.0, None).unwrap(), 0.0);
        let c = line(&[4.0, 5.0, 54.0]);
        assert!((energy_distance(&a, &c, id, 1.0, None).unwrap() - 4.0).abs() < 1e-12);
        assert!((energy_distance(&a, &b, shifted, 1.0, None).unwrap()).abs() < 1e-12);
        // the outlier is dropped on both sides
        let d = line(&[0.0, 1.0, 70.0]);
        assert_eq!(energy_distance(&a, &d, id, 1.0, Some(10.0)).unwrap(), 0.0);
        assert!(energy_distance(&a, &d, id, 1.0, Some(-1.0)).is_err());
    }

    #[test]
    fn pairwise_toy() {
        let a = SampleSet::new(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], 6).unwrap();
        let b = SampleSet::new(vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.0], 6).unwrap();
        assert!((distance_w2_pairwise(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(distance_w2_pairwise(&SampleSet::new(vec![0.0; 4], 4).unwrap(), &a).is_err());
    }

    #[test]
    fn translation_gives_exact_w2() {
        let pts = vec![0.0, 0.0, 1.0, 0.5, -2.0, 3.0, 0.3, -0.7];
        let a = SampleSet::new(pts.clone(), 2).unwrap();
        let moved: Vec<f64> = pts
            .chunks(2)
            .flat_map(|c| [c[0] + 3.0, c[1] + 4.0])
            .collect();
        let b = SampleSet::new(moved, 2).unwrap();
        let exact = W2dMethod::ExactAssignment {
            subsample: None,
            seed: 0,
        };
        assert!((wasserstein_2d(&a, &b, 2.0, exact).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(wasserstein_2d(&a, &a, 2.0, exact).unwrap(), 0.0);
        let short = SampleSet::new(pts[..6].to_vec(), 2).unwrap();
        assert!(wasserstein_2d(&a, &short, 2.0, exact).is_err());
    }

    #[test]
    fn hungarian_small() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&c, 3).unwrap();
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }
}
