use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{FkcError, Result};

/// Regular 2D binning `bins[0] x bins[1]` over `[lo[0], hi[0]) x [lo[1], hi[1])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bins: [usize; 2],
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Default for GridSpec {
    /// 200 x 200 bins on `[-50, 50]^2`.
    fn default() -> Self {
        Self {
            bins: [200, 200],
            lo: [-50.0, -50.0],
            hi: [50.0, 50.0],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for ax in 0..2 {
            if self.bins[ax] == 0 {
                return Err(FkcError::Parameter(
                    "grid needs at least one bin per axis".into(),
                ));
            }
            if !(self.hi[ax] > self.lo[ax]) || !(self.hi[ax] - self.lo[ax]).is_finite() {
                return Err(FkcError::Parameter(format!(
                    "grid bounds [{}, {}) on axis {ax} have no extent",
                    self.lo[ax], self.hi[ax]
                )));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.bins[0] * self.bins[1]
    }

    /// Row-major cell index (`i * bins[1] + j`), `None` outside the bounds.
    pub fn cell(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for ax in 0..2 {
            let f = (x[ax] - self.lo[ax]) / (self.hi[ax] - self.lo[ax]);
            if !(0.0..1.0).contains(&f) {
                return None;
            }
            idx[ax] = ((f * self.bins[ax] as f64) as usize).min(self.bins[ax] - 1);
        }
        Some(idx[0] * self.bins[1] + idx[1])
    }

    /// Center of a cell.
    pub fn center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = (cell / self.bins[1], cell % self.bins[1]);
        let w = |ax: usize| (self.hi[ax] - self.lo[ax]) / self.bins[ax] as f64;
        [
            self.lo[0] + (i as f64 + 0.5) * w(0),
            self.lo[1] + (j as f64 + 0.5) * w(1),
        ]
    }
}

/// Weighted cell masses; the last entry holds the mass outside the grid.
pub fn histogram_2d(s: &SampleSet, grid: &GridSpec) -> Result<Vec<f64>> {
    grid.validate()?;
    if s.dim() != 2 {
        return Err(FkcError::Shape {
            expected: 2,
            got: s.dim(),
        });
    }
    let n = grid.n_cells();
    let mut h = vec![0.0; n + 1];
    for i in 0..s.len() {
        h[grid.cell(s.point(i)).unwrap_or(n)] += s.weights()[i];
    }
    Ok(h)
}

/// Half the L1 distance between the two grid histograms. Mass outside the
/// bounds is pooled into one extra cell, so the value stays in `[0, 1]`.
pub fn total_variation_grid(a: &SampleSet, b: &SampleSet, grid: &GridSpec) -> Result<f64> {
    let ha = histogram_2d(a, grid)?;
    let hb = histogram_2d(b, grid)?;
    Ok(0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> GridSpec {
        GridSpec {
            bins: [2, 2],
            lo: [0.0, 0.0],
            hi: [2.0, 2.0],
        }
    }

    #[test]
    fn checkerboard_half_overlap() {
        // a fills cells (0,0),(1,1); b fills (0,0),(0,1)
        let a = SampleSet::new(vec![0.5, 0.5, 1.5, 1.5], 2).unwrap();
        let b = SampleSet::new(vec![0.5, 0.5, 0.5, 1.5], 2).unwrap();
        assert!((total_variation_grid(&a, &b, &unit()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(total_variation_grid(&a, &a, &unit()).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_and_overflow() {
        let a = SampleSet::new(vec![0.5, 0.5], 2).unwrap();
        let b = SampleSet::new(vec![1.5, 0.5], 2).unwrap();
        assert_eq!(total_variation_grid(&a, &b, &unit()).unwrap(), 1.0);
        let out = SampleSet::new(vec![9.0, 9.0], 2).unwrap();
        assert_eq!(total_variation_grid(&a, &out, &unit()).unwrap(), 1.0);
        assert_eq!(total_variation_grid(&out, &out, &unit()).unwrap(), 0.0);
    }

    #[test]
    fn zero_area_rejected() {
        let g = GridSpec {
            hi: [0.0, 2.0],
            ..unit()
        };
        let a = SampleSet::new(vec![0.5, 0.5], 2).unwrap();
        assert!(total_variation_grid(&a, &a, &g).is_err());
    }

    #[test]
    fn centers_round_trip() {
        let g = GridSpec::default();
        for c in [0, 1, 399, 39_999] {
            assert_eq!(g.cell(&g.center(c)), Some(c));
        }
    }
}
