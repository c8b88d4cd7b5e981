//! Cubic B-spline spatial basis and data-driven regularization weights.
//!
//! Component `k` of the basis is a radial bump centered at region `k`'s
//! midpoint: `phi_k(r) = B(2 d(c_r, c_k) / support)` where `B` is the
//! classical symmetric cubic B-spline on `[-2, 2]` rescaled so its peak is
//! exactly 1. A component is identically zero at center distances of
//! `support` or more.

use crate::grid::{RegionGrid, RegionId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("spline support must be positive and finite, got {0}")]
    InvalidSupport(f64),

    #[error("weight floor must be positive and finite, got {0}")]
    InvalidWeightFloor(f64),

    #[error("cannot build a design matrix from an empty dataset")]
    EmptyDataset,

    #[error("region {0} out of range 1..={1}")]
    RegionOutOfRange(usize, usize),
}

/// Shape parameters of the spline basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    /// Center distance beyond which a component is exactly zero.
    pub support: f64,
    /// Lower floor applied to zero regularization weights when they are
    /// used as lasso penalties.
    #[serde(default = "default_weight_floor")]
    pub weight_floor: f64,
}

fn default_weight_floor() -> f64 {
    1e-8
}

impl SplineSpec {
    pub fn new(support: f64) -> Self {
        SplineSpec {
            support,
            weight_floor: default_weight_floor(),
        }
    }

    /// Support equal to the domain diameter, so every component covers all
    /// regions.
    pub fn covering(grid: &RegionGrid) -> Self {
        SplineSpec::new(grid.domain_diameter())
    }

    fn validate(&self) -> Result<(), BasisError> {
        if !(self.support > 0.0 && self.support.is_finite()) {
            return Err(BasisError::InvalidSupport(self.support));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return Err(BasisError::InvalidWeightFloor(self.weight_floor));
        }
        Ok(())
    }
}

/// Symmetric cubic B-spline on `[-2, 2]`, rescaled to peak at 1.
///
/// The classical kernel peaks at 2/3; multiplying by 3/2 normalizes the
/// center value to exactly 1.
fn spline_bump(u: f64) -> f64 {
    let a = u.abs();
    if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        let t = 2.0 - a;
        0.25 * t * t * t
    } else {
        1.0 - 1.5 * a * a + 0.75 * a * a * a
    }
}

/// The full `R × R` design of spline components evaluated at every region
/// center, together with the grid and spec that produced it.
#[derive(Debug, Clone)]
pub struct SpatialBasis {
    grid: RegionGrid,
    spec: SplineSpec,
    design: Vec<f64>, // row-major R×R; row r = phi(r)
}

impl SpatialBasis {
    pub fn new(grid: RegionGrid, spec: SplineSpec) -> Result<Self, BasisError> {
        spec.validate()?;
        let r_total = grid.region_count();
        let mut design = vec![0.0; r_total * r_total];
        for r in 0..r_total {
            for k in 0..=r {
                let d = grid.center_distance(RegionId::from_index(r), RegionId::from_index(k));
                let value = spline_bump(2.0 * d / spec.support);
                design[r * r_total + k] = value;
                design[k * r_total + r] = value;
            }
        }
        Ok(SpatialBasis { grid, spec, design })
    }

    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn region_count(&self) -> usize {
        self.grid.region_count()
    }

    /// The basis vector `phi(r)` as a slice of length `R`.
    pub fn row(&self, r: RegionId) -> &[f64] {
        let n = self.region_count();
        &self.design[r.index() * n..(r.index() + 1) * n]
    }

    /// Owned copy of `phi(r)`.
    pub fn eval(&self, r: RegionId) -> Vec<f64> {
        self.row(r).to_vec()
    }

    /// Linear predictor `phi(r)' theta` for every region; length `R`.
    pub fn linear_predictors(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.region_count();
        debug_assert_eq!(theta.len(), n);
        let mut out = vec![0.0; n];
        for r in 0..n {
            let row = &self.design[r * n..(r + 1) * n];
            let mut acc = 0.0;
            for (p, t) in row.iter().zip(theta) {
                acc += p * t;
            }
            out[r] = acc;
        }
        out
    }

    /// Linear predictor for a single region.
    pub fn predictor_at(&self, r: RegionId, theta: &[f64]) -> f64 {
        self.row(r).iter().zip(theta).map(|(p, t)| p * t).sum()
    }
}

/// Root-mean-square regularization weights `w_k` over a dataset's regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationWeights {
    values: Vec<f64>,
    floor: f64,
}

impl RegularizationWeights {
    /// Raw weights; entries can be zero when no observation lies inside a
    /// component's support.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Weights with the floor applied, the form used as lasso penalties.
    pub fn penalties(&self) -> Vec<f64> {
        self.values.iter().map(|&w| w.max(self.floor)).collect()
    }

    /// Number of weights raised to the floor.
    pub fn floored_count(&self) -> usize {
        self.values.iter().filter(|&&w| w < self.floor).count()
    }

    /// Smallest floored weight `w_o`; strictly positive.
    pub fn min_penalty(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::INFINITY, |m, &w| m.min(w))
            .max(self.floor)
    }
}

/// Per-datum design: column `k` holds `phi_k(r_i)` over observations `i`,
/// stored column-major for the coordinate-descent inner loop.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n: usize,
    components: usize,
    cols: Vec<f64>,           // column-major n×R
    col_squared_norms: Vec<f64>,
    weights: RegularizationWeights,
}

impl DesignMatrix {
    pub fn new(basis: &SpatialBasis, regions: &[RegionId]) -> Result<Self, BasisError> {
        if regions.is_empty() {
            return Err(BasisError::EmptyDataset);
        }
        let r_total = basis.region_count();
        for &r in regions {
            if r.get() < 1 || r.get() > r_total {
                return Err(BasisError::RegionOutOfRange(r.get(), r_total));
            }
        }
        let n = regions.len();
        let mut cols = vec![0.0; n * r_total];
        for k in 0..r_total {
            let col = &mut cols[k * n..(k + 1) * n];
            for (i, &r) in regions.iter().enumerate() {
                col[i] = basis.row(r)[k];
            }
        }
        let mut col_squared_norms = vec![0.0; r_total];
        let mut values = vec![0.0; r_total];
        for k in 0..r_total {
            let col = &cols[k * n..(k + 1) * n];
            let sq: f64 = col.iter().map(|v| v * v).sum();
            col_squared_norms[k] = sq;
            values[k] = (sq / n as f64).sqrt();
        }
        Ok(DesignMatrix {
            n,
            components: r_total,
            cols,
            col_squared_norms,
            weights: RegularizationWeights {
                values,
                floor: basis.spec().weight_floor,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.cols[k * self.n..(k + 1) * self.n]
    }

    pub(crate) fn column_squared_norm(&self, k: usize) -> f64 {
        self.col_squared_norms[k]
    }

    pub fn weights(&self) -> &RegularizationWeights {
        &self.weights
    }

    /// Per-datum linear predictor `Phi' theta`, length `n`.
    pub fn predictor(&self, theta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta.len(), self.components);
        let mut out = vec![0.0; self.n];
        for (k, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                for (o, v) in out.iter_mut().zip(self.column(k)) {
                    *o += t * v;
                }
            }
        }
        out
    }
}
