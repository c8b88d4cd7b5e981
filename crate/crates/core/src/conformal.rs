//! Full conformal intensity intervals.
//!
//! For a target region the procedure refits the model once per candidate
//! count `0..=Y` on the dataset augmented with that candidate, ranks the
//! candidate's absolute residual against the refit's residuals on the
//! observed data, and admits the candidate when its rank clears the
//! significance threshold. Admitted counts divided by the region area form
//! the intensity interval.
//!
//! Candidate refits are independent pure computations; they may run in
//! parallel and the admitted set never depends on evaluation order.

use crate::basis::{DesignMatrix, SpatialBasis};
use crate::dataset::CountDataset;
use crate::grid::{GridError, Location, RegionId};
use crate::model::capped_exp;
use crate::solver::{self, SolverConfig, SolverError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Grid(#[from] GridError),

    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),

    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Whether candidate refits re-derive the regularization weights from the
/// augmented dataset or reuse the weights of the original data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitWeights {
    Recompute,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    /// Significance level; the interval targets coverage `1 - alpha`.
    pub alpha: f64,
    /// Candidate ceiling `Y`; candidates are `0..=Y`. Defaults to twice the
    /// maximum observed count.
    pub count_ceiling: Option<u32>,
    pub refit_weights: RefitWeights,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        ConformalConfig {
            alpha: 0.2,
            count_ceiling: None,
            refit_weights: RefitWeights::Recompute,
        }
    }
}

impl ConformalConfig {
    fn validate(&self) -> Result<(), ConformalError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConformalError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

/// Fraction of augmented residuals no larger than the candidate's own,
/// the candidate itself included: `(1 + #{e_i <= e_new}) / (n + 1)`.
/// Always in `[1/(n+1), 1]`; ties count inclusively.
pub fn conformity_score(residuals: &[f64], new_residual: f64) -> f64 {
    let rank = conformity_rank(residuals, new_residual);
    rank as f64 / (residuals.len() + 1) as f64
}

/// Integer rank `(n+1) * score`: one plus the number of observed residuals
/// at or below the candidate's.
pub fn conformity_rank(residuals: &[f64], new_residual: f64) -> usize {
    1 + residuals.iter().filter(|&&e| e <= new_residual).count()
}

/// Largest admissible rank at level `alpha` for `n` observed points:
/// `ceil((1 - alpha)(n + 1))`, evaluated in integer arithmetic.
pub fn admission_threshold(n: usize, alpha: f64) -> usize {
    (n + 1) - (alpha * (n + 1) as f64).floor() as usize
}

/// Outcome of one candidate count's refit and scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub count: u32,
    /// Absolute residual of the candidate under its own augmented fit.
    pub residual: f64,
    /// Inclusive rank among the n+1 augmented residuals.
    pub rank: usize,
    /// `rank / (n + 1)`.
    pub score: f64,
    /// Whether the augmented refit converged within its iteration caps.
    pub converged: bool,
}

/// Set of admitted counts for one region, scaled by the region area into an
/// intensity band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityInterval {
    pub region: RegionId,
    /// Admitted counts in increasing order; may be empty, which is
    /// surfaced rather than silently widened.
    pub admitted: Vec<u32>,
    /// Area of the region, the intensity scale factor.
    pub area: f64,
    /// Number of candidates evaluated (always `ceiling + 1`).
    pub candidates_evaluated: usize,
    /// Candidates whose refit hit an iteration cap.
    pub nonconverged_candidates: usize,
}

impl IntensityInterval {
    /// Smallest admitted count over the region area.
    pub fn lo(&self) -> Option<f64> {
        self.admitted.first().map(|&c| c as f64 / self.area)
    }

    /// Largest admitted count over the region area.
    pub fn hi(&self) -> Option<f64> {
        self.admitted.last().map(|&c| c as f64 / self.area)
    }

    /// Interval size `hi - lo` in intensity units.
    pub fn size(&self) -> Option<f64> {
        match (self.lo(), self.hi()) {
            (Some(lo), Some(hi)) => Some(hi - lo),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.admitted.is_empty()
    }

    /// Whether the admitted counts form a gap-free integer range.
    pub fn contiguous(&self) -> bool {
        match (self.admitted.first(), self.admitted.last()) {
            (Some(&first), Some(&last)) => {
                self.admitted.len() == (last - first) as usize + 1
            }
            _ => true,
        }
    }

    /// Membership test for a fresh count.
    pub fn contains_count(&self, count: u32) -> bool {
        self.admitted.binary_search(&count).is_ok()
    }
}

/// Scores every candidate count for one region: one solver fit per
/// candidate on the augmented dataset.
pub fn candidate_outcomes(
    region: RegionId,
    data: &CountDataset,
    basis: &SpatialBasis,
    solver_config: &SolverConfig,
    config: &ConformalConfig,
) -> Result<Vec<CandidateOutcome>, ConformalError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ConformalError::EmptyDataset);
    }
    let ceiling = resolve_candidate_ceiling(data, config, solver_config)?;

    // every refit shares one ceiling so candidate problems are comparable
    let refit_config = SolverConfig {
        count_ceiling: Some(ceiling),
        ..*solver_config
    };
    let frozen_penalties = match config.refit_weights {
        RefitWeights::Frozen => {
            let design = DesignMatrix::new(basis, data.regions())?;
            Some(design.weights().penalties())
        }
        RefitWeights::Recompute => None,
    };

    let outcomes: Result<Vec<CandidateOutcome>, ConformalError> = (0..=ceiling)
        .into_par_iter()
        .map(|candidate| {
            score_candidate(
                region,
                candidate,
                data,
                basis,
                &refit_config,
                frozen_penalties.as_deref(),
            )
        })
        .collect();
    outcomes
}

fn resolve_candidate_ceiling(
    data: &CountDataset,
    config: &ConformalConfig,
    solver_config: &SolverConfig,
) -> Result<u32, ConformalError> {
    let max_count = data.max_count();
    let ceiling = match config.count_ceiling.or(solver_config.count_ceiling) {
        Some(c) => {
            if c < max_count {
                return Err(ConformalError::Solver(SolverError::CeilingBelowMax {
                    ceiling: c,
                    max_count,
                }));
            }
            c
        }
        None => 2 * max_count,
    };
    Ok(ceiling)
}

fn score_candidate(
    region: RegionId,
    candidate: u32,
    data: &CountDataset,
    basis: &SpatialBasis,
    refit_config: &SolverConfig,
    frozen_penalties: Option<&[f64]>,
) -> Result<CandidateOutcome, ConformalError> {
    let augmented = data.with_observation(region, candidate);
    let (theta, diagnostics) =
        solver::fit_counts_raw(&augmented, basis, refit_config, frozen_penalties)?;
    let means: Vec<f64> = basis
        .linear_predictors(&theta)
        .into_iter()
        .map(|u| capped_exp(u).0)
        .collect();
    let residuals: Vec<f64> = data
        .iter()
        .map(|(r, y)| (y as f64 - means[r.index()]).abs())
        .collect();
    let new_residual = (candidate as f64 - means[region.index()]).abs();
    let rank = conformity_rank(&residuals, new_residual);
    Ok(CandidateOutcome {
        count: candidate,
        residual: new_residual,
        rank,
        score: rank as f64 / (data.n() + 1) as f64,
        converged: diagnostics.converged,
    })
}

/// Filters scored candidates by the admission threshold at level `alpha`.
pub fn interval_from_outcomes(
    region: RegionId,
    outcomes: &[CandidateOutcome],
    n: usize,
    alpha: f64,
    area: f64,
) -> IntensityInterval {
    let threshold = admission_threshold(n, alpha);
    let admitted: Vec<u32> = outcomes
        .iter()
        .filter(|o| o.rank <= threshold)
        .map(|o| o.count)
        .collect();
    IntensityInterval {
        region,
        admitted,
        area,
        candidates_evaluated: outcomes.len(),
        nonconverged_candidates: outcomes.iter().filter(|o| !o.converged).count(),
    }
}

/// Conformal intensity interval for the region containing `x`.
pub fn intensity_interval(
    x: Location,
    data: &CountDataset,
    basis: &SpatialBasis,
    solver_config: &SolverConfig,
    config: &ConformalConfig,
) -> Result<IntensityInterval, ConformalError> {
    let region = basis.grid().locate(x)?;
    region_interval(region, data, basis, solver_config, config)
}

/// Conformal intensity interval for an explicit region.
pub fn region_interval(
    region: RegionId,
    data: &CountDataset,
    basis: &SpatialBasis,
    solver_config: &SolverConfig,
    config: &ConformalConfig,
) -> Result<IntensityInterval, ConformalError> {
    let outcomes = candidate_outcomes(region, data, basis, solver_config, config)?;
    Ok(interval_from_outcomes(
        region,
        &outcomes,
        data.n(),
        config.alpha,
        basis.grid().region_area(),
    ))
}

/// One interval per grid region; regions are independent and evaluated in
/// parallel, with results ordered by region index.
pub fn interval_map(
    data: &CountDataset,
    basis: &SpatialBasis,
    solver_config: &SolverConfig,
    config: &ConformalConfig,
) -> Result<Vec<IntensityInterval>, ConformalError> {
    let regions: Vec<RegionId> = basis.grid().region_ids().collect();
    regions
        .into_par_iter()
        .map(|region| region_interval(region, data, basis, solver_config, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::SplineSpec;
    use crate::grid::RegionGrid;

    fn basis(r: usize) -> SpatialBasis {
        let grid = RegionGrid::interval(0.0, 100.0, r).unwrap();
        let spec = SplineSpec::covering(&grid);
        SpatialBasis::new(grid, spec).unwrap()
    }

    #[test]
    fn score_reference_values() {
        assert_eq!(conformity_score(&[2.0], 1.0), 0.5);
        assert_eq!(conformity_score(&[0.5, 1.5, 2.5], 1.5), 0.75);
        let residuals = [0.3, 0.7, 0.1];
        assert_eq!(conformity_score(&residuals, 1.0), 1.0);
        assert_eq!(conformity_score(&residuals, 0.0), 0.25);
    }

    #[test]
    fn threshold_is_integer_exact_and_monotone() {
        // n = 20, alpha = 0.2: ceil(0.8 * 21) = 17
        assert_eq!(admission_threshold(20, 0.2), 17);
        // alpha below 1/(n+1) admits every rank
        assert_eq!(admission_threshold(20, 1.0 / 42.0), 21);
        let mut last = usize::MAX;
        for step in 1..100 {
            let alpha = step as f64 / 100.0;
            let t = admission_threshold(20, alpha);
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn admitted_sets_nest_in_alpha() {
        let basis = basis(5);
        let data =
            CountDataset::from_counts_per_region(basis.grid(), &[3, 1, 4, 1, 5]).unwrap();
        let config = ConformalConfig::default();
        let outcomes = candidate_outcomes(
            RegionId::new(3),
            &data,
            &basis,
            &SolverConfig::default(),
            &config,
        )
        .unwrap();
        let mut previous: Option<Vec<u32>> = None;
        for alpha in [0.05, 0.1, 0.2, 0.4, 0.6, 0.8] {
            let interval =
                interval_from_outcomes(RegionId::new(3), &outcomes, data.n(), alpha, 1.0);
            if let Some(prev) = &previous {
                for c in &interval.admitted {
                    assert!(prev.contains(c), "alpha nesting violated at {alpha}");
                }
            }
            previous = Some(interval.admitted);
        }
    }

    #[test]
    fn tiny_alpha_admits_every_candidate() {
        let basis = basis(4);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[2, 0, 1, 3]).unwrap();
        let n = data.n();
        let config = ConformalConfig {
            alpha: 1.0 / (2.0 * (n as f64 + 1.0)),
            ..ConformalConfig::default()
        };
        let interval = region_interval(
            RegionId::new(2),
            &data,
            &basis,
            &SolverConfig::default(),
            &config,
        )
        .unwrap();
        // ceiling = 2 * max = 6: all of 0..=6 admitted
        assert_eq!(interval.admitted, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(interval.candidates_evaluated, 7);
        assert_eq!(interval.lo(), Some(0.0));
        assert_eq!(interval.hi(), Some(6.0 / basis.grid().region_area()));
        assert!(interval.contiguous());
    }

    #[test]
    fn constant_data_admits_the_constant() {
        let basis = basis(6);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[4; 6]).unwrap();
        let config = ConformalConfig::default();
        let interval = region_interval(
            RegionId::new(2),
            &data,
            &basis,
            &SolverConfig::default(),
            &config,
        )
        .unwrap();
        assert!(
            interval.contains_count(4),
            "perfectly conforming count not admitted: {:?}",
            interval.admitted
        );
    }

    #[test]
    fn refit_count_is_ceiling_plus_one() {
        let basis = basis(3);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[1, 2, 5]).unwrap();
        let config = ConformalConfig {
            count_ceiling: Some(8),
            ..ConformalConfig::default()
        };
        let outcomes = candidate_outcomes(
            RegionId::new(1),
            &data,
            &basis,
            &SolverConfig::default(),
            &config,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 9);
        let counts: Vec<u32> = outcomes.iter().map(|o| o.count).collect();
        assert_eq!(counts, (0..=8).collect::<Vec<u32>>());
    }

    #[test]
    fn score_range_invariant() {
        let basis = basis(4);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[0, 3, 1, 2]).unwrap();
        let outcomes = candidate_outcomes(
            RegionId::new(4),
            &data,
            &basis,
            &SolverConfig::default(),
            &ConformalConfig::default(),
        )
        .unwrap();
        let n = data.n();
        for o in &outcomes {
            assert!(o.score >= 1.0 / (n as f64 + 1.0) && o.score <= 1.0);
            assert_eq!(o.rank, (o.score * (n as f64 + 1.0)).round() as usize);
        }
    }

    #[test]
    fn map_matches_single_region_and_reflection_symmetry() {
        let basis = basis(6);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[2; 6]).unwrap();
        let solver_config = SolverConfig::default();
        let config = ConformalConfig::default();
        let map = interval_map(&data, &basis, &solver_config, &config).unwrap();
        assert_eq!(map.len(), 6);
        for (i, interval) in map.iter().enumerate() {
            assert_eq!(interval.region, RegionId::new(i + 1));
        }
        let single = region_interval(RegionId::new(2), &data, &basis, &solver_config, &config)
            .unwrap();
        assert_eq!(map[1], single);

        // identical data: regions mirror under reflection
        for (a, b) in [(0usize, 5usize), (1, 4), (2, 3)] {
            assert_eq!(map[a].admitted, map[b].admitted, "regions {a} vs {b}");
        }

        // determinism under repeated parallel evaluation
        let again = interval_map(&data, &basis, &solver_config, &config).unwrap();
        assert_eq!(map, again);
    }

    #[test]
    fn single_region_map() {
        let grid = RegionGrid::interval(0.0, 2.0, 1).unwrap();
        let basis = SpatialBasis::new(grid, SplineSpec::new(1.0)).unwrap();
        let data = CountDataset::from_counts_per_region(basis.grid(), &[3]).unwrap();
        let map = interval_map(
            &data,
            &basis,
            &SolverConfig::default(),
            &ConformalConfig::default(),
        )
        .unwrap();
        assert_eq!(map.len(), 1);
        // constant single-region data admits the observed count
        assert!(map[0].contains_count(3));
        // interval brackets the observed intensity 3 / 2.0
        assert!(map[0].lo().unwrap() <= 1.5 && map[0].hi().unwrap() >= 1.5);
    }

    #[test]
    fn frozen_weights_reuse_the_original_penalties() {
        let basis = basis(4);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[2, 6, 3, 1]).unwrap();
        let solver_config = SolverConfig::default();
        let frozen = ConformalConfig {
            refit_weights: RefitWeights::Frozen,
            ..ConformalConfig::default()
        };
        let a = region_interval(RegionId::new(2), &data, &basis, &solver_config, &frozen)
            .unwrap();
        let b = region_interval(RegionId::new(2), &data, &basis, &solver_config, &frozen)
            .unwrap();
        assert_eq!(a, b);
        // the recompute default may admit a slightly different set but both
        // modes produce valid intervals around the observed count
        let recomputed = region_interval(
            RegionId::new(2),
            &data,
            &basis,
            &solver_config,
            &ConformalConfig::default(),
        )
        .unwrap();
        assert!(a.contains_count(6));
        assert!(recomputed.contains_count(6));
    }

    #[test]
    fn rejects_invalid_inputs() {
        let basis = basis(3);
        let data = CountDataset::from_counts_per_region(basis.grid(), &[1, 1, 1]).unwrap();
        let bad_alpha = ConformalConfig {
            alpha: 0.0,
            ..ConformalConfig::default()
        };
        assert!(matches!(
            region_interval(
                RegionId::new(1),
                &data,
                &basis,
                &SolverConfig::default(),
                &bad_alpha
            ),
            Err(ConformalError::InvalidAlpha(_))
        ));

        let empty = CountDataset::new(vec![], vec![]).unwrap();
        assert!(matches!(
            region_interval(
                RegionId::new(1),
                &empty,
                &basis,
                &SolverConfig::default(),
                &ConformalConfig::default()
            ),
            Err(ConformalError::EmptyDataset)
        ));
    }
}
