//! Observation pairs `(region, count)` shared by the model, solver, and
//! conformal layers.

use crate::grid::{RegionGrid, RegionId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("regions and counts have different lengths ({regions} vs {counts})")]
    LengthMismatch { regions: usize, counts: usize },

    #[error("dataset is empty")]
    Empty,

    #[error("counts vector has length {found}, grid has {expected} regions")]
    RegionCountMismatch { expected: usize, found: usize },
}

/// A list of `(region, count)` observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountDataset {
    regions: Vec<RegionId>,
    counts: Vec<u32>,
}

impl CountDataset {
    pub fn new(regions: Vec<RegionId>, counts: Vec<u32>) -> Result<Self, DatasetError> {
        if regions.len() != counts.len() {
            return Err(DatasetError::LengthMismatch {
                regions: regions.len(),
                counts: counts.len(),
            });
        }
        Ok(CountDataset { regions, counts })
    }

    /// One observation per region, in region order; the usual shape for
    /// binned point patterns.
    pub fn from_counts_per_region(
        grid: &RegionGrid,
        counts: &[u32],
    ) -> Result<Self, DatasetError> {
        if counts.len() != grid.region_count() {
            return Err(DatasetError::RegionCountMismatch {
                expected: grid.region_count(),
                found: counts.len(),
            });
        }
        Ok(CountDataset {
            regions: grid.region_ids().collect(),
            counts: counts.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (RegionId, u32)> + '_ {
        self.regions.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Copy of the dataset with one extra observation appended; used by the
    /// conformal refits.
    pub fn with_observation(&self, region: RegionId, count: u32) -> Self {
        let mut regions = Vec::with_capacity(self.n() + 1);
        regions.extend_from_slice(&self.regions);
        regions.push(region);
        let mut counts = Vec::with_capacity(self.n() + 1);
        counts.extend_from_slice(&self.counts);
        counts.push(count);
        CountDataset { regions, counts }
    }

    /// Keeps only the observations whose region passes the predicate.
    pub fn filter_regions(&self, mut keep: impl FnMut(RegionId) -> bool) -> Self {
        let mut regions = Vec::new();
        let mut counts = Vec::new();
        for (r, y) in self.iter() {
            if keep(r) {
                regions.push(r);
                counts.push(y);
            }
        }
        CountDataset { regions, counts }
    }
}
