//! Discretization of a spatial domain into equal-area indexed regions.
//!
//! A [`RegionGrid`] partitions a 1D interval or a 2D axis-aligned rectangle
//! into `R` disjoint regions of identical area. Regions are addressed by a
//! 1-based [`RegionId`]; in 2D the x axis varies fastest. All operations are
//! pure and the grid is immutable after construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based index of a grid region.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct RegionId(usize);

impl RegionId {
    /// Wraps a 1-based region number.
    pub fn new(value: usize) -> Self {
        debug_assert!(value >= 1, "region ids are 1-based");
        RegionId(value)
    }

    /// The 1-based region number.
    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based offset for array indexing.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    /// Builds a region id from a zero-based offset.
    pub fn from_index(index: usize) -> Self {
        RegionId(index + 1)
    }
}

impl std::fmt::Display for RegionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point in the spatial domain, one or two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Location {
    D1(f64),
    D2(f64, f64),
}

impl Location {
    pub fn dimension(&self) -> usize {
        match self {
            Location::D1(_) => 1,
            Location::D2(_, _) => 2,
        }
    }

    /// Euclidean distance between two locations of the same dimension.
    pub fn distance(&self, other: &Location) -> f64 {
        match (self, other) {
            (Location::D1(a), Location::D1(b)) => (a - b).abs(),
            (Location::D2(ax, ay), Location::D2(bx, by)) => {
                let dx = ax - bx;
                let dy = ay - by;
                dx.hypot(dy)
            }
            _ => panic!("dimension mismatch between locations"),
        }
    }
}

impl From<f64> for Location {
    fn from(x: f64) -> Self {
        Location::D1(x)
    }
}

impl From<(f64, f64)> for Location {
    fn from((x, y): (f64, f64)) -> Self {
        Location::D2(x, y)
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("degenerate bounds [{lo}, {hi}]: upper bound must exceed lower bound and both must be finite")]
    DegenerateBounds { lo: f64, hi: f64 },

    #[error("region count must be at least 1 on every axis")]
    ZeroRegions,

    #[error("location {0:?} lies outside the domain")]
    OutOfDomain(Location),

    #[error("point {index} at {location:?} lies outside the domain")]
    PointOutOfDomain { index: usize, location: Location },

    #[error("location has dimension {found}, grid has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("region {0} out of range 1..={1}")]
    RegionOutOfRange(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AxisPartition {
    lo: f64,
    hi: f64,
    count: usize,
}

impl AxisPartition {
    fn new(lo: f64, hi: f64, count: usize) -> Result<Self, GridError> {
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(GridError::DegenerateBounds { lo, hi });
        }
        if count == 0 {
            return Err(GridError::ZeroRegions);
        }
        Ok(AxisPartition { lo, hi, count })
    }

    fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    /// Zero-based cell index along this axis. Cells are half-open on the
    /// right except the last, which includes the upper domain boundary.
    fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let t = (x - self.lo) / (self.hi - self.lo) * self.count as f64;
        Some((t as usize).min(self.count - 1))
    }

    fn center(&self, cell: usize) -> f64 {
        self.lo + (cell as f64 + 0.5) * self.width()
    }
}

/// Equal-area partition of a 1D interval or 2D rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    axes: Vec<AxisPartition>,
}

impl RegionGrid {
    /// Partitions the interval `[lo, hi]` into `count` equal regions.
    pub fn interval(lo: f64, hi: f64, count: usize) -> Result<Self, GridError> {
        Ok(RegionGrid {
            axes: vec![AxisPartition::new(lo, hi, count)?],
        })
    }

    /// Partitions the rectangle `[x0, x1] × [y0, y1]` into `nx × ny`
    /// equal regions; the x axis varies fastest in the region index.
    pub fn rectangle(
        x_bounds: (f64, f64),
        y_bounds: (f64, f64),
        nx: usize,
        ny: usize,
    ) -> Result<Self, GridError> {
        Ok(RegionGrid {
            axes: vec![
                AxisPartition::new(x_bounds.0, x_bounds.1, nx)?,
                AxisPartition::new(y_bounds.0, y_bounds.1, ny)?,
            ],
        })
    }

    pub fn dimension(&self) -> usize {
        self.axes.len()
    }

    /// Total number of regions `R`.
    pub fn region_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Area (length in 1D) shared by every region.
    pub fn region_area(&self) -> f64 {
        self.axes.iter().map(|a| a.width()).product()
    }

    /// Domain bounds per axis as `(lo, hi)` pairs.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|a| (a.lo, a.hi)).collect()
    }

    /// Region counts per axis.
    pub fn axis_counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// Length of the domain diagonal; default spline support.
    pub fn domain_diameter(&self) -> f64 {
        let mut sq = 0.0;
        for a in &self.axes {
            sq += (a.hi - a.lo) * (a.hi - a.lo);
        }
        sq.sqrt()
    }

    fn check_region(&self, r: RegionId) -> Result<(), GridError> {
        let total = self.region_count();
        if r.get() < 1 || r.get() > total {
            return Err(GridError::RegionOutOfRange(r.get(), total));
        }
        Ok(())
    }

    /// Maps an in-domain location to the unique region containing it.
    ///
    /// Boundary points shared by two regions belong to the higher-index
    /// region; the upper domain boundary belongs to the last region.
    pub fn locate(&self, x: Location) -> Result<RegionId, GridError> {
        if x.dimension() != self.dimension() {
            return Err(GridError::DimensionMismatch {
                expected: self.dimension(),
                found: x.dimension(),
            });
        }
        match x {
            Location::D1(v) => {
                let cell = self.axes[0].locate(v).ok_or(GridError::OutOfDomain(x))?;
                Ok(RegionId::from_index(cell))
            }
            Location::D2(vx, vy) => {
                let cx = self.axes[0].locate(vx).ok_or(GridError::OutOfDomain(x))?;
                let cy = self.axes[1].locate(vy).ok_or(GridError::OutOfDomain(x))?;
                Ok(RegionId::from_index(cy * self.axes[0].count + cx))
            }
        }
    }

    /// Arithmetic midpoint of a region.
    pub fn center(&self, r: RegionId) -> Location {
        debug_assert!(self.check_region(r).is_ok());
        let idx = r.index();
        match self.dimension() {
            1 => Location::D1(self.axes[0].center(idx)),
            _ => {
                let nx = self.axes[0].count;
                Location::D2(self.axes[0].center(idx % nx), self.axes[1].center(idx / nx))
            }
        }
    }

    /// Euclidean distance between two region centers.
    pub fn center_distance(&self, a: RegionId, b: RegionId) -> f64 {
        self.center(a).distance(&self.center(b))
    }

    /// Iterates region ids `1..=R`.
    pub fn region_ids(&self) -> impl Iterator<Item = RegionId> {
        (1..=self.region_count()).map(RegionId::new)
    }

    /// Counts events per region. Fails on the first out-of-domain point,
    /// reporting its position in the input.
    pub fn bin_events(&self, points: &[Location]) -> Result<Vec<u32>, GridError> {
        let mut counts = vec![0u32; self.region_count()];
        for (index, &p) in points.iter().enumerate() {
            let r = self
                .locate(p)
                .map_err(|_| GridError::PointOutOfDomain { index, location: p })?;
            counts[r.index()] += 1;
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_partition_counts_and_area() {
        let g = RegionGrid::interval(0.0, 100.0, 20).unwrap();
        assert_eq!(g.region_count(), 20);
        assert_eq!(g.region_area(), 5.0);

        let single = RegionGrid::interval(0.0, 1.0, 1).unwrap();
        assert_eq!(single.region_count(), 1);
        assert_eq!(single.region_area(), 1.0);

        let g50 = RegionGrid::interval(0.0, 200.0, 50).unwrap();
        assert_eq!(g50.region_count(), 50);
        assert_eq!(g50.region_area(), 4.0);
    }

    #[test]
    fn rectangle_partition() {
        let g = RegionGrid::rectangle((0.0, 10.0), (0.0, 4.0), 5, 2).unwrap();
        assert_eq!(g.region_count(), 10);
        assert_eq!(g.region_area(), 4.0);
        assert_eq!(g.dimension(), 2);
        // x varies fastest: region 6 is the first cell of the second row
        assert_eq!(g.center(RegionId::new(6)), Location::D2(1.0, 3.0));
        assert_eq!(g.locate(Location::D2(0.5, 2.5)).unwrap(), RegionId::new(6));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(RegionGrid::interval(1.0, 1.0, 4).is_err());
        assert!(RegionGrid::interval(2.0, 1.0, 4).is_err());
        assert!(RegionGrid::interval(0.0, f64::INFINITY, 4).is_err());
        assert!(RegionGrid::interval(0.0, 1.0, 0).is_err());
        assert!(RegionGrid::rectangle((0.0, 1.0), (0.0, 0.0), 2, 2).is_err());
    }

    #[test]
    fn locate_boundary_conventions() {
        let g = RegionGrid::interval(0.0, 100.0, 20).unwrap();
        assert_eq!(g.locate(Location::D1(0.0)).unwrap(), RegionId::new(1));
        assert_eq!(g.locate(Location::D1(100.0)).unwrap(), RegionId::new(20));
        assert_eq!(g.locate(Location::D1(12.5)).unwrap(), RegionId::new(3));
        // interior shared boundary goes to the higher region
        assert_eq!(g.locate(Location::D1(5.0)).unwrap(), RegionId::new(2));
        assert!(g.locate(Location::D1(-0.001)).is_err());
        assert!(g.locate(Location::D1(100.001)).is_err());
        assert!(matches!(
            g.locate(Location::D2(1.0, 1.0)),
            Err(GridError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn centers_locate_to_own_region() {
        for grid in [
            RegionGrid::interval(0.0, 100.0, 20).unwrap(),
            RegionGrid::interval(-3.0, 17.0, 7).unwrap(),
            RegionGrid::rectangle((0.0, 9.0), (-2.0, 5.0), 9, 11).unwrap(),
        ] {
            for r in grid.region_ids() {
                assert_eq!(grid.locate(grid.center(r)).unwrap(), r);
            }
        }
    }

    #[test]
    fn centers_strictly_increasing() {
        let g = RegionGrid::interval(0.0, 100.0, 20).unwrap();
        let centers: Vec<f64> = g
            .region_ids()
            .map(|r| match g.center(r) {
                Location::D1(x) => x,
                _ => unreachable!(),
            })
            .collect();
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(centers[0], 2.5);
    }

    #[test]
    fn bin_events_examples() {
        let g = RegionGrid::interval(0.0, 8.0, 4).unwrap();
        assert_eq!(g.bin_events(&[]).unwrap(), vec![0, 0, 0, 0]);

        let centers: Vec<Location> = g.region_ids().map(|r| g.center(r)).collect();
        assert_eq!(g.bin_events(&centers).unwrap(), vec![1, 1, 1, 1]);

        let pts = [Location::D1(2.1), Location::D1(3.0), Location::D1(3.9)];
        assert_eq!(g.bin_events(&pts).unwrap(), vec![0, 3, 0, 0]);

        let bad = [Location::D1(1.0), Location::D1(9.0)];
        match g.bin_events(&bad) {
            Err(GridError::PointOutOfDomain { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected out-of-domain, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn locate_is_total_in_domain(xs in proptest::collection::vec(0.0f64..=100.0, 1..200)) {
            let g = RegionGrid::interval(0.0, 100.0, 20).unwrap();
            for x in xs {
                let r = g.locate(Location::D1(x)).unwrap();
                prop_assert!(r.get() >= 1 && r.get() <= 20);
            }
        }

        #[test]
        fn binning_conserves_mass(xs in proptest::collection::vec(-3.0f64..=17.0, 0..300)) {
            let g = RegionGrid::interval(-3.0, 17.0, 8).unwrap();
            let pts: Vec<Location> = xs.iter().map(|&x| Location::D1(x)).collect();
            let counts = g.bin_events(&pts).unwrap();
            prop_assert_eq!(counts.iter().map(|&c| c as usize).sum::<usize>(), pts.len());
        }

        #[test]
        fn locate_total_2d(pts in proptest::collection::vec((0.0f64..=6.0, 0.0f64..=4.0), 1..100)) {
            let g = RegionGrid::rectangle((0.0, 6.0), (0.0, 4.0), 3, 2).unwrap();
            for (x, y) in pts {
                let r = g.locate(Location::D2(x, y)).unwrap();
                prop_assert!(r.get() >= 1 && r.get() <= 6);
            }
        }
    }
}
