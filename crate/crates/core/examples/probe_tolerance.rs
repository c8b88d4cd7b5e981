//! Scratch comparison of admitted sets under tight vs loose solver
//! tolerances.

use pointcover::basis::{SpatialBasis, SplineSpec};
use pointcover::conformal::{interval_map, ConformalConfig};
use pointcover::dataset::CountDataset;
use pointcover::grid::RegionGrid;
use pointcover::solver::SolverConfig;
use pointcover::synth::{CountFamily, TruthModel};
use std::time::Instant;

fn main() {
    let grid = RegionGrid::interval(0.0, 100.0, 20).unwrap();
    let basis = SpatialBasis::new(grid.clone(), SplineSpec::covering(&grid)).unwrap();
    let family = CountFamily::NegativeBinomial { failures: 100.0 };

    for (name, spec) in pointcover::eval::standard_processes() {
        let truth = TruthModel::from_intensity(&spec, &grid, family).unwrap();
        let regions: Vec<_> = grid.region_ids().collect();
        for seed in [5u64, 6] {
            let counts = truth.sample_counts(&regions, seed);
            let data = CountDataset::new(regions.clone(), counts).unwrap();
            let conf = ConformalConfig::default();

            let tight = SolverConfig::default();
            let start = Instant::now();
            let map_tight = interval_map(&data, &basis, &tight, &conf).unwrap();
            let t_tight = start.elapsed();

            let loose = SolverConfig {
                epsilon_outer: 1e-4,
                epsilon_inner: 1e-5,
                max_inner: 25,
                ..SolverConfig::default()
            };
            let start = Instant::now();
            let map_loose = interval_map(&data, &basis, &loose, &conf).unwrap();
            let t_loose = start.elapsed();

            let mut mismatched_regions = 0;
            let mut admitted_diff = 0usize;
            for (a, b) in map_tight.iter().zip(&map_loose) {
                if a.admitted != b.admitted {
                    mismatched_regions += 1;
                    let inter = a
                        .admitted
                        .iter()
                        .filter(|c| b.admitted.contains(c))
                        .count();
                    admitted_diff += a.admitted.len() + b.admitted.len() - 2 * inter;
                }
            }
            let total_admitted: usize = map_tight.iter().map(|i| i.admitted.len()).sum();
            println!(
                "{name} seed {seed}: tight {t_tight:.2?} loose {t_loose:.2?} | regions differing {mismatched_regions}/20, symmetric diff {admitted_diff} of {total_admitted} admitted",
            );
        }
    }
}
