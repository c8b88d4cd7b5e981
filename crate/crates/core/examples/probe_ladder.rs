//! Scratch ladder over experiment solver tolerances.

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
    let conf = ConformalConfig::default();

    for (name, spec) in pointcover::eval::standard_processes() {
        let truth = TruthModel::from_intensity(&spec, &grid, family).unwrap();
        let regions: Vec<_> = grid.region_ids().collect();
        let counts = truth.sample_counts(&regions, 5);
        let data = CountDataset::new(regions.clone(), counts).unwrap();

        let reference = SolverConfig {
            epsilon_outer: 1e-4,
            epsilon_inner: 1e-5,
            max_inner: 25,
            ..SolverConfig::default()
        };
        let start = Instant::now();
        let map_ref = interval_map(&data, &basis, &reference, &conf).unwrap();
        let t_ref = start.elapsed();
        let total: usize = map_ref.iter().map(|i| i.admitted.len()).sum();
        println!("{name}: reference (25 sweeps) {t_ref:.2?}, {total} admitted");

        for (label, eo, mi) in [
            ("inner8", 1e-4, 8usize),
            ("inner4", 1e-4, 4),
            ("inner2", 1e-4, 2),
            ("inner1", 1e-4, 1),
            ("inner2-eo3e4", 3e-4, 2),
        ] {
            let cfg = SolverConfig {
                epsilon_outer: eo,
                epsilon_inner: 1e-5,
                max_inner: mi,
                ..SolverConfig::default()
            };
            let start = Instant::now();
            let map = interval_map(&data, &basis, &cfg, &conf).unwrap();
            let t = start.elapsed();
            let mut diff = 0usize;
            for (a, b) in map_ref.iter().zip(&map) {
                let inter = a.admitted.iter().filter(|c| b.admitted.contains(c)).count();
                diff += a.admitted.len() + b.admitted.len() - 2 * inter;
            }
            println!("  {label}: {t:.2?}, symmetric diff {diff}/{total}");
        }
    }
}
