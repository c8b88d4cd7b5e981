//! Scratch probe: coverage under random (multinomial) region sampling
//! instead of the balanced one-draw-per-region convention.

use pointcover::basis::{SpatialBasis, SplineSpec};
use pointcover::conformal::{interval_map, ConformalConfig};
use pointcover::dataset::CountDataset;
use pointcover::grid::{RegionGrid, RegionId};
use pointcover::solver::SolverConfig;
use pointcover::synth::{stream_rng, CountFamily, TruthModel};
use rand::Rng;
use std::time::Instant;

fn main() {
    let reps: usize = std::env::args()
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(30);
    let n_train: usize = std::env::args()
        .nth(2)
        .and_then(|v| v.parse().ok())
        .unwrap_or(20);
    let grid = RegionGrid::interval(0.0, 100.0, 20).unwrap();
    let basis = SpatialBasis::new(grid.clone(), SplineSpec::covering(&grid)).unwrap();
    let family = CountFamily::NegativeBinomial { failures: 100.0 };

    for (name, spec) in pointcover::eval::standard_processes() {
        let truth = TruthModel::from_intensity(&spec, &grid, family).unwrap();
        let start = Instant::now();
        let mut hits = 0usize;
        let mut draws = 0usize;
        for rep in 0..reps {
            let mut rng = stream_rng(77, rep as u64);
            let regions: Vec<RegionId> =
                (0..n_train).map(|_| RegionId::new(rng.gen_range(1..=20))).collect();
            let counts = truth.sample_counts(&regions, 1_000_000 + rep as u64);
            let data = CountDataset::new(regions, counts).unwrap();
            let solver_config = SolverConfig {
                epsilon_outer: 1e-4,
                epsilon_inner: 1e-5,
                max_inner: 4,
                ..SolverConfig::default()
            };
            let map = interval_map(
                &data,
                &basis,
                &solver_config,
                &ConformalConfig::default(),
            )
            .unwrap();
            // one fresh uniform (r, y) per training point, matching the
            // exchangeable-draw protocol
            for k in 0..n_train {
                let region = RegionId::new(rng.gen_range(1..=20));
                let y = truth.sample_counts(&[region], 2_000_000 + (rep * 1000 + k) as u64)[0];
                draws += 1;
                if map[region.index()].contains_count(y) {
                    hits += 1;
                }
            }
        }
        println!(
            "{name}: n={n_train} coverage {:.4} ({hits}/{draws}) {:.1?}",
            hits as f64 / draws as f64,
            start.elapsed()
        );
    }
}
