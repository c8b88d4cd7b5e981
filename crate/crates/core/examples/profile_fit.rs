//! Scratch profiler for individual solver fits.

use pointcover::basis::{SpatialBasis, SplineSpec};
use pointcover::dataset::CountDataset;
use pointcover::grid::RegionGrid;
use pointcover::solver::{fit, SolverConfig, WeightsMode};
use pointcover::synth::{CountFamily, IntensitySpec, TruthModel};
use std::time::Instant;

fn main() {
    let grid = RegionGrid::interval(0.0, 100.0, 20).unwrap();
    let basis = SpatialBasis::new(grid.clone(), SplineSpec::covering(&grid)).unwrap();
    let spec = IntensitySpec::standard_sinusoid();
    let truth = TruthModel::from_intensity(
        &spec,
        &grid,
        CountFamily::NegativeBinomial { failures: 100.0 },
    )
    .unwrap();
    let regions: Vec<_> = grid.region_ids().collect();
    let counts = truth.sample_counts(&regions, 99);
    println!("counts: {counts:?} max {}", counts.iter().max().unwrap());
    let data = CountDataset::new(regions.clone(), counts).unwrap();

    for (label, config) in [
        ("default rms", SolverConfig::default()),
        (
            "zero weights",
            SolverConfig {
                weights_mode: WeightsMode::Zero,
                ..SolverConfig::default()
            },
        ),
        (
            "loose",
            SolverConfig {
                epsilon_outer: 1e-4,
                epsilon_inner: 1e-6,
                max_inner: 1000,
                ..SolverConfig::default()
            },
        ),
    ] {
        let start = Instant::now();
        let model = fit(&data, &basis, &config).unwrap();
        let d = model.diagnostics();
        println!(
            "{label}: outers {}, sweeps {}, converged {}, obj {:.6}, ceiling {}, {:.2?}",
            d.outer_iterations,
            d.inner_sweeps,
            d.converged,
            d.final_objective,
            d.count_ceiling,
            start.elapsed()
        );
    }

    // candidate-style augmented refit with an extreme candidate
    let augmented = data.with_observation(pointcover::grid::RegionId::new(3), 80);
    let config = SolverConfig {
        count_ceiling: Some(100),
        ..SolverConfig::default()
    };
    let start = Instant::now();
    let model = fit(&augmented, &basis, &config).unwrap();
    let d = model.diagnostics();
    println!(
        "augmented extreme: outers {}, sweeps {}, converged {}, {:.2?}",
        d.outer_iterations,
        d.inner_sweeps,
        d.converged,
        start.elapsed()
    );
}
