//! Scratch inspection of fitted means and residual structure under
//! different solver effort levels.

use pointcover::basis::{SpatialBasis, SplineSpec};
use pointcover::dataset::CountDataset;
use pointcover::grid::RegionGrid;
use pointcover::solver::{fit, SolverConfig};
use pointcover::synth::{self, CountFamily, TruthModel};
use std::time::Instant;

fn main() {
    let grid = RegionGrid::interval(0.0, 100.0, 20).unwrap();
    let basis = SpatialBasis::new(grid.clone(), SplineSpec::covering(&grid)).unwrap();
    let spec = pointcover::synth::IntensitySpec::standard_gauss_peak();
    let truth = TruthModel::from_intensity(
        &spec,
        &grid,
        CountFamily::NegativeBinomial { failures: 100.0 },
    )
    .unwrap();
    println!(
        "true means: {:?}",
        truth.means().iter().map(|m| (m * 10.0).round() / 10.0).collect::<Vec<_>>()
    );

    let observed = synth::unmasked_region_ids(&grid, &[(50.0, 90.0)]).unwrap();
    let counts = truth.sample_counts(&observed, 123);
    println!("observed regions: {:?}", observed.iter().map(|r| r.get()).collect::<Vec<_>>());
    println!("counts: {counts:?}");
    let data = CountDataset::new(observed.clone(), counts.clone()).unwrap();

    for (label, eps_outer, max_inner, max_outer) in [
        ("inner4", 1e-4, 4usize, 500usize),
        ("inner4-eo1e3", 1e-3, 4, 500),
        ("inner4-eo2e3", 2e-3, 4, 500),
        ("inner8-eo1e3", 1e-3, 8, 500),
        ("inner12", 1e-4, 12, 500),
        ("inner25", 1e-4, 25, 500),
        ("inner50-mo2000", 1e-5, 50, 2000),
        ("tight", 1e-6, 10_000, 500),
    ] {
        let config = SolverConfig {
            epsilon_outer: eps_outer,
            epsilon_inner: 1e-8,
            max_inner,
            max_outer,
            ..SolverConfig::default()
        };
        let start = Instant::now();
        let model = fit(&data, &basis, &config).unwrap();
        let elapsed = start.elapsed();
        let means: Vec<f64> = observed.iter().map(|&r| model.mean(r)).collect();
        let resid: Vec<f64> = counts
            .iter()
            .zip(&means)
            .map(|(&y, &m)| (y as f64 - m).abs())
            .collect();
        println!(
            "{label}: conv {} outers {} sweeps {} {:.1?}\n  fitted: {:?}\n  resid:  {:?}",
            model.diagnostics().converged,
            model.diagnostics().outer_iterations,
            model.diagnostics().inner_sweeps,
            elapsed,
            means.iter().map(|m| (m * 10.0).round() / 10.0).collect::<Vec<_>>(),
            resid.iter().map(|e| (e * 10.0).round() / 10.0).collect::<Vec<_>>()
        );
    }
}
