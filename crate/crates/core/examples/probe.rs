//! Scratch probe for experiment calibration; run with --release.

use pointcover::eval::{
    self, coverage_experiment, size_comparison, theorem_check, ExperimentConfig, TheoremConfig,
};
use pointcover::grid::RegionGrid;
use pointcover::synth::{CountFamily, TruthModel};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("coverage");
    let reps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(50);

    let grid = RegionGrid::interval(0.0, 100.0, 20).unwrap();
    let family = CountFamily::NegativeBinomial { failures: 100.0 };

    match which {
        "coverage" => {
            for (name, spec) in eval::standard_processes() {
                let truth = TruthModel::from_intensity(&spec, &grid, family).unwrap();
                let mask: Vec<(f64, f64)> = std::env::args()
                    .nth(3)
                    .map(|m| {
                        let parts: Vec<f64> =
                            m.split(':').map(|v| v.parse().unwrap()).collect();
                        vec![(parts[0], parts[1])]
                    })
                    .unwrap_or_default();
                let max_inner: usize = std::env::args()
                    .nth(4)
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(4);
                let support: Option<f64> = std::env::args().nth(5).and_then(|v| v.parse().ok());
                let cfg = ExperimentConfig {
                    repetitions: reps,
                    seed: 20_240_817,
                    mask,
                    solver_max_inner: max_inner,
                    support,
                    ..ExperimentConfig::default()
                };
                let start = Instant::now();
                let outcome = coverage_experiment(&truth, &grid, &cfg).unwrap();
                println!(
                    "{name}: coverage {:.4} ({} / {}), empties {}, nonconv {}, {:.2?}",
                    outcome.coverage,
                    outcome.hits,
                    outcome.draws,
                    outcome.empty_intervals,
                    outcome.nonconverged_candidates,
                    start.elapsed()
                );
            }
        }
        "sizes" => {
            for (name, spec) in eval::standard_processes() {
                let truth = TruthModel::from_intensity(&spec, &grid, family).unwrap();
                let cfg = ExperimentConfig {
                    repetitions: reps,
                    seed: 7,
                    mask: vec![(50.0, 90.0)],
                    ..ExperimentConfig::default()
                };
                let start = Instant::now();
                let out = size_comparison(&truth, &grid, &cfg).unwrap();
                println!(
                    "{name}: masked ratio {:?}, reg coverage {:.3}, unreg coverage {:.3}, reg empties {}, unreg nonconv {}, {:.2?}",
                    out.masked_ratio,
                    out.regularized.coverage,
                    out.unregularized.coverage,
                    out.regularized.empty_intervals,
                    out.unregularized.nonconverged_candidates,
                    start.elapsed()
                );
            }
        }
        "theorem" => {
            let (tgrid, support, truths) = eval::standard_theorem_setup();
            for (name, truth) in truths {
                let cfg = TheoremConfig {
                    gamma: 0.1,
                    count_ceiling: 10,
                    sample_sizes: vec![2_000, 10_000, 40_000],
                    seeds: reps,
                    seed: 99,
                    support: Some(support),
                };
                let start = Instant::now();
                let points = theorem_check(&truth, &tgrid, &cfg).unwrap();
                for p in &points {
                    println!(
                        "{name} n {}: bound {:.4}, rate {:.4}, oracle risk {:.5}, slack {:.4}, w_o {:.4}, vacuous {}, exceeded {}",
                        p.n, p.bound_probability, p.empirical_rate, p.oracle_risk, p.slack, p.min_weight, p.vacuous, p.ceiling_exceeded
                    );
                }
                println!("{name} elapsed {:.2?}", start.elapsed());
            }
        }
        other => eprintln!("unknown probe {other}"),
    }
}
