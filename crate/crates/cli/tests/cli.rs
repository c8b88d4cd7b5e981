//! End-to-end tests of the command-line tool: CSV ingestion, output
//! formats, sidecar round-trips, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_pointcover")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn out_path(dir: &Path, name: &str) -> (PathBuf, String) {
    let path = dir.join(name);
    (path.clone(), path.to_str().unwrap().to_string())
}

#[test]
fn synth_is_reproducible_and_fit_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (synth_prefix, synth_str) = out_path(dir.path(), "events");

    let status = run(&[
        "synth",
        "--process",
        "exp-decay",
        "--grid",
        "0:100:20",
        "--mode",
        "points",
        "--seed",
        "42",
        "--out",
        &synth_str,
    ]);
    assert!(status.status.success(), "{status:?}");
    let points_csv = read(&synth_prefix.with_extension("csv"));
    assert!(points_csv.starts_with("x\n"));
    assert!(points_csv.lines().count() > 100);

    // rerun from the sidecar reproduces the file byte for byte
    let sidecar = synth_prefix.with_extension("run.json");
    let first = points_csv.clone();
    let rerun = run(&["synth", "--config", sidecar.to_str().unwrap()]);
    assert!(rerun.status.success());
    assert_eq!(first, read(&synth_prefix.with_extension("csv")));

    // different seed changes the output
    let (other_prefix, other_str) = out_path(dir.path(), "events2");
    run(&[
        "synth",
        "--process",
        "exp-decay",
        "--grid",
        "0:100:20",
        "--mode",
        "points",
        "--seed",
        "43",
        "--out",
        &other_str,
    ]);
    assert_ne!(first, read(&other_prefix.with_extension("csv")));

    // fit the generated points
    let (fit_prefix, fit_str) = out_path(dir.path(), "fitted");
    let status = run(&[
        "fit",
        "--input",
        synth_prefix.with_extension("csv").to_str().unwrap(),
        "--grid",
        "0:100:20",
        "--gamma",
        "0.4",
        "--out",
        &fit_str,
    ]);
    assert!(status.status.success(), "{status:?}");
    let predictions = read(&fit_prefix.with_extension("predictions.csv"));
    assert!(predictions.starts_with("region,center,mean,intensity\n"));
    assert_eq!(predictions.lines().count(), 21);
    // intensity = mean / area, area = 5
    let first_row: Vec<&str> = predictions.lines().nth(1).unwrap().split(',').collect();
    let mean: f64 = first_row[2].parse().unwrap();
    let intensity: f64 = first_row[3].parse().unwrap();
    assert!((intensity - mean / 5.0).abs() < 1e-12);

    let model_json = read(&fit_prefix.with_extension("model.json"));
    let model = pointcover::model::FittedModel::from_json_str(&model_json).unwrap();
    assert_eq!(model.grid().region_count(), 20);
    assert_eq!(model.gamma(), 0.4);

    // the decaying process puts its largest intensity in region 1:
    // lambda integrates to 47.6 over [0,5], so the estimate should sit in a
    // generous Monte-Carlo band around 47.6/5
    let intensity_1: f64 = predictions
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!(
        (5.0..=14.0).contains(&intensity_1),
        "region-1 intensity {intensity_1} outside the expected band"
    );
}

#[test]
fn fit_counts_single_region_intensity() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("counts.csv");
    write(&input, "region,count\n1,6\n1,2\n");
    let (prefix, prefix_str) = out_path(dir.path(), "single");
    let status = run(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--grid",
        "0:2:1",
        "--weights",
        "zero",
        "--out",
        &prefix_str,
    ]);
    assert!(status.status.success(), "{status:?}");
    let predictions = read(&prefix.with_extension("predictions.csv"));
    let row: Vec<&str> = predictions.lines().nth(1).unwrap().split(',').collect();
    let mean: f64 = row[2].parse().unwrap();
    let intensity: f64 = row[3].parse().unwrap();
    // unregularized single-region fit: mean = average count, area = 2
    assert!((mean - 4.0).abs() < 1e-4, "mean {mean}");
    assert!((intensity - 2.0).abs() < 1e-4, "intensity {intensity}");
}

#[test]
fn interval_outputs_and_masked_widths() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("counts.csv");
    // 8 regions, constant-ish counts, mask the middle
    write(
        &input,
        "region,count\n1,4\n2,5\n3,4\n4,5\n5,4\n6,5\n7,4\n8,5\n",
    );
    let (prefix, prefix_str) = out_path(dir.path(), "bands");
    let status = run(&[
        "interval",
        "--input",
        input.to_str().unwrap(),
        "--grid",
        "0:80:8",
        "--alpha",
        "0.2",
        "--mask",
        "30:50",
        "--out",
        &prefix_str,
    ]);
    assert!(status.status.success(), "{status:?}");
    let csv = read(&prefix.with_extension("intervals.csv"));
    assert!(csv.starts_with("region,center,lo,hi,contiguous,n_candidates_admitted\n"));
    assert_eq!(csv.lines().count(), 9);

    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    // masked regions are 4 and 5 (centers 35, 45)
    let width = |row: &Vec<String>| -> f64 {
        row[3].parse::<f64>().unwrap() - row[2].parse::<f64>().unwrap()
    };
    let masked_width = (width(&rows[3]) + width(&rows[4])) / 2.0;
    let observed_width = (width(&rows[0]) + width(&rows[7])) / 2.0;
    assert!(
        masked_width >= observed_width,
        "masked {masked_width} vs observed {observed_width}"
    );

    // observed-region intervals contain the observed intensity c / area
    let hi: f64 = rows[0][3].parse().unwrap();
    let lo: f64 = rows[0][2].parse().unwrap();
    assert!(lo <= 0.4 && 0.4 <= hi, "interval [{lo}, {hi}] misses 4/10");

    // byte-for-byte rerun from the sidecar
    let first = csv.clone();
    let sidecar = prefix.with_extension("run.json");
    let rerun = run(&["interval", "--config", sidecar.to_str().unwrap()]);
    assert!(rerun.status.success());
    assert_eq!(first, read(&prefix.with_extension("intervals.csv")));
}

#[test]
fn malformed_inputs_are_reported_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    write(&input, "region,count\n1,4\n2,notanumber\n");
    let (_, prefix_str) = out_path(dir.path(), "bad");
    let output = run(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--grid",
        "0:10:2",
        "--out",
        &prefix_str,
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");

    // empty file: header only
    let empty = dir.path().join("empty.csv");
    write(&empty, "x\n");
    let output = run(&[
        "fit",
        "--input",
        empty.to_str().unwrap(),
        "--grid",
        "0:10:2",
        "--out",
        &prefix_str,
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no data"), "stderr: {stderr}");

    // unknown header
    let odd = dir.path().join("odd.csv");
    write(&odd, "foo,bar\n1,2\n");
    let output = run(&[
        "fit",
        "--input",
        odd.to_str().unwrap(),
        "--grid",
        "0:10:2",
        "--out",
        &prefix_str,
    ]);
    assert!(!output.status.success());
}

#[test]
fn two_dimensional_points_fit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points2d.csv");
    let mut csv = String::from("x,y_coord\n");
    for i in 0..40 {
        csv.push_str(&format!("{},{}\n", (i % 8) as f64 + 0.5, (i % 4) as f64 + 0.5));
    }
    write(&input, &csv);
    let (prefix, prefix_str) = out_path(dir.path(), "planar");
    let status = run(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--grid",
        "0:8:4x0:4:2",
        "--support",
        "6",
        "--out",
        &prefix_str,
    ]);
    assert!(status.status.success(), "{status:?}");
    let predictions = read(&prefix.with_extension("predictions.csv"));
    assert!(predictions.starts_with("region,center_x,center_y,mean,intensity\n"));
    assert_eq!(predictions.lines().count(), 9);
}

#[test]
fn reproduce_small_table1_run() {
    let dir = tempfile::tempdir().unwrap();
    let (prefix, prefix_str) = out_path(dir.path(), "t1");
    let output = run(&[
        "reproduce",
        "--experiment",
        "table1",
        "--reps",
        "2",
        "--seed",
        "11",
        "--out",
        &prefix_str,
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let coverage = read(&prefix.with_extension("coverage.csv"));
    assert!(coverage.starts_with("process,coverage\n"));
    assert_eq!(coverage.lines().count(), 4);
    for line in coverage.lines().skip(1) {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&value));
    }
    let report = read(&prefix.with_extension("report.json"));
    assert!(report.contains("\"coverage\""));
}

#[test]
fn reproduce_small_theorem_run() {
    let dir = tempfile::tempdir().unwrap();
    let (prefix, prefix_str) = out_path(dir.path(), "rep");

    // shrink the run via a config file; flags still override reps
    let config = serde_json::json!({
        "command": "reproduce",
        "experiment": "theorem",
        "experiment_config": {
            "gamma": 0.499, "alpha": 0.2, "support": null, "repetitions": 2,
            "seed": 1, "count_ceiling": null, "mask": [], "draws_per_region": 1,
            "weights_mode": "rms", "comparator_max_outer": 120,
            "solver_epsilon_outer": 5e-3, "solver_epsilon_inner": 1e-5,
            "solver_max_inner": 12, "solver_max_outer": 800
        },
        "theorem_config": {
            "gamma": 0.3, "count_ceiling": 12, "sample_sizes": [40],
            "seeds": 3, "seed": 5, "support": null
        },
        "out": prefix_str
    });
    let config_path = dir.path().join("cfg.json");
    write(&config_path, &config.to_string());

    let output = run(&["reproduce", "--config", config_path.to_str().unwrap()]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report = read(&prefix.with_extension("report.json"));
    assert!(report.contains("\"theorem\""));
    let nb_csv = read(&prefix.with_extension("theorem.negative_binomial.csv"));
    assert!(nb_csv.starts_with("n,bound_probability,empirical_rate,holds\n"));
    assert_eq!(nb_csv.lines().count(), 2);
}
