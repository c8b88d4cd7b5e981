//! Command-line front end: data ingestion, model fitting, conformal
//! interval maps, synthetic data generation, and reproduction of the
//! built-in experiments.
//!
//! Every run writes a `<out>.run.json` sidecar holding the fully resolved
//! configuration; re-running the same subcommand with `--config` on that
//! sidecar reproduces the outputs byte for byte. The exit code is zero only
//! when no per-region or per-repetition error flags were raised.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pointcover::basis::{SpatialBasis, SplineSpec};
use pointcover::conformal::{self, ConformalConfig, RefitWeights};
use pointcover::dataset::CountDataset;
use pointcover::eval::{
    self, coverage_csv, sizes_csv, theorem_csv, ExperimentConfig, ExperimentReport, TheoremConfig,
};
use pointcover::grid::{Location, RegionGrid, RegionId};
use pointcover::solver::{self, SolverConfig, WeightsMode};
use pointcover::synth::{self, CountFamily, IntensitySpec, TruthModel};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pointcover",
    about = "Spatial intensity intervals with distribution-free out-of-sample coverage",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the regularized Poisson model and write per-region predictions
    Fit(FitArgs),
    /// Build conformal intensity intervals for every region
    Interval(IntervalArgs),
    /// Generate synthetic point patterns or per-region counts
    Synth(SynthArgs),
    /// Re-run the built-in synthetic experiments
    Reproduce(ReproduceArgs),
}

// ---------------------------------------------------------------------------
// resolved configurations (serialized into the run sidecar)

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum RunConfig {
    Fit(FitConfig),
    Interval(IntervalConfig),
    Synth(SynthConfig),
    Reproduce(ReproduceConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridAxis {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridSpec {
    axes: Vec<GridAxis>,
}

impl GridSpec {
    fn build(&self) -> Result<RegionGrid> {
        let grid = match self.axes.as_slice() {
            [a] => RegionGrid::interval(a.lo, a.hi, a.count)?,
            [a, b] => {
                RegionGrid::rectangle((a.lo, a.hi), (b.lo, b.hi), a.count, b.count)?
            }
            _ => bail!("grid must have one or two axes"),
        };
        Ok(grid)
    }
}

/// Parses `lo:hi:count`, two axes joined by `x`, e.g. `0:100:20` or
/// `0:1000:22x0:800:19`.
fn parse_grid(text: &str) -> Result<GridSpec> {
    let mut axes = Vec::new();
    for part in text.split('x') {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            bail!("grid axis `{part}` is not of the form lo:hi:count");
        }
        axes.push(GridAxis {
            lo: fields[0].parse().context("grid lower bound")?,
            hi: fields[1].parse().context("grid upper bound")?,
            count: fields[2].parse().context("grid region count")?,
        });
    }
    if axes.is_empty() || axes.len() > 2 {
        bail!("grid must have one or two axes");
    }
    Ok(GridSpec { axes })
}

/// Parses `a:b` pairs joined by commas, e.g. `50:90` or `30:80,160:200`.
fn parse_mask(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut ranges = Vec::new();
    for part in text.split(',') {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 2 {
            bail!("mask range `{part}` is not of the form lo:hi");
        }
        ranges.push((
            fields[0].parse().context("mask lower bound")?,
            fields[1].parse().context("mask upper bound")?,
        ));
    }
    Ok(ranges)
}

fn parse_weights(text: &str) -> Result<WeightsMode> {
    match text {
        "rms" => Ok(WeightsMode::Rms),
        "zero" => Ok(WeightsMode::Zero),
        other => bail!("weights mode must be `rms` or `zero`, got `{other}`"),
    }
}

fn parse_process(text: &str) -> Result<IntensitySpec> {
    match text {
        "exp-decay" => Ok(IntensitySpec::standard_exp_decay()),
        "gauss-peak" => Ok(IntensitySpec::standard_gauss_peak()),
        "sinusoid" => Ok(IntensitySpec::standard_sinusoid()),
        "sqrt-growth" => Ok(IntensitySpec::standard_sqrt_growth()),
        other => bail!(
            "unknown process `{other}` (expected exp-decay, gauss-peak, sinusoid or sqrt-growth)"
        ),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn write_sidecar(out: &Path, config: &RunConfig) -> Result<()> {
    let path = out.with_extension("run.json");
    let text = serde_json::to_string_pretty(config)?;
    std::fs::write(&path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// input CSV

enum InputData {
    Points(Vec<Location>),
    Counts(Vec<(u32, u32)>),
}

fn read_input(path: &Path) -> Result<InputData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .context("reading csv header")?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut line = 1u64;
    match header_refs.as_slice() {
        ["x"] => {
            let mut points = Vec::new();
            for record in reader.records() {
                let record = record?;
                line += 1;
                let x: f64 = record
                    .get(0)
                    .ok_or_else(|| anyhow!("line {line}: missing x"))?
                    .parse()
                    .with_context(|| format!("line {line}: bad x value"))?;
                points.push(Location::D1(x));
            }
            ensure_nonempty(points.len(), path)?;
            Ok(InputData::Points(points))
        }
        ["x", "y_coord"] => {
            let mut points = Vec::new();
            for record in reader.records() {
                let record = record?;
                line += 1;
                let x: f64 = record
                    .get(0)
                    .ok_or_else(|| anyhow!("line {line}: missing x"))?
                    .parse()
                    .with_context(|| format!("line {line}: bad x value"))?;
                let y: f64 = record
                    .get(1)
                    .ok_or_else(|| anyhow!("line {line}: missing y_coord"))?
                    .parse()
                    .with_context(|| format!("line {line}: bad y_coord value"))?;
                points.push(Location::D2(x, y));
            }
            ensure_nonempty(points.len(), path)?;
            Ok(InputData::Points(points))
        }
        ["region", "count"] => {
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record?;
                line += 1;
                let region: u32 = record
                    .get(0)
                    .ok_or_else(|| anyhow!("line {line}: missing region"))?
                    .parse()
                    .with_context(|| format!("line {line}: bad region index"))?;
                let count: u32 = record
                    .get(1)
                    .ok_or_else(|| anyhow!("line {line}: missing count"))?
                    .parse()
                    .with_context(|| format!("line {line}: bad count"))?;
                rows.push((region, count));
            }
            ensure_nonempty(rows.len(), path)?;
            Ok(InputData::Counts(rows))
        }
        other => bail!(
            "unrecognized csv header {:?}; expected `x`, `x,y_coord`, or `region,count`",
            other
        ),
    }
}

fn ensure_nonempty(rows: usize, path: &Path) -> Result<()> {
    if rows == 0 {
        bail!("no data: {} has a header but no rows", path.display());
    }
    Ok(())
}

fn build_dataset(input: InputData, grid: &RegionGrid, mask: &[(f64, f64)]) -> Result<CountDataset> {
    let data = match input {
        InputData::Points(points) => {
            let counts = grid.bin_events(&points)?;
            CountDataset::from_counts_per_region(grid, &counts)?
        }
        InputData::Counts(rows) => {
            let r_total = grid.region_count();
            let mut regions = Vec::with_capacity(rows.len());
            let mut counts = Vec::with_capacity(rows.len());
            for (region, count) in rows {
                if region < 1 || region as usize > r_total {
                    bail!("region {region} out of range 1..={r_total}");
                }
                regions.push(RegionId::new(region as usize));
                counts.push(count);
            }
            CountDataset::new(regions, counts)?
        }
    };
    if mask.is_empty() {
        return Ok(data);
    }
    Ok(synth::mask_regions(&data, grid, mask)?)
}

fn center_header(grid: &RegionGrid) -> &'static str {
    if grid.dimension() == 1 {
        "center"
    } else {
        "center_x,center_y"
    }
}

fn center_cell(grid: &RegionGrid, r: RegionId) -> String {
    match grid.center(r) {
        Location::D1(x) => format!("{x}"),
        Location::D2(x, y) => format!("{x},{y}"),
    }
}

// ---------------------------------------------------------------------------
// fit

#[derive(Args)]
struct FitArgs {
    /// Input CSV: `x` / `x,y_coord` point rows or `region,count` rows
    #[arg(long)]
    input: Option<PathBuf>,
    /// Grid as lo:hi:count, 2D axes joined by `x`
    #[arg(long)]
    grid: Option<String>,
    /// Spline support in spatial units (default: domain diameter)
    #[arg(long)]
    support: Option<f64>,
    /// Penalty exponent in (0, 0.5) (default 0.4)
    #[arg(long)]
    gamma: Option<f64>,
    /// Count ceiling (default: twice the maximum observed count)
    #[arg(long)]
    ymax: Option<u32>,
    /// Drop observations inside these ranges, e.g. 30:80,160:200 (1D only)
    #[arg(long)]
    mask: Option<String>,
    /// Regularization weights: rms (default) or zero
    #[arg(long)]
    weights: Option<String>,
    /// Output prefix; writes <out>.model.json, <out>.predictions.csv,
    /// <out>.run.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config (a previous run sidecar); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitConfig {
    input: PathBuf,
    grid: GridSpec,
    support: Option<f64>,
    gamma: f64,
    ymax: Option<u32>,
    #[serde(default)]
    mask: Vec<(f64, f64)>,
    weights: WeightsMode,
    out: PathBuf,
}

fn resolve_fit(args: FitArgs) -> Result<FitConfig> {
    let base = match &args.config {
        Some(path) => match load_config(path)? {
            RunConfig::Fit(cfg) => Some(cfg),
            _ => bail!("config {} is not a fit config", path.display()),
        },
        None => None,
    };
    Ok(FitConfig {
        input: args
            .input
            .or_else(|| base.as_ref().map(|b| b.input.clone()))
            .ok_or_else(|| anyhow!("--input is required"))?,
        grid: match args.grid {
            Some(text) => parse_grid(&text)?,
            None => base
                .as_ref()
                .map(|b| b.grid.clone())
                .ok_or_else(|| anyhow!("--grid is required"))?,
        },
        support: args.support.or(base.as_ref().and_then(|b| b.support)),
        gamma: args
            .gamma
            .or(base.as_ref().map(|b| b.gamma))
            .unwrap_or(0.4),
        ymax: args.ymax.or(base.as_ref().and_then(|b| b.ymax)),
        mask: match args.mask {
            Some(text) => parse_mask(&text)?,
            None => base.as_ref().map(|b| b.mask.clone()).unwrap_or_default(),
        },
        weights: match args.weights {
            Some(text) => parse_weights(&text)?,
            None => base
                .as_ref()
                .map(|b| b.weights)
                .unwrap_or(WeightsMode::Rms),
        },
        out: args
            .out
            .or_else(|| base.as_ref().map(|b| b.out.clone()))
            .ok_or_else(|| anyhow!("--out is required"))?,
    })
}

fn cmd_fit(config: FitConfig) -> Result<usize> {
    let grid = config.grid.build()?;
    let data = build_dataset(read_input(&config.input)?, &grid, &config.mask)?;
    let spec = match config.support {
        Some(s) => SplineSpec::new(s),
        None => SplineSpec::covering(&grid),
    };
    let basis = SpatialBasis::new(grid.clone(), spec)?;
    let solver_config = SolverConfig {
        gamma: config.gamma,
        count_ceiling: config.ymax,
        weights_mode: config.weights,
        ..SolverConfig::default()
    };
    let model = solver::fit(&data, &basis, &solver_config)?;
    let diag = model.diagnostics();
    println!(
        "fit: {} observations, {} regions, {} outer iterations, converged {}",
        data.n(),
        grid.region_count(),
        diag.outer_iterations,
        diag.converged
    );

    let mut csv = format!("region,{},mean,intensity\n", center_header(&grid));
    let area = grid.region_area();
    for r in grid.region_ids() {
        let mean = model.mean(r);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r,
            center_cell(&grid, r),
            mean,
            mean / area
        ));
    }
    write_output(&config.out.with_extension("model.json"), &model.to_json_string())?;
    write_output(&config.out.with_extension("predictions.csv"), &csv)?;
    let flags = usize::from(!diag.converged);
    let out = config.out.clone();
    write_sidecar(&out, &RunConfig::Fit(config))?;
    Ok(flags)
}

// ---------------------------------------------------------------------------
// interval

#[derive(Args)]
struct IntervalArgs {
    /// Input CSV: `x` / `x,y_coord` point rows or `region,count` rows
    #[arg(long)]
    input: Option<PathBuf>,
    /// Grid as lo:hi:count, 2D axes joined by `x`
    #[arg(long)]
    grid: Option<String>,
    /// Spline support in spatial units (default: domain diameter)
    #[arg(long)]
    support: Option<f64>,
    /// Penalty exponent in (0, 0.5) (default 0.4)
    #[arg(long)]
    gamma: Option<f64>,
    /// Significance level in (0, 1) (default 0.2)
    #[arg(long)]
    alpha: Option<f64>,
    /// Candidate ceiling (default: twice the maximum observed count)
    #[arg(long)]
    ymax: Option<u32>,
    /// Drop observations inside these ranges (1D only)
    #[arg(long)]
    mask: Option<String>,
    /// Output prefix; writes <out>.intervals.csv and <out>.run.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config (a previous run sidecar); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IntervalConfig {
    input: PathBuf,
    grid: GridSpec,
    support: Option<f64>,
    gamma: f64,
    alpha: f64,
    ymax: Option<u32>,
    #[serde(default)]
    mask: Vec<(f64, f64)>,
    #[serde(default = "default_refit_weights")]
    refit_weights: RefitWeights,
    /// Refit tolerances; conformal ranks are insensitive to the last
    /// digits of each fit, so these default looser than the solver's own
    /// defaults.
    #[serde(default = "default_interval_epsilon_outer")]
    epsilon_outer: f64,
    #[serde(default = "default_interval_epsilon_inner")]
    epsilon_inner: f64,
    #[serde(default = "default_interval_max_inner")]
    max_inner: usize,
    out: PathBuf,
}

fn default_refit_weights() -> RefitWeights {
    RefitWeights::Recompute
}

fn default_interval_epsilon_outer() -> f64 {
    5e-3
}

fn default_interval_epsilon_inner() -> f64 {
    1e-5
}

fn default_interval_max_inner() -> usize {
    12
}

fn resolve_interval(args: IntervalArgs) -> Result<IntervalConfig> {
    let base = match &args.config {
        Some(path) => match load_config(path)? {
            RunConfig::Interval(cfg) => Some(cfg),
            _ => bail!("config {} is not an interval config", path.display()),
        },
        None => None,
    };
    Ok(IntervalConfig {
        input: args
            .input
            .or_else(|| base.as_ref().map(|b| b.input.clone()))
            .ok_or_else(|| anyhow!("--input is required"))?,
        grid: match args.grid {
            Some(text) => parse_grid(&text)?,
            None => base
                .as_ref()
                .map(|b| b.grid.clone())
                .ok_or_else(|| anyhow!("--grid is required"))?,
        },
        support: args.support.or(base.as_ref().and_then(|b| b.support)),
        gamma: args
            .gamma
            .or(base.as_ref().map(|b| b.gamma))
            .unwrap_or(0.4),
        alpha: args
            .alpha
            .or(base.as_ref().map(|b| b.alpha))
            .unwrap_or(0.2),
        ymax: args.ymax.or(base.as_ref().and_then(|b| b.ymax)),
        mask: match args.mask {
            Some(text) => parse_mask(&text)?,
            None => base.as_ref().map(|b| b.mask.clone()).unwrap_or_default(),
        },
        refit_weights: base
            .as_ref()
            .map(|b| b.refit_weights)
            .unwrap_or_else(default_refit_weights),
        epsilon_outer: base
            .as_ref()
            .map(|b| b.epsilon_outer)
            .unwrap_or_else(default_interval_epsilon_outer),
        epsilon_inner: base
            .as_ref()
            .map(|b| b.epsilon_inner)
            .unwrap_or_else(default_interval_epsilon_inner),
        max_inner: base
            .as_ref()
            .map(|b| b.max_inner)
            .unwrap_or_else(default_interval_max_inner),
        out: args
            .out
            .or_else(|| base.as_ref().map(|b| b.out.clone()))
            .ok_or_else(|| anyhow!("--out is required"))?,
    })
}

fn cmd_interval(config: IntervalConfig) -> Result<usize> {
    let grid = config.grid.build()?;
    let data = build_dataset(read_input(&config.input)?, &grid, &config.mask)?;
    let spec = match config.support {
        Some(s) => SplineSpec::new(s),
        None => SplineSpec::covering(&grid),
    };
    let basis = SpatialBasis::new(grid.clone(), spec)?;
    let solver_config = SolverConfig {
        gamma: config.gamma,
        epsilon_outer: config.epsilon_outer,
        epsilon_inner: config.epsilon_inner,
        max_inner: config.max_inner,
        ..SolverConfig::default()
    };
    let conformal_config = ConformalConfig {
        alpha: config.alpha,
        count_ceiling: config.ymax,
        refit_weights: config.refit_weights,
    };
    let map = conformal::interval_map(&data, &basis, &solver_config, &conformal_config)?;

    let mut csv = format!(
        "region,{},lo,hi,contiguous,n_candidates_admitted\n",
        center_header(&grid)
    );
    let mut empty = 0usize;
    let mut nonconverged = 0usize;
    for interval in &map {
        let lo = interval.lo().map(|v| v.to_string()).unwrap_or_default();
        let hi = interval.hi().map(|v| v.to_string()).unwrap_or_default();
        if interval.is_empty() {
            empty += 1;
        }
        nonconverged += interval.nonconverged_candidates;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            interval.region,
            center_cell(&grid, interval.region),
            lo,
            hi,
            interval.contiguous(),
            interval.admitted.len()
        ));
    }
    write_output(&config.out.with_extension("intervals.csv"), &csv)?;
    println!(
        "interval: {} regions, {} empty, {} refits hit the iteration cap",
        map.len(),
        empty,
        nonconverged
    );
    let flags = empty + nonconverged;
    let out = config.out.clone();
    write_sidecar(&out, &RunConfig::Interval(config))?;
    Ok(flags)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// Built-in process: exp-decay, gauss-peak, sinusoid, sqrt-growth
    #[arg(long)]
    process: Option<String>,
    /// Grid as lo:hi:count (1D)
    #[arg(long)]
    grid: Option<String>,
    /// Output kind: points (event locations) or counts (per-region draws)
    #[arg(long)]
    mode: Option<String>,
    /// Count family for counts mode: poisson or nb (default poisson)
    #[arg(long)]
    family: Option<String>,
    /// Negative-binomial failure parameter (default 100)
    #[arg(long)]
    failures: Option<f64>,
    /// Draws per region in counts mode (default 1)
    #[arg(long)]
    draws: Option<usize>,
    /// RNG seed (default 1)
    #[arg(long)]
    seed: Option<u64>,
    /// Exclude these ranges, e.g. 30:80,160:200
    #[arg(long)]
    mask: Option<String>,
    /// Output prefix; writes <out>.csv and <out>.run.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config (a previous run sidecar); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SynthMode {
    Points,
    Counts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SynthConfig {
    process: IntensitySpec,
    grid: GridSpec,
    mode: SynthMode,
    family: CountFamily,
    draws_per_region: usize,
    seed: u64,
    #[serde(default)]
    mask: Vec<(f64, f64)>,
    out: PathBuf,
}

fn resolve_synth(args: SynthArgs) -> Result<SynthConfig> {
    let base = match &args.config {
        Some(path) => match load_config(path)? {
            RunConfig::Synth(cfg) => Some(cfg),
            _ => bail!("config {} is not a synth config", path.display()),
        },
        None => None,
    };
    Ok(SynthConfig {
        process: match args.process {
            Some(text) => parse_process(&text)?,
            None => base
                .as_ref()
                .map(|b| b.process.clone())
                .ok_or_else(|| anyhow!("--process is required"))?,
        },
        grid: match args.grid {
            Some(text) => parse_grid(&text)?,
            None => base
                .as_ref()
                .map(|b| b.grid.clone())
                .ok_or_else(|| anyhow!("--grid is required"))?,
        },
        mode: match args.mode.as_deref() {
            Some("points") => SynthMode::Points,
            Some("counts") => SynthMode::Counts,
            Some(other) => bail!("mode must be `points` or `counts`, got `{other}`"),
            None => base.as_ref().map(|b| b.mode).unwrap_or(SynthMode::Points),
        },
        family: match args.family.as_deref() {
            Some("poisson") => CountFamily::Poisson,
            Some("nb") | Some("negative-binomial") => CountFamily::NegativeBinomial {
                failures: args.failures.unwrap_or(100.0),
            },
            Some(other) => bail!("family must be `poisson` or `nb`, got `{other}`"),
            None => base.as_ref().map(|b| b.family).unwrap_or(CountFamily::Poisson),
        },
        draws_per_region: args
            .draws
            .or(base.as_ref().map(|b| b.draws_per_region))
            .unwrap_or(1),
        seed: args.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(1),
        mask: match args.mask {
            Some(text) => parse_mask(&text)?,
            None => base.as_ref().map(|b| b.mask.clone()).unwrap_or_default(),
        },
        out: args
            .out
            .or_else(|| base.as_ref().map(|b| b.out.clone()))
            .ok_or_else(|| anyhow!("--out is required"))?,
    })
}

fn cmd_synth(config: SynthConfig) -> Result<usize> {
    let grid = config.grid.build()?;
    if grid.dimension() != 1 {
        bail!("synthetic generation supports 1D grids only");
    }
    let (lo, hi) = grid.bounds()[0];
    let csv = match config.mode {
        SynthMode::Points => {
            let mut events = synth::sample_poisson_process(&config.process, (lo, hi), config.seed)?;
            if !config.mask.is_empty() {
                events.retain(|&x| {
                    !config.mask.iter().any(|&(a, b)| x >= a && x <= b)
                });
            }
            let mut csv = String::from("x\n");
            for x in &events {
                csv.push_str(&format!("{x}\n"));
            }
            println!("synth: {} events", events.len());
            csv
        }
        SynthMode::Counts => {
            let truth = TruthModel::from_intensity(&config.process, &grid, config.family)?;
            let observed = synth::unmasked_region_ids(&grid, &config.mask)?;
            if observed.is_empty() {
                bail!("masking removed every region");
            }
            let mut regions = Vec::new();
            for _ in 0..config.draws_per_region {
                regions.extend_from_slice(&observed);
            }
            let counts = truth.sample_counts(&regions, config.seed);
            let mut csv = String::from("region,count\n");
            for (r, c) in regions.iter().zip(&counts) {
                csv.push_str(&format!("{r},{c}\n"));
            }
            println!("synth: {} count rows", regions.len());
            csv
        }
    };
    write_output(&config.out.with_extension("csv"), &csv)?;
    let out = config.out.clone();
    write_sidecar(&out, &RunConfig::Synth(config))?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// reproduce

#[derive(Args)]
struct ReproduceArgs {
    /// Experiment: table1, fig3c, or theorem
    #[arg(long)]
    experiment: Option<String>,
    /// Monte-Carlo repetitions (table1/fig3c) or seeds (theorem)
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed (default 1)
    #[arg(long)]
    seed: Option<u64>,
    /// Penalty exponent override
    #[arg(long)]
    gamma: Option<f64>,
    /// Significance level override
    #[arg(long)]
    alpha: Option<f64>,
    /// Mask override for fig3c, e.g. 50:90
    #[arg(long)]
    mask: Option<String>,
    /// Output prefix
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config (a previous run sidecar); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ExperimentKind {
    Table1,
    Fig3c,
    Theorem,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReproduceConfig {
    experiment: ExperimentKind,
    experiment_config: ExperimentConfig,
    theorem_config: TheoremConfig,
    out: PathBuf,
}

fn resolve_reproduce(args: ReproduceArgs) -> Result<ReproduceConfig> {
    let base = match &args.config {
        Some(path) => match load_config(path)? {
            RunConfig::Reproduce(cfg) => Some(cfg),
            _ => bail!("config {} is not a reproduce config", path.display()),
        },
        None => None,
    };
    let experiment = match args.experiment.as_deref() {
        Some("table1") => ExperimentKind::Table1,
        Some("fig3c") => ExperimentKind::Fig3c,
        Some("theorem") => ExperimentKind::Theorem,
        Some(other) => bail!("unknown experiment `{other}`"),
        None => base
            .as_ref()
            .map(|b| b.experiment)
            .ok_or_else(|| anyhow!("--experiment is required"))?,
    };

    let mut experiment_config = base
        .as_ref()
        .map(|b| b.experiment_config.clone())
        .unwrap_or_else(|| match experiment {
            ExperimentKind::Table1 => ExperimentConfig {
                repetitions: 200,
                ..ExperimentConfig::default()
            },
            ExperimentKind::Fig3c => ExperimentConfig {
                repetitions: 50,
                mask: vec![(50.0, 90.0)],
                ..ExperimentConfig::default()
            },
            ExperimentKind::Theorem => ExperimentConfig::default(),
        });
    let mut theorem_config = base
        .as_ref()
        .map(|b| b.theorem_config.clone())
        .unwrap_or_default();

    if let Some(reps) = args.reps {
        experiment_config.repetitions = reps;
        theorem_config.seeds = reps;
    }
    if let Some(seed) = args.seed {
        experiment_config.seed = seed;
        theorem_config.seed = seed;
    }
    if let Some(gamma) = args.gamma {
        experiment_config.gamma = gamma;
        theorem_config.gamma = gamma;
    }
    if let Some(alpha) = args.alpha {
        experiment_config.alpha = alpha;
    }
    if let Some(mask) = args.mask {
        experiment_config.mask = parse_mask(&mask)?;
    }

    Ok(ReproduceConfig {
        experiment,
        experiment_config,
        theorem_config,
        out: args
            .out
            .or_else(|| base.as_ref().map(|b| b.out.clone()))
            .ok_or_else(|| anyhow!("--out is required"))?,
    })
}

fn cmd_reproduce(config: ReproduceConfig) -> Result<usize> {
    let grid = eval::standard_grid();
    let family = CountFamily::NegativeBinomial { failures: 100.0 };
    let mut report = ExperimentReport {
        experiment: format!("{:?}", config.experiment).to_lowercase(),
        seed: config.experiment_config.seed,
        repetitions: config.experiment_config.repetitions,
        ..ExperimentReport::default()
    };
    let mut flags = 0usize;

    match config.experiment {
        ExperimentKind::Table1 => {
            report.config = Some(config.experiment_config.clone());
            for (name, spec) in eval::standard_processes() {
                let truth = TruthModel::from_intensity(&spec, &grid, family)?;
                let outcome =
                    eval::coverage_experiment(&truth, &grid, &config.experiment_config)?;
                println!("{name}: coverage {:.4}", outcome.coverage);
                flags += outcome.empty_intervals + outcome.nonconverged_candidates;
                report.coverage.push((name.to_string(), outcome));
            }
            write_output(
                &config.out.with_extension("coverage.csv"),
                &coverage_csv(&report.coverage),
            )?;
        }
        ExperimentKind::Fig3c => {
            report.config = Some(config.experiment_config.clone());
            for (name, spec) in eval::standard_processes() {
                let truth = TruthModel::from_intensity(&spec, &grid, family)?;
                let comparison =
                    eval::size_comparison(&truth, &grid, &config.experiment_config)?;
                println!(
                    "{name}: masked size ratio {:?}",
                    comparison.masked_ratio
                );
                flags += comparison.regularized.empty_intervals
                    + comparison.regularized.nonconverged_candidates
                    + comparison.unregularized.empty_intervals
                    + comparison.unregularized.nonconverged_candidates;
                write_output(
                    &config.out.with_extension(format!("sizes.{name}.csv")),
                    &sizes_csv(&comparison),
                )?;
                report.sizes.push((name.to_string(), comparison));
            }
        }
        ExperimentKind::Theorem => {
            report.seed = config.theorem_config.seed;
            report.repetitions = config.theorem_config.seeds;
            report.theorem_config = Some(config.theorem_config.clone());
            let (theorem_grid, support, truths) = eval::standard_theorem_setup();
            let theorem_config = TheoremConfig {
                support: Some(support),
                ..config.theorem_config.clone()
            };
            for (name, truth) in truths {
                let points = eval::theorem_check(&truth, &theorem_grid, &theorem_config)?;
                for p in &points {
                    println!(
                        "{name} n={}: bound {:.4}, empirical {:.4}, holds {}",
                        p.n, p.bound_probability, p.empirical_rate, p.holds
                    );
                    flags += usize::from(!p.oracle_converged);
                }
                write_output(
                    &config.out.with_extension(format!("theorem.{name}.csv")),
                    &theorem_csv(&points),
                )?;
                report.theorem.push((name.to_string(), points));
            }
        }
    }

    let report_json = serde_json::to_string_pretty(&report)?;
    write_output(&config.out.with_extension("report.json"), &(report_json + "\n"))?;
    let out = config.out.clone();
    write_sidecar(&out, &RunConfig::Reproduce(config))?;
    Ok(flags)
}

// ---------------------------------------------------------------------------

fn run() -> Result<usize> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(args) => cmd_fit(resolve_fit(args)?),
        Command::Interval(args) => cmd_interval(resolve_interval(args)?),
        Command::Synth(args) => cmd_synth(resolve_synth(args)?),
        Command::Reproduce(args) => cmd_reproduce(resolve_reproduce(args)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(flags) => {
            eprintln!("completed with {flags} error flag(s)");
            ExitCode::FAILURE
        }
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
