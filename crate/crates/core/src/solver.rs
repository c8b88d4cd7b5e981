//! Majorization-minimization solver for the penalized Poisson criterion
//!
//! ```text
//! minimize  V(theta) + n^{-gamma} * || w ⊙ theta ||_1
//! ```
//!
//! where `V` is the average negative log-likelihood. Each outer step bounds
//! `V` by a quadratic that is tight at the current iterate and whose
//! curvature is `ceiling / (2n) * ||Phi' delta||²`; the penalized surrogate
//! is a weighted lasso solved exactly by cyclic coordinate descent with
//! cached residuals. Iterates are deterministic: coordinates sweep in index
//! order and the start point is always zero.

use crate::basis::{DesignMatrix, SpatialBasis};
use crate::dataset::CountDataset;
use crate::grid::RegionId;
use crate::model::{capped_exp, FittedModel};
use crate::synth::TruthModel;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("count ceiling {ceiling} is below the maximum observed count {max_count}")]
    CeilingBelowMax { ceiling: u32, max_count: u32 },

    #[error("expected {expected} penalties, got {found}")]
    PenaltyLength { expected: usize, found: usize },

    #[error("truth has {truth} regions, basis has {basis}")]
    RegionMismatch { truth: usize, basis: usize },

    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),
}

/// Which regularization weights the criterion uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    /// Root-mean-square feature weights, the regularized criterion.
    Rms,
    /// All-zero weights, the unregularized maximum-likelihood comparator.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Penalty exponent, strictly inside (0, 1/2).
    pub gamma: f64,
    /// Count ceiling `Y`; defaults to twice the maximum observed count.
    pub count_ceiling: Option<u32>,
    /// Outer stopping tolerance on the L2 change of theta.
    pub epsilon_outer: f64,
    /// Inner stopping tolerance on the largest coordinate change per sweep.
    pub epsilon_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub weights_mode: WeightsMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 0.499,
            count_ceiling: None,
            epsilon_outer: 1e-6,
            epsilon_inner: 1e-8,
            max_outer: 500,
            max_inner: 10_000,
            weights_mode: WeightsMode::Rms,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(SolverError::InvalidConfig(format!(
                "gamma must lie in (0, 0.5), got {}",
                self.gamma
            )));
        }
        if !(self.epsilon_outer > 0.0 && self.epsilon_inner > 0.0) {
            return Err(SolverError::InvalidConfig(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(SolverError::InvalidConfig(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Resolves the ceiling against the data; the returned value also
    /// serves as the majorizer curvature constant, so it is at least 1.
    fn resolve_ceiling(&self, max_count: f64) -> Result<f64, SolverError> {
        let value = match self.count_ceiling {
            Some(c) => {
                if (c as f64) < max_count {
                    return Err(SolverError::CeilingBelowMax {
                        ceiling: c,
                        max_count: max_count as u32,
                    });
                }
                c as f64
            }
            None => 2.0 * max_count,
        };
        Ok(value.max(1.0))
    }
}

/// Solver outcome counters; non-convergence is reported here, never as an
/// error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    pub converged: bool,
    pub final_objective: f64,
    /// Penalized objective at the start point and after every outer step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
    /// Linear predictors clamped before exponentiation.
    pub clamped_predictors: usize,
    /// Regularization weights raised to the floor.
    pub floored_weights: usize,
    /// Resolved count ceiling used for curvature and candidate ranges.
    pub count_ceiling: f64,
}

/// `sign(z) * max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Quadratic surrogate of the negative log-likelihood at an expansion
/// point: value, gradient, curvature, and the working response of the
/// equivalent weighted-lasso problem.
#[derive(Debug, Clone)]
pub struct Majorizer {
    design: DesignMatrix,
    center: Vec<f64>,
    value_at_center: f64,
    gradient: Vec<f64>,
    quad_coeff: f64,
    surrogate_target: Vec<f64>,
    ceiling: f64,
}

impl Majorizer {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `V(theta_tilde)`; the surrogate touches the objective here.
    pub fn value_at_center(&self) -> f64 {
        self.value_at_center
    }

    /// Gradient of `V` at the center.
    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    /// Coefficient of `||Phi'(theta - center)||²`, equal to `Y / (2n)`.
    pub fn quadratic_coefficient(&self) -> f64 {
        self.quad_coeff
    }

    /// Working response `q = Phi' center + (y - h) / Y` of the weighted
    /// lasso formulation.
    pub fn surrogate_target(&self) -> &[f64] {
        &self.surrogate_target
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    /// Evaluates the surrogate `Q(theta; center)`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        let delta: Vec<f64> = theta
            .iter()
            .zip(&self.center)
            .map(|(a, b)| a - b)
            .collect();
        let mut value = self.value_at_center;
        for (g, d) in self.gradient.iter().zip(&delta) {
            value += g * d;
        }
        let deviations = self.design.predictor(&delta);
        let sq: f64 = deviations.iter().map(|v| v * v).sum();
        value + self.quad_coeff * sq
    }
}

/// Builds the quadratic surrogate of the likelihood term at `theta_tilde`.
pub fn majorizer(
    theta_tilde: &[f64],
    data: &CountDataset,
    basis: &SpatialBasis,
    config: &SolverConfig,
) -> Result<Majorizer, SolverError> {
    let design = DesignMatrix::new(basis, data.regions())?;
    let y: Vec<f64> = data.counts().iter().map(|&c| c as f64).collect();
    let ceiling = config.resolve_ceiling(data.max_count() as f64)?;
    let state = LikelihoodState::new(basis, data.regions(), &y);
    let eval = state.evaluate(basis, theta_tilde);
    let n = y.len() as f64;
    Ok(Majorizer {
        surrogate_target: eval.surrogate_target(&state, &y, ceiling),
        gradient: eval.gradient(&state, basis),
        value_at_center: eval.value(&state),
        quad_coeff: ceiling / (2.0 * n),
        center: theta_tilde.to_vec(),
        ceiling,
        design,
    })
}

/// One majorization step: minimizes
/// `Y/(2n) ||q(theta_tilde) - Phi' theta||² + rho ||w ⊙ theta||_1`
/// by cyclic coordinate descent started at `theta_tilde`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_lasso_step(
    theta_tilde: &[f64],
    data: &CountDataset,
    basis: &SpatialBasis,
    config: &SolverConfig,
    rho: f64,
    penalties: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let design = DesignMatrix::new(basis, data.regions())?;
    if penalties.len() != design.components() {
        return Err(SolverError::PenaltyLength {
            expected: design.components(),
            found: penalties.len(),
        });
    }
    let y: Vec<f64> = data.counts().iter().map(|&c| c as f64).collect();
    let ceiling = config.resolve_ceiling(data.max_count() as f64)?;
    let state = LikelihoodState::new(basis, data.regions(), &y);
    let eval = state.evaluate(basis, theta_tilde);

    let mut theta = theta_tilde.to_vec();
    let mut residual = eval.lasso_residual(&state, &y, ceiling);
    let scale = ceiling / y.len() as f64;
    coordinate_descent(
        &design,
        &mut residual,
        &mut theta,
        scale,
        rho,
        penalties,
        config.epsilon_inner,
        config.max_inner,
    );
    Ok(theta)
}

/// Minimizes the penalized criterion for count data.
pub fn fit(
    data: &CountDataset,
    basis: &SpatialBasis,
    config: &SolverConfig,
) -> Result<FittedModel, SolverError> {
    let (theta, diagnostics) = fit_counts_raw(data, basis, config, None)?;
    Ok(FittedModel::new(
        Arc::new(basis.clone()),
        config.gamma,
        theta,
        diagnostics,
    ))
}

/// Like [`fit`] but with externally supplied penalty weights, used by the
/// conformal layer to freeze weights across refits.
pub fn fit_with_penalties(
    data: &CountDataset,
    basis: &SpatialBasis,
    config: &SolverConfig,
    penalties: &[f64],
) -> Result<FittedModel, SolverError> {
    let (theta, diagnostics) = fit_counts_raw(data, basis, config, Some(penalties))?;
    Ok(FittedModel::new(
        Arc::new(basis.clone()),
        config.gamma,
        theta,
        diagnostics,
    ))
}

/// Raw fit on count data; avoids cloning the basis into a model wrapper.
pub(crate) fn fit_counts_raw(
    data: &CountDataset,
    basis: &SpatialBasis,
    config: &SolverConfig,
    penalty_override: Option<&[f64]>,
) -> Result<(Vec<f64>, FitDiagnostics), SolverError> {
    config.validate()?;
    let design = DesignMatrix::new(basis, data.regions())?;
    let y: Vec<f64> = data.counts().iter().map(|&c| c as f64).collect();
    let ceiling = config.resolve_ceiling(data.max_count() as f64)?;
    let (penalties, floored) = match penalty_override {
        Some(p) => {
            if p.len() != design.components() {
                return Err(SolverError::PenaltyLength {
                    expected: design.components(),
                    found: p.len(),
                });
            }
            (p.to_vec(), 0)
        }
        None => match config.weights_mode {
            WeightsMode::Rms => (
                design.weights().penalties(),
                design.weights().floored_count(),
            ),
            WeightsMode::Zero => (vec![0.0; design.components()], 0),
        },
    };
    let rho = (y.len() as f64).powf(-config.gamma);
    Ok(run_mm(
        basis,
        &design,
        data.regions(),
        &y,
        ceiling,
        rho,
        &penalties,
        floored,
        config,
    ))
}

/// Minimizer of the exact per-sample divergence for a known synthetic
/// truth: the same MM machinery applied to the expected counts, with no
/// penalty. Used by the accuracy-bound checks.
pub fn oracle_optimum(
    truth: &TruthModel,
    regions: &[RegionId],
    basis: &SpatialBasis,
    config: &SolverConfig,
) -> Result<FittedModel, SolverError> {
    config.validate()?;
    if truth.region_count() != basis.region_count() {
        return Err(SolverError::RegionMismatch {
            truth: truth.region_count(),
            basis: basis.region_count(),
        });
    }
    let design = DesignMatrix::new(basis, regions)?;
    let y: Vec<f64> = regions.iter().map(|&r| truth.mean(r)).collect();
    let max_mean = y.iter().fold(0.0f64, |m, &v| m.max(v));
    let ceiling = match config.count_ceiling {
        Some(c) => (c as f64).max(1.0),
        None => (2.0 * max_mean).max(1.0),
    };
    let penalties = vec![0.0; design.components()];
    let (theta, diagnostics) = run_mm(
        basis, &design, regions, &y, ceiling, 0.0, &penalties, 0, config,
    );
    Ok(FittedModel::new(
        Arc::new(basis.clone()),
        config.gamma,
        theta,
        diagnostics,
    ))
}

/// Per-region sufficient statistics of the likelihood: multiplicities,
/// count sums, and the theta-independent log-factorial constant. They make
/// objective and gradient evaluations O(R²) instead of O(nR).
struct LikelihoodState {
    multiplicity: Vec<f64>,
    count_sums: Vec<f64>,
    ln_factorial_sum: f64,
    n: f64,
    region_indices: Vec<usize>,
}

impl LikelihoodState {
    fn new(basis: &SpatialBasis, regions: &[RegionId], y: &[f64]) -> Self {
        let r_total = basis.region_count();
        let mut multiplicity = vec![0.0; r_total];
        let mut count_sums = vec![0.0; r_total];
        let mut region_indices = Vec::with_capacity(regions.len());
        for (&r, &v) in regions.iter().zip(y) {
            multiplicity[r.index()] += 1.0;
            count_sums[r.index()] += v;
            region_indices.push(r.index());
        }
        let ln_factorial_sum = y.iter().map(|&v| ln_gamma(v + 1.0)).sum();
        LikelihoodState {
            multiplicity,
            count_sums,
            ln_factorial_sum,
            n: y.len() as f64,
            region_indices,
        }
    }

    /// Linear predictors and conditional means per region at `theta`.
    fn evaluate(&self, basis: &SpatialBasis, theta: &[f64]) -> LikelihoodPoint {
        let predictors = basis.linear_predictors(theta);
        let mut clamped = 0usize;
        let means: Vec<f64> = predictors
            .iter()
            .map(|&u| {
                let (m, hit) = capped_exp(u);
                clamped += hit as usize;
                m
            })
            .collect();
        LikelihoodPoint {
            predictors,
            means,
            clamped,
        }
    }
}

struct LikelihoodPoint {
    predictors: Vec<f64>,
    means: Vec<f64>,
    clamped: usize,
}

impl LikelihoodPoint {
    /// `V(theta)`.
    fn value(&self, state: &LikelihoodState) -> f64 {
        let mut acc = state.ln_factorial_sum;
        for r in 0..self.means.len() {
            acc += state.multiplicity[r] * self.means[r] - state.count_sums[r] * self.predictors[r];
        }
        acc / state.n
    }

    /// `n^{-1} Phi (h - y)` accumulated by region.
    fn gradient(&self, state: &LikelihoodState, basis: &SpatialBasis) -> Vec<f64> {
        let r_total = self.means.len();
        let mut grad = vec![0.0; r_total];
        for r in 0..r_total {
            let coeff = state.multiplicity[r] * self.means[r] - state.count_sums[r];
            if coeff != 0.0 {
                let row = basis.row(RegionId::from_index(r));
                for (g, p) in grad.iter_mut().zip(row) {
                    *g += coeff * p;
                }
            }
        }
        for g in &mut grad {
            *g /= state.n;
        }
        grad
    }

    /// Working response `q_i = Phi'theta|_i + (y_i - h_i) / Y` per datum.
    fn surrogate_target(&self, state: &LikelihoodState, y: &[f64], ceiling: f64) -> Vec<f64> {
        state
            .region_indices
            .iter()
            .zip(y)
            .map(|(&idx, &v)| self.predictors[idx] + (v - self.means[idx]) / ceiling)
            .collect()
    }

    /// Lasso residual `q - Phi'theta` at the expansion point itself, which
    /// reduces to `(y - h) / Y`.
    fn lasso_residual(&self, state: &LikelihoodState, y: &[f64], ceiling: f64) -> Vec<f64> {
        state
            .region_indices
            .iter()
            .zip(y)
            .map(|(&idx, &v)| (v - self.means[idx]) / ceiling)
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn run_mm(
    basis: &SpatialBasis,
    design: &DesignMatrix,
    regions: &[RegionId],
    y: &[f64],
    ceiling: f64,
    rho: f64,
    penalties: &[f64],
    floored_weights: usize,
    config: &SolverConfig,
) -> (Vec<f64>, FitDiagnostics) {
    let r_total = design.components();
    let state = LikelihoodState::new(basis, regions, y);
    let scale = ceiling / state.n;

    let penalty_value = |theta: &[f64]| -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        rho * theta
            .iter()
            .zip(penalties)
            .map(|(t, w)| w * t.abs())
            .sum::<f64>()
    };

    let mut theta = vec![0.0; r_total];
    let mut clamped = 0usize;
    let mut total_sweeps = 0usize;
    let mut outer_iterations = 0usize;
    let mut converged = false;

    let mut point = state.evaluate(basis, &theta);
    clamped += point.clamped;
    let mut trace = Vec::with_capacity(config.max_outer + 1);
    trace.push(point.value(&state) + penalty_value(&theta));

    let mut residual = vec![0.0; y.len()];
    for _ in 0..config.max_outer {
        for (slot, (&idx, &v)) in residual
            .iter_mut()
            .zip(state.region_indices.iter().zip(y))
        {
            *slot = (v - point.means[idx]) / ceiling;
        }
        let previous = theta.clone();
        total_sweeps += coordinate_descent(
            design,
            &mut residual,
            &mut theta,
            scale,
            rho,
            penalties,
            config.epsilon_inner,
            config.max_inner,
        );
        outer_iterations += 1;

        point = state.evaluate(basis, &theta);
        clamped += point.clamped;
        trace.push(point.value(&state) + penalty_value(&theta));

        let change: f64 = theta
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if change < config.epsilon_outer {
            converged = true;
            break;
        }
    }

    let final_objective = *trace.last().unwrap();
    let diagnostics = FitDiagnostics {
        outer_iterations,
        inner_sweeps: total_sweeps,
        converged,
        final_objective,
        objective_trace: trace,
        clamped_predictors: clamped,
        floored_weights,
        count_ceiling: ceiling,
    };
    (theta, diagnostics)
}

/// Cyclic coordinate descent on
/// `scale/2 ||residual||²`-form weighted lasso; `residual` must hold
/// `q - Phi' theta` on entry and is kept in sync with `theta`.
/// Returns the number of sweeps executed.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent(
    design: &DesignMatrix,
    residual: &mut [f64],
    theta: &mut [f64],
    scale: f64,
    rho: f64,
    penalties: &[f64],
    epsilon: f64,
    max_sweeps: usize,
) -> usize {
    let r_total = design.components();
    let mut sweeps = 0usize;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for k in 0..r_total {
            let sq = design.column_squared_norm(k);
            if sq <= 0.0 {
                // component unsupported by the data: penalized solutions
                // put it at zero, unpenalized ones leave it untouched
                if rho * penalties[k] > 0.0 && theta[k] != 0.0 {
                    max_delta = max_delta.max(theta[k].abs());
                    theta[k] = 0.0;
                }
                continue;
            }
            let col = design.column(k);
            let mut dot = 0.0;
            for (c, r) in col.iter().zip(residual.iter()) {
                dot += c * r;
            }
            let z = dot + sq * theta[k];
            let threshold = rho * penalties[k] / scale;
            let updated = soft_threshold(z, threshold) / sq;
            let delta = updated - theta[k];
            if delta != 0.0 {
                for (r, c) in residual.iter_mut().zip(col) {
                    *r -= delta * c;
                }
                theta[k] = updated;
                let magnitude = delta.abs();
                if magnitude > max_delta {
                    max_delta = magnitude;
                }
            }
        }
        if max_delta < epsilon {
            break;
        }
    }
    sweeps
}
