//! Poisson conditional model over the spline basis: mean predictions,
//! average negative log-likelihood and its gradient, the per-location
//! intensity estimate, and exact divergence oracles against known synthetic
//! truths.

use crate::basis::{BasisError, SpatialBasis, SplineSpec};
use crate::dataset::CountDataset;
use crate::grid::{GridError, Location, RegionGrid, RegionId};
use crate::solver::FitDiagnostics;
use crate::synth::{CountFamily, TruthModel};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;
use thiserror::Error;

/// Linear predictors are clamped at this value before exponentiation so a
/// transient extreme iterate cannot overflow.
pub const LINEAR_PREDICTOR_CAP: f64 = 700.0;

/// `exp` of a clamped linear predictor plus whether the clamp engaged.
pub(crate) fn capped_exp(u: f64) -> (f64, bool) {
    if u > LINEAR_PREDICTOR_CAP {
        (LINEAR_PREDICTOR_CAP.exp(), true)
    } else {
        (u.exp(), false)
    }
}

fn ln_factorial(y: u32) -> f64 {
    ln_gamma(y as f64 + 1.0)
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("divergence evaluated to a non-finite value")]
    NonFinite,

    #[error("truth has {truth} regions, basis has {basis}")]
    RegionMismatch { truth: usize, basis: usize },

    #[error("model document is invalid: {0}")]
    Parse(String),

    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// Average negative log-likelihood `V(theta)` of the Poisson model:
/// `n^{-1} Σ_i [exp(phi_i' theta) − y_i · phi_i' theta + ln(y_i!)]`.
pub fn neg_log_likelihood(theta: &[f64], data: &CountDataset, basis: &SpatialBasis) -> f64 {
    let predictors = basis.linear_predictors(theta);
    let mut acc = 0.0;
    for (r, y) in data.iter() {
        let u = predictors[r.index()];
        let (m, _) = capped_exp(u);
        acc += m - y as f64 * u + ln_factorial(y);
    }
    acc / data.n() as f64
}

/// Gradient of [`neg_log_likelihood`]: `n^{-1} Phi (h(theta) − y)`.
pub fn nll_gradient(theta: &[f64], data: &CountDataset, basis: &SpatialBasis) -> Vec<f64> {
    let predictors = basis.linear_predictors(theta);
    let r_total = basis.region_count();
    let mut grad = vec![0.0; r_total];
    for (r, y) in data.iter() {
        let (m, _) = capped_exp(predictors[r.index()]);
        let diff = m - y as f64;
        for (g, p) in grad.iter_mut().zip(basis.row(r)) {
            *g += diff * p;
        }
    }
    let n = data.n() as f64;
    for g in &mut grad {
        *g /= n;
    }
    grad
}

/// Closed-form `KL(Poisson(mu) || Poisson(m))`.
pub fn poisson_kl(mu: f64, m: f64) -> f64 {
    if mu == 0.0 {
        m
    } else {
        mu * (mu / m).ln() - mu + m
    }
}

/// `KL(NegativeBinomial(mean mu, failures nu) || Poisson(m))`, summed over
/// counts until the truth's tail mass drops below `1e-12`.
pub fn negative_binomial_poisson_kl(mu: f64, failures: f64, m: f64) -> f64 {
    if mu == 0.0 {
        return m;
    }
    let ln_ratio_base = failures * (failures / (failures + mu)).ln();
    let ln_step = (mu / (failures + mu)).ln();
    let ln_m = m.ln();
    let mut kl = 0.0;
    let mut cdf = 0.0;
    let mut y = 0u64;
    loop {
        let yf = y as f64;
        let ln_p = ln_gamma(yf + failures) - ln_gamma(failures) - ln_gamma(yf + 1.0)
            + ln_ratio_base
            + yf * ln_step;
        let p = ln_p.exp();
        let ln_q = -m + yf * ln_m - ln_gamma(yf + 1.0);
        kl += p * (ln_p - ln_q);
        cdf += p;
        y += 1;
        if 1.0 - cdf < 1e-12 || y > 10_000_000 {
            break;
        }
    }
    kl
}

/// Exact per-sample divergence of the Poisson model from a known synthetic
/// truth, averaged over the dataset's regions:
/// `n^{-1} Σ_i KL(p(·|r_i) || p_theta(·|r_i))`.
pub fn kl_per_sample(
    theta: &[f64],
    truth: &TruthModel,
    regions: &[RegionId],
    basis: &SpatialBasis,
) -> Result<f64, ModelError> {
    let r_total = basis.region_count();
    if truth.region_count() != r_total {
        return Err(ModelError::RegionMismatch {
            truth: truth.region_count(),
            basis: r_total,
        });
    }
    let predictors = basis.linear_predictors(theta);
    let mut multiplicity = vec![0usize; r_total];
    for &r in regions {
        multiplicity[r.index()] += 1;
    }
    let mut acc = 0.0;
    for (idx, &mult) in multiplicity.iter().enumerate() {
        if mult == 0 {
            continue;
        }
        let (m, _) = capped_exp(predictors[idx]);
        let mu = truth.means()[idx];
        let kl = match truth.family() {
            CountFamily::Poisson => poisson_kl(mu, m),
            CountFamily::NegativeBinomial { failures } => {
                negative_binomial_poisson_kl(mu, failures, m)
            }
        };
        acc += mult as f64 * kl;
    }
    let result = acc / regions.len() as f64;
    if result.is_finite() {
        Ok(result)
    } else {
        Err(ModelError::NonFinite)
    }
}

/// A fitted parameter vector together with the basis that produced it and
/// the solver diagnostics.
#[derive(Debug, Clone)]
pub struct FittedModel {
    basis: Arc<SpatialBasis>,
    gamma: f64,
    theta: Vec<f64>,
    diagnostics: FitDiagnostics,
}

impl FittedModel {
    pub(crate) fn new(
        basis: Arc<SpatialBasis>,
        gamma: f64,
        theta: Vec<f64>,
        diagnostics: FitDiagnostics,
    ) -> Self {
        FittedModel {
            basis,
            gamma,
            theta,
            diagnostics,
        }
    }

    pub fn basis(&self) -> &SpatialBasis {
        &self.basis
    }

    pub fn grid(&self) -> &RegionGrid {
        self.basis.grid()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Expected count in a region: `exp(phi(r)' theta)`.
    pub fn mean(&self, r: RegionId) -> f64 {
        capped_exp(self.basis.predictor_at(r, &self.theta)).0
    }

    /// Expected counts for every region.
    pub fn means(&self) -> Vec<f64> {
        self.basis
            .linear_predictors(&self.theta)
            .into_iter()
            .map(|u| capped_exp(u).0)
            .collect()
    }

    /// Intensity estimate at a location: the containing region's expected
    /// count divided by the region area.
    pub fn point_intensity(&self, x: Location) -> Result<f64, GridError> {
        let r = self.grid().locate(x)?;
        Ok(self.mean(r) / self.grid().region_area())
    }

    /// Serializes the model document (grid, spline spec, gamma, theta,
    /// diagnostics) to JSON.
    pub fn to_json_string(&self) -> String {
        let record = ModelRecord {
            grid: self.grid().clone(),
            spline: *self.basis.spec(),
            gamma: self.gamma,
            theta: self.theta.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string_pretty(&record).expect("model record serializes")
    }

    /// Rebuilds a model from its JSON document, reconstructing the basis
    /// design from the stored grid and spline spec.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let record: ModelRecord =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        if record.theta.len() != record.grid.region_count() {
            return Err(ModelError::Parse(format!(
                "theta has {} entries for {} regions",
                record.theta.len(),
                record.grid.region_count()
            )));
        }
        let basis = SpatialBasis::new(record.grid, record.spline)?;
        Ok(FittedModel {
            basis: Arc::new(basis),
            gamma: record.gamma,
            theta: record.theta,
            diagnostics: record.diagnostics,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    grid: RegionGrid,
    spline: SplineSpec,
    gamma: f64,
    theta: Vec<f64>,
    diagnostics: FitDiagnostics,
}
