//! Browser bindings. Each export takes and returns JSON text so the page
//! needs no generated type glue beyond strings.

use eivreg::bench::{fit_method, EstimatorKind};
use eivreg::minimax::{minimax_report, MinimaxConfig};
use eivreg::model::{ar1_covariance, practical_tuning, DgpConfig};
use eivreg::sensitivity::{sensitivity, ExactBudget, LocalOptions, SensitivityNorm};
use eivreg::solver::SolverSettings;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn default_lambda() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub dgp: DgpConfig,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub estimators: Vec<EstimatorKind>,
}

#[derive(Debug, Serialize)]
pub struct FitRow {
    pub method: String,
    pub theta_hat: Option<Vec<f64>>,
    /// `|theta_hat - theta*|_2`.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct FitResponse {
    pub theta_star: Vec<f64>,
    pub mu: f64,
    pub tau: f64,
    pub fits: Vec<FitRow>,
}

/// One draw from the generator, then every requested estimator with the
/// practical tuning and `D_hat = sigma_star^2 I`.
pub fn simulate_fit_json(request: &str) -> Result<String, String> {
    let req: FitRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let d = &req.dgp;
    let data = d.generate().map_err(|e| e.to_string())?;
    let (mu, tau) = practical_tuning(d.epsilon, d.n, d.p, d.sigma).map_err(|e| e.to_string())?;
    let settings = SolverSettings::default();
    let fits = req
        .estimators
        .iter()
        .map(|&k| {
            let lambda = (k == EstimatorKind::Conic).then_some(req.lambda);
            match fit_method(&data, k, lambda, mu, tau, d.sigma_star, &settings) {
                Ok(f) => {
                    let err = f.theta_hat.iter().zip(&d.theta_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    FitRow { method: k.label().into(), theta_hat: Some(f.theta_hat), error: Some(err), failure: None }
                }
                Err(e) => FitRow { method: k.label().into(), theta_hat: None, error: None, failure: Some(e.to_string()) },
            }
        })
        .collect();
    let resp = FitResponse { theta_star: d.theta_star.clone(), mu, tau, fits };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    pub p: usize,
    pub rho: f64,
    pub s: usize,
    pub u: f64,
    pub q: SensitivityNorm,
    #[serde(default)]
    pub seed: u64,
}

/// Sensitivity of the AR(1) Gram matrix `rho^|i-j|`; `rho = 0` is the identity.
pub fn sensitivity_json(request: &str) -> Result<String, String> {
    let req: SensitivityRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if !(0.0..1.0).contains(&req.rho) {
        return Err(format!("rho must lie in [0, 1), got {}", req.rho));
    }
    let psi = ar1_covariance(req.p, req.rho);
    let opts = LocalOptions { seed: req.seed, ..LocalOptions::default() };
    let budget = ExactBudget { p_max: 12, s_max: 3, ..ExactBudget::default() };
    let report = sensitivity(&psi, req.s, req.u, req.q, &opts, &budget).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct MinimaxResponse {
    family: eivreg::minimax::HypothesisFamily,
    report: eivreg::minimax::MinimaxReport,
}

/// Packing family, separations and divergences for a small instance.
pub fn minimax_json(request: &str) -> Result<String, String> {
    let cfg: MinimaxConfig = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if cfg.p > 64 {
        return Err(format!("the demo is limited to p <= 64, got {}", cfg.p));
    }
    let (family, report) = minimax_report(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&MinimaxResponse { family, report }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate_fit(request: &str) -> Result<String, JsError> {
    simulate_fit_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sensitivity_constant(request: &str) -> Result<String, JsError> {
    sensitivity_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn minimax_instance(request: &str) -> Result<String, JsError> {
    minimax_json(request).map_err(|e| JsError::new(&e))
}
