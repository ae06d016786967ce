//! Monte Carlo harness: repeated draws from the AR(1) design model, fits of
//! every requested estimator, and Bias / RMSE / PR tables.
//!
//! Aggregates are reduced sequentially in replication order, so a table is
//! bit-identical for a given configuration whatever the worker count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_compensated_mu, fit_conic, fit_dantzig, fit_mu_selector, FitResult};
use crate::io;
use crate::model::{mix_seed, practical_tuning, Compensation, Dataset, EstimatorConfig, TrueModel};
use crate::solver::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Conic,
    CompMu,
    Mu,
    DantzigX,
    DantzigZ,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [Self::Conic, Self::CompMu, Self::Mu, Self::DantzigX, Self::DantzigZ];

    /// Column label used in emitted tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::Conic => "Conic",
            Self::CompMu => "CompMU",
            Self::Mu => "MU",
            Self::DantzigX => "DantzigX",
            Self::DantzigZ => "DantzigZ",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Self::Conic => "conic",
            Self::CompMu => "comp_mu",
            Self::Mu => "mu",
            Self::DantzigX => "dantzig_x",
            Self::DantzigZ => "dantzig_z",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.key() == s || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaStarChoice {
    /// `(1, 1, 1, 1, 1, 0, ..., 0)`.
    First,
    /// `(1, 1/2, 1/3, 1/4, 1/5, 0, ..., 0)`.
    Second,
    Custom(Vec<f64>),
}

impl ThetaStarChoice {
    pub fn vector(&self, p: usize) -> Result<DVector<f64>> {
        match self {
            Self::First => Ok(DVector::from_fn(p, |j, _| if j < 5 { 1.0 } else { 0.0 })),
            Self::Second => Ok(DVector::from_fn(p, |j, _| if j < 5 { 1.0 / (j + 1) as f64 } else { 0.0 })),
            Self::Custom(v) if v.len() == p => Ok(DVector::from_column_slice(v)),
            Self::Custom(v) => Err(Error::Shape(format!("custom theta_star has length {} but p = {p}", v.len()))),
        }
    }
}

fn default_replications() -> usize {
    100
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 0.75, 1.0]
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Conic, EstimatorKind::CompMu, EstimatorKind::DantzigX, EstimatorKind::DantzigZ]
}

fn default_epsilon() -> f64 {
    0.05
}

/// JSON schema of a simulation run. `mu` and `tau` override the practical
/// tuning `sigma sqrt(log(p / epsilon) / n)` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub theta_star_choice: ThetaStarChoice,
    pub sigma: f64,
    pub sigma_star: f64,
    pub rho: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl SimulationConfig {
    /// Reference simulation settings at dimension `(n, p)`: AR(1) design, practical tuning, 100 replications.
    pub fn paper(n: usize, p: usize, theta_star_choice: ThetaStarChoice, base_seed: u64) -> Self {
        Self {
            n,
            p,
            replications: default_replications(),
            theta_star_choice,
            sigma: 0.128,
            sigma_star: 0.45,
            rho: 0.25,
            epsilon: default_epsilon(),
            lambdas: default_lambdas(),
            estimators: default_estimators(),
            base_seed,
            mu: None,
            tau: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!("lambda values must be positive, got {l}")));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        if self.estimators.contains(&EstimatorKind::Conic) && self.lambdas.is_empty() {
            return Err(Error::InvalidParameter("the conic estimator needs at least one lambda".into()));
        }
        for (name, v) in [("mu", self.mu), ("tau", self.tau)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
                }
            }
        }
        self.theta_star_choice.vector(self.p)?;
        self.true_model(0)?.validate()
    }

    pub fn theta_star(&self) -> Result<DVector<f64>> {
        self.theta_star_choice.vector(self.p)
    }

    /// `(mu, tau)` used by every fit.
    pub fn tuning(&self) -> Result<(f64, f64)> {
        let (mu, tau) = match (self.mu, self.tau) {
            (Some(mu), Some(tau)) => (mu, tau),
            (mu, tau) => {
                let (m, t) = practical_tuning(self.epsilon, self.n, self.p, self.sigma)?;
                (mu.unwrap_or(m), tau.unwrap_or(t))
            }
        };
        Ok((mu, tau))
    }

    fn true_model(&self, replication: usize) -> Result<TrueModel> {
        Ok(TrueModel::ar1(
            self.theta_star()?,
            self.sigma,
            self.sigma_star,
            self.rho,
            mix_seed(self.base_seed, replication as u64),
        ))
    }

    /// Dataset of replication `r`.
    pub fn dataset(&self, replication: usize) -> Result<Dataset> {
        crate::model::generate_dgp(&self.true_model(replication)?, self.n, self.p)
    }

    /// `(estimator, lambda)` pairs in table order.
    pub fn methods(&self) -> Vec<(EstimatorKind, Option<f64>)> {
        let mut kinds = self.estimators.clone();
        kinds.sort();
        kinds.dedup();
        kinds
            .into_iter()
            .flat_map(|k| match k {
                EstimatorKind::Conic => self.lambdas.iter().map(|&l| (k, Some(l))).collect::<Vec<_>>(),
                _ => vec![(k, None)],
            })
            .collect()
    }
}

/// One fit in one replication. `theta_hat` is `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: EstimatorKind,
    pub lambda: Option<f64>,
    pub replication: usize,
    pub theta_hat: Option<Vec<f64>>,
    /// `(1/n) |X (theta_hat - theta*)|_2^2`.
    pub prediction_sq: Option<f64>,
    pub seconds: f64,
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn feasible(&self) -> bool {
        self.theta_hat.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub bias: f64,
    pub rmse: f64,
    pub pr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: EstimatorKind,
    pub lambda: Option<f64>,
    /// `None` when every replication failed.
    pub metrics: Option<Metrics>,
    pub feasible: usize,
    pub infeasible: usize,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub config: Option<SimulationConfig>,
    pub theta_star: Vec<f64>,
    pub rows: Vec<MetricsRow>,
    pub records: Vec<RunRecord>,
}

impl MetricsTable {
    pub fn row(&self, method: EstimatorKind, lambda: Option<f64>) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.lambda == lambda)
    }

    pub fn records_for(&self, method: EstimatorKind, lambda: Option<f64>) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.method == method && r.lambda == lambda)
    }

    /// RMSE gap `rmse(b) - rmse(a)` and its paired Monte Carlo standard error.
    ///
    /// Uses the replications where both fits succeeded. The error of the
    /// squared-error differences is mapped to the RMSE scale by the delta
    /// method, so `gap / stderr` equals the t statistic of the MSE gap.
    pub fn paired_gap(&self, a: (EstimatorKind, Option<f64>), b: (EstimatorKind, Option<f64>)) -> Result<(f64, f64)> {
        let theta = DVector::from_column_slice(&self.theta_star);
        let sq = |(m, l): (EstimatorKind, Option<f64>)| -> Vec<Option<f64>> {
            let mut out = vec![None; self.replication_count()];
            for r in self.records_for(m, l) {
                if let Some(t) = &r.theta_hat {
                    out[r.replication] = Some((DVector::from_column_slice(t) - &theta).norm_squared());
                }
            }
            out
        };
        let (ea, eb) = (sq(a), sq(b));
        let pairs: Vec<(f64, f64)> = ea.iter().zip(&eb).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
        if pairs.len() < 2 {
            return Err(Error::InvalidParameter("a paired gap needs two common feasible replications".into()));
        }
        let k = pairs.len() as f64;
        let mse_a = pairs.iter().map(|p| p.0).sum::<f64>() / k;
        let mse_b = pairs.iter().map(|p| p.1).sum::<f64>() / k;
        let d_mean = mse_b - mse_a;
        let var = pairs.iter().map(|(x, y)| (y - x - d_mean).powi(2)).sum::<f64>() / (k - 1.0);
        let (ra, rb) = (mse_a.sqrt(), mse_b.sqrt());
        let se = (var / k).sqrt() / (ra + rb);
        Ok((rb - ra, se))
    }

    fn replication_count(&self) -> usize {
        self.records.iter().map(|r| r.replication + 1).max().unwrap_or(0)
    }
}

/// `theta_hat` and the design it is scored against.
pub type Replicate<'a> = (&'a [f64], &'a DMatrix<f64>);

/// Bias `|mean theta_hat - theta*|_2`, RMSE `sqrt(mean |theta_hat - theta*|_2^2)`
/// and prediction risk `sqrt(mean (1/n) |X (theta_hat - theta*)|_2^2)`.
pub fn compute_metrics(records: &[Replicate<'_>], truth: &DVector<f64>) -> Result<Metrics> {
    let mut thetas = Vec::with_capacity(records.len());
    let mut pred = Vec::with_capacity(records.len());
    for (t, x) in records {
        if t.len() != truth.len() || x.ncols() != truth.len() || x.nrows() == 0 {
            return Err(Error::Shape(format!(
                "estimate of length {} and design {:?} against p = {}",
                t.len(),
                x.shape(),
                truth.len()
            )));
        }
        let theta = DVector::from_column_slice(t);
        pred.push(prediction_sq(x, &theta, truth));
        thetas.push(theta);
    }
    aggregate(&thetas, &pred, truth)
}

fn prediction_sq(x: &DMatrix<f64>, theta: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (x * (theta - truth)).norm_squared() / x.nrows() as f64
}

fn aggregate(thetas: &[DVector<f64>], pred: &[f64], truth: &DVector<f64>) -> Result<Metrics> {
    if thetas.is_empty() {
        return Err(Error::InvalidParameter("metrics need at least one record".into()));
    }
    let k = thetas.len() as f64;
    let mut mean = DVector::zeros(truth.len());
    let mut sq = 0.0;
    for t in thetas {
        mean += t;
        sq += (t - truth).norm_squared();
    }
    mean /= k;
    Ok(Metrics {
        bias: (mean - truth).norm(),
        rmse: (sq / k).sqrt(),
        pr: (pred.iter().sum::<f64>() / k).sqrt(),
    })
}

#[cfg(not(target_family = "wasm"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[cfg(target_family = "wasm")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Fits one estimator on one dataset with the harness's conventions:
/// `D_hat = sigma_star^2 I` for the compensated fits, `X` for Dantzig X.
pub fn fit_method(
    data: &Dataset,
    method: EstimatorKind,
    lambda: Option<f64>,
    mu: f64,
    tau: f64,
    sigma_star: f64,
    settings: &SolverSettings,
) -> Result<FitResult> {
    let comp = Compensation::known_isotropic(data.p(), sigma_star);
    let cfg = EstimatorConfig::new(lambda.unwrap_or(1.0), mu, tau);
    match method {
        EstimatorKind::Conic => {
            let lambda = lambda.ok_or_else(|| Error::InvalidParameter("the conic estimator needs lambda".into()))?;
            fit_conic(data, &comp, &EstimatorConfig::new(lambda, mu, tau), settings)
        }
        EstimatorKind::CompMu => fit_compensated_mu(data, &comp, &cfg, settings),
        EstimatorKind::Mu => fit_mu_selector(data, &cfg, settings),
        EstimatorKind::DantzigX => {
            let x = data.x.as_ref().ok_or_else(|| Error::InvalidParameter("Dantzig X needs the true design".into()))?;
            fit_dantzig(&data.y, x, tau, None, settings)
        }
        EstimatorKind::DantzigZ => fit_dantzig(&data.y, &data.z, tau, None, settings),
    }
}

fn replicate(cfg: &SimulationConfig, r: usize, truth: &DVector<f64>, mu: f64, tau: f64) -> Result<Vec<RunRecord>> {
    let data = cfg.dataset(r)?;
    let x = data.x.as_ref().expect("generated datasets carry X");
    let settings = SolverSettings::default();
    let mut out = Vec::new();
    for (method, lambda) in cfg.methods() {
        let (fit, seconds) = timed(|| fit_method(&data, method, lambda, mu, tau, cfg.sigma_star, &settings));
        let rec = match fit {
            Ok(f) => RunRecord {
                method,
                lambda,
                replication: r,
                prediction_sq: Some(prediction_sq(x, &f.theta(), truth)),
                theta_hat: Some(f.theta_hat),
                seconds,
                failure: None,
            },
            Err(e @ (Error::InvalidParameter(_) | Error::Shape(_) | Error::DimensionMismatch(_))) => return Err(e),
            Err(e) => RunRecord {
                method,
                lambda,
                replication: r,
                theta_hat: None,
                prediction_sq: None,
                seconds,
                failure: Some(e.to_string()),
            },
        };
        out.push(rec);
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn map_replications(cfg: &SimulationConfig, truth: &DVector<f64>, mu: f64, tau: f64) -> Result<Vec<Vec<RunRecord>>> {
    use rayon::prelude::*;
    (0..cfg.replications).into_par_iter().map(|r| replicate(cfg, r, truth, mu, tau)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_replications(cfg: &SimulationConfig, truth: &DVector<f64>, mu: f64, tau: f64) -> Result<Vec<Vec<RunRecord>>> {
    (0..cfg.replications).map(|r| replicate(cfg, r, truth, mu, tau)).collect()
}

/// Runs every replication and aggregates per `(estimator, lambda)`.
///
/// Failed fits are kept as records, excluded from the metrics and counted
/// in `infeasible`.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let truth = cfg.theta_star()?;
    let (mu, tau) = cfg.tuning()?;
    let records: Vec<RunRecord> = map_replications(cfg, &truth, mu, tau)?.into_iter().flatten().collect();
    let mut table = MetricsTable {
        config: Some(cfg.clone()),
        theta_star: truth.iter().copied().collect(),
        rows: Vec::new(),
        records,
    };
    table.rows = cfg
        .methods()
        .into_iter()
        .map(|(method, lambda)| summarize(&table, method, lambda, &truth))
        .collect::<Result<_>>()?;
    Ok(table)
}

/// `run_monte_carlo` on a dedicated pool of `threads` workers.
#[cfg(feature = "parallel")]
pub fn run_monte_carlo_threads(cfg: &SimulationConfig, threads: usize) -> Result<MetricsTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build a pool of {threads} workers: {e}")))?;
    pool.install(|| run_monte_carlo(cfg))
}

fn summarize(table: &MetricsTable, method: EstimatorKind, lambda: Option<f64>, truth: &DVector<f64>) -> Result<MetricsRow> {
    let mut thetas = Vec::new();
    let mut pred = Vec::new();
    let mut infeasible = 0;
    let mut seconds = 0.0;
    let mut count = 0;
    for r in table.records_for(method, lambda) {
        count += 1;
        seconds += r.seconds;
        match (&r.theta_hat, r.prediction_sq) {
            (Some(t), Some(q)) => {
                thetas.push(DVector::from_column_slice(t));
                pred.push(q);
            }
            _ => infeasible += 1,
        }
    }
    let metrics = if thetas.is_empty() { None } else { Some(aggregate(&thetas, &pred, truth)?) };
    Ok(MetricsRow {
        method,
        lambda,
        metrics,
        feasible: thetas.len(),
        infeasible,
        mean_seconds: if count > 0 { seconds / count as f64 } else { 0.0 },
    })
}

/// RMSE of the conic estimator at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub rmse: f64,
    pub feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateScan {
    pub lambda: f64,
    pub points: Vec<RatePoint>,
    /// Least-squares slope of `log rmse` on `log n`; `None` for one point.
    pub slope: Option<f64>,
}

/// Repeats the simulation for each `n` and tracks the conic RMSE at the
/// first configured lambda.
pub fn rate_scan(cfg: &SimulationConfig, n_list: &[usize]) -> Result<RateScan> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n_list must be nonempty and strictly increasing".into()));
    }
    if !cfg.estimators.contains(&EstimatorKind::Conic) {
        return Err(Error::InvalidParameter("a rate scan needs the conic estimator".into()));
    }
    let lambda = *cfg.lambdas.first().ok_or_else(|| Error::InvalidParameter("no lambda given".into()))?;
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let table = run_monte_carlo(&SimulationConfig { n, ..cfg.clone() })?;
        let row = table.row(EstimatorKind::Conic, Some(lambda)).expect("conic row exists");
        let m = row
            .metrics
            .ok_or_else(|| Error::SolverFailure(format!("every conic fit failed at n = {n}")))?;
        points.push(RatePoint { n, rmse: m.rmse, feasible: row.feasible });
    }
    let slope = (points.len() > 1).then(|| {
        let xs: Vec<f64> = points.iter().map(|q| (q.n as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|q| q.rmse.ln()).collect();
        let k = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(RateScan { lambda, points, slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Parse(format!("unknown format '{s}', expected csv or json"))),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["Method", "Lambda", "Bias", "RMSE", "PR", "Feasible", "MeanSeconds"];

/// CSV holds one line per row; JSON holds the whole table including the
/// per-replication records.
pub fn emit(table: &MetricsTable, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => Ok(serde_json::to_vec_pretty(table)?),
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(CSV_HEADER)?;
            let num = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
            for row in &table.rows {
                let m = row.metrics;
                wtr.write_record([
                    row.method.label().to_string(),
                    num(row.lambda),
                    num(m.map(|m| m.bias)),
                    num(m.map(|m| m.rmse)),
                    num(m.map(|m| m.pr)),
                    row.feasible.to_string(),
                    format!("{:?}", row.mean_seconds),
                ])?;
            }
            wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
    }
}

pub fn parse_table_json(bytes: &[u8]) -> Result<MetricsTable> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Estimator settings for a fit on user data. `d_hat` wins over
/// `sigma_star`; with neither there is no compensation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub mu: f64,
    pub tau: f64,
    #[serde(default)]
    pub sigma_star: Option<f64>,
    #[serde(default)]
    pub d_hat: Option<Vec<f64>>,
}

impl FitConfig {
    pub fn compensation(&self, p: usize) -> Result<Compensation> {
        match (&self.d_hat, self.sigma_star) {
            (Some(d), _) if d.len() != p => Err(Error::Shape(format!("d_hat has length {} but p = {p}", d.len()))),
            (Some(d), _) => Compensation::new(d.clone(), crate::model::CompensationMode::Known),
            (None, Some(s)) if s >= 0.0 => Ok(Compensation::known_isotropic(p, s)),
            (None, Some(s)) => Err(Error::InvalidParameter(format!("sigma_star must be nonnegative, got {s}"))),
            (None, None) => Ok(Compensation::zero(p)),
        }
    }

    /// Fits on `(y, Z)`; both Dantzig variants use the supplied design.
    pub fn fit(&self, y: DVector<f64>, z: DMatrix<f64>, settings: &SolverSettings) -> Result<FitResult> {
        let data = Dataset::new(y, z, None)?;
        let comp = self.compensation(data.p())?;
        let cfg = EstimatorConfig::new(self.lambda.unwrap_or(1.0), self.mu, self.tau);
        match self.estimator {
            EstimatorKind::Conic => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| Error::Parse("missing field `lambda` (required by the conic estimator)".into()))?;
                fit_conic(&data, &comp, &EstimatorConfig::new(lambda, self.mu, self.tau), settings)
            }
            EstimatorKind::CompMu => fit_compensated_mu(&data, &comp, &cfg, settings),
            EstimatorKind::Mu => fit_mu_selector(&data, &cfg, settings),
            EstimatorKind::DantzigX | EstimatorKind::DantzigZ => fit_dantzig(&data.y, &data.z, self.tau, None, settings),
        }
    }
}

pub fn read_fit_config(path: impl AsRef<Path>) -> Result<FitConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads `y`, `Z` and the estimator settings, and fits.
pub fn fit_from_file(y_path: impl AsRef<Path>, z_path: impl AsRef<Path>, config_path: impl AsRef<Path>) -> Result<FitResult> {
    let cfg = read_fit_config(config_path)?;
    let y = io::read_vector_file(y_path)?;
    let z = io::read_matrix_file(z_path)?;
    cfg.fit(y, z, &SolverSettings::default())
}
