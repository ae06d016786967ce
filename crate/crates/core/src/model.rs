//! Data model of the errors-in-variables regression `y = X theta* + xi`,
//! `Z = X + W`, the Gaussian data-generating process, missing-data
//! rescaling, and the two tuning rules.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed data `(y, Z)` plus the true design when it is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    /// True design; only used by oracle fits and prediction metrics.
    pub x: Option<DMatrix<f64>>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, z: DMatrix<f64>, x: Option<DMatrix<f64>>) -> Result<Self> {
        if z.nrows() == 0 || z.ncols() == 0 {
            return Err(Error::Shape(format!("design must be nonempty, got {}x{}", z.nrows(), z.ncols())));
        }
        if y.len() != z.nrows() {
            return Err(Error::Shape(format!("y has {} rows but Z has {}", y.len(), z.nrows())));
        }
        if let Some(x) = &x {
            if x.shape() != z.shape() {
                return Err(Error::Shape(format!("X is {:?} but Z is {:?}", x.shape(), z.shape())));
            }
        }
        Ok(Self { y, z, x })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }
}

/// Parameters of the Gaussian generator: rows `x_i ~ N(0, Sigma)`,
/// `w_i ~ N(0, sigma_star^2 I)`, `xi_i ~ N(0, sigma^2)`.
///
/// `Sigma_ij = rho^|i-j|` unless `covariance` supplies a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub theta_star: DVector<f64>,
    pub sigma: f64,
    pub sigma_star: f64,
    pub rho: f64,
    pub seed: u64,
    pub covariance: Option<DMatrix<f64>>,
}

impl TrueModel {
    pub fn ar1(theta_star: DVector<f64>, sigma: f64, sigma_star: f64, rho: f64, seed: u64) -> Self {
        Self { theta_star, sigma, sigma_star, rho, seed, covariance: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.sigma_star >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise levels must be nonnegative, got sigma={} sigma_star={}",
                self.sigma, self.sigma_star
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Population covariance of the rows of `X`.
    pub fn sigma_matrix(&self, p: usize) -> DMatrix<f64> {
        match &self.covariance {
            Some(s) => s.clone(),
            None => ar1_covariance(p, self.rho),
        }
    }
}

pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Symmetric square root factor `L` with `L L' = S` for PSD `S`.
fn psd_factor(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(Error::Shape(format!("covariance must be square, got {:?}", s.shape())));
    }
    let eig = s.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::NotPsd(min));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
}

/// Draws one dataset. Deterministic given `model.seed`.
pub fn generate_dgp(model: &TrueModel, n: usize, p: usize) -> Result<Dataset> {
    model.validate()?;
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!("dimensions must be positive, got n={n} p={p}")));
    }
    if model.theta_star.len() != p {
        return Err(Error::DimensionMismatch(format!("theta_star has length {} but p = {p}", model.theta_star.len())));
    }
    let factor = match &model.covariance {
        Some(s) if s.shape() != (p, p) => {
            return Err(Error::DimensionMismatch(format!("covariance is {:?} but p = {p}", s.shape())));
        }
        Some(s) => Some(psd_factor(s)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut x = DMatrix::zeros(n, p);
    let mut z = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut g = DVector::zeros(p);
    let innov = (1.0 - model.rho * model.rho).sqrt();
    for i in 0..n {
        for v in g.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        match &factor {
            Some(l) => {
                let row = l * &g;
                for j in 0..p {
                    x[(i, j)] = row[j];
                }
            }
            None => {
                x[(i, 0)] = g[0];
                for j in 1..p {
                    x[(i, j)] = model.rho * x[(i, j - 1)] + innov * g[j];
                }
            }
        }
        for j in 0..p {
            let w: f64 = rng.sample(StandardNormal);
            z[(i, j)] = x[(i, j)] + model.sigma_star * w;
        }
        let xi: f64 = rng.sample(StandardNormal);
        y[i] = (0..p).map(|j| x[(i, j)] * model.theta_star[j]).sum::<f64>() + model.sigma * xi;
    }
    Dataset::new(y, z, Some(x))
}

/// Masked observations `Z~_ij = X_ij eta_ij` with `P(eta_ij = 0) = pi_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingDataSample {
    pub z_tilde: DMatrix<f64>,
    pub pi: DVector<f64>,
}

impl MissingDataSample {
    /// Masks `x` with independent Bernoulli draws.
    pub fn simulate(x: &DMatrix<f64>, pi: &DVector<f64>, seed: u64) -> Result<Self> {
        check_pi(pi, x.ncols())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z_tilde = x.clone();
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                if rng.random::<f64>() < pi[j] {
                    z_tilde[(i, j)] = 0.0;
                }
            }
        }
        Ok(Self { z_tilde, pi: pi.clone() })
    }
}

fn check_pi(pi: &DVector<f64>, p: usize) -> Result<()> {
    if pi.len() != p {
        return Err(Error::DimensionMismatch(format!("pi has length {} but there are {p} columns", pi.len())));
    }
    if let Some((j, v)) = pi.iter().enumerate().find(|(_, v)| !(0.0..1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("missingness probability pi[{j}] = {v} outside [0, 1)")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationMode {
    /// `D_hat` equals the true noise variances.
    Known,
    /// `D_hat` is a data-driven estimate; the tuning adds the slack `b`.
    Estimated,
    /// No compensation (`D_hat = 0`).
    Zero,
}

/// Diagonal compensation matrix `D_hat = diag(d_hat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compensation {
    pub d_hat: Vec<f64>,
    pub mode: CompensationMode,
}

impl Compensation {
    pub fn new(d_hat: Vec<f64>, mode: CompensationMode) -> Result<Self> {
        if let Some((j, v)) = d_hat.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("d_hat[{j}] = {v} must be nonnegative")));
        }
        Ok(Self { d_hat, mode })
    }

    /// `sigma_star^2 I`, the setting of a known homoscedastic noise level.
    pub fn known_isotropic(p: usize, sigma_star: f64) -> Self {
        Self { d_hat: vec![sigma_star * sigma_star; p], mode: CompensationMode::Known }
    }

    pub fn zero(p: usize) -> Self {
        Self { d_hat: vec![0.0; p], mode: CompensationMode::Zero }
    }

    pub fn p(&self) -> usize {
        self.d_hat.len()
    }
}

/// Rescales masked data to `Z_ij = Z~_ij / (1 - pi_j)` and estimates
/// `sigma_j^2` by `pi_j / (1 - pi_j)^2 * mean_i Z~_ij^2`.
pub fn missing_data_rescale(sample: &MissingDataSample) -> Result<(DMatrix<f64>, Compensation)> {
    let zt = &sample.z_tilde;
    check_pi(&sample.pi, zt.ncols())?;
    let n = zt.nrows() as f64;
    let mut z = zt.clone();
    let mut d_hat = Vec::with_capacity(zt.ncols());
    for (j, &pj) in sample.pi.iter().enumerate() {
        let keep = 1.0 - pj;
        z.column_mut(j).unscale_mut(keep);
        let second = zt.column(j).norm_squared() / n;
        d_hat.push(pj / (keep * keep) * second);
    }
    Ok((z, Compensation { d_hat, mode: CompensationMode::Estimated }))
}

/// `max_j (1/n) sum_i |X_ij|^k`.
pub fn compute_m_k(x: &DMatrix<f64>, k: f64) -> f64 {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| c.iter().map(|v| v.abs().powf(k)).sum::<f64>() / n)
        .fold(0.0, f64::max)
}

/// `Psi = X'X / n`, exactly symmetric.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x.tr_mul(x) / x.nrows() as f64;
    for i in 0..g.nrows() {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Constants of the deviation bounds behind the theoretical tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConstants {
    pub epsilon: f64,
    pub gamma0: f64,
    pub t0: f64,
    pub gamma2: f64,
    pub t2: f64,
    pub c_b: f64,
    pub c_b_prime: f64,
    /// Bound on `max_j (1/n) sum_i X_ij^2`.
    pub m2: f64,
}

impl TuningConstants {
    /// `gamma0 = gamma2 = sigma sigma_star + sigma_star^2`,
    /// `t0 = t2 = 1 / (2 max(sigma, sigma_star)^2)`, `c_b = c_b' = 1`.
    pub fn defaults(sigma: f64, sigma_star: f64, epsilon: f64, m2: f64) -> Self {
        let gamma = sigma * sigma_star + sigma_star * sigma_star;
        let big = sigma.max(sigma_star);
        let t = 1.0 / (2.0 * big * big);
        Self { epsilon, gamma0: gamma, t0: t, gamma2: gamma, t2: t, c_b: 1.0, c_b_prime: 1.0, m2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        let named = [
            ("gamma0", self.gamma0),
            ("t0", self.t0),
            ("gamma2", self.gamma2),
            ("t2", self.t2),
            ("c_b", self.c_b),
            ("c_b_prime", self.c_b_prime),
            ("m2", self.m2),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Theoretical levels with their individual deviation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalTuning {
    pub mu: f64,
    pub tau: f64,
    pub delta1_prime: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4_prime: f64,
    pub delta5: f64,
    pub b: f64,
}

fn sub_exponential_delta(gamma: f64, t: f64, log_term: f64, n: f64) -> f64 {
    (gamma * (2.0 * log_term / n).sqrt()).max(2.0 * log_term / (t * n))
}

/// `mu = delta1' + delta4' + delta5 + b`, `tau = delta2 + delta3`.
///
/// `b` is nonzero only for [`CompensationMode::Estimated`].
pub fn theoretical_tuning(
    tc: &TuningConstants,
    n: usize,
    p: usize,
    sigma: f64,
    sigma_star: f64,
    mode: CompensationMode,
) -> Result<TheoreticalTuning> {
    tc.validate()?;
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!("dimensions must be positive, got n={n} p={p}")));
    }
    let nf = n as f64;
    let l = (2.0 * p as f64 / tc.epsilon).ln();
    let delta2 = sigma * (2.0 * tc.m2 * l / nf).sqrt();
    let delta1_prime = sigma_star * (2.0 * tc.m2 * l / nf).sqrt();
    let delta3 = sub_exponential_delta(tc.gamma0, tc.t0, l, nf);
    let delta5 = delta3;
    let delta4_prime = sub_exponential_delta(tc.gamma2, tc.t2, l, nf);
    let b = match mode {
        CompensationMode::Estimated => tc.c_b * ((tc.c_b_prime * p as f64 / tc.epsilon).ln().max(0.0) / nf).sqrt(),
        CompensationMode::Known | CompensationMode::Zero => 0.0,
    };
    Ok(TheoreticalTuning {
        mu: delta1_prime + delta4_prime + delta5 + b,
        tau: delta2 + delta3,
        delta1_prime,
        delta2,
        delta3,
        delta4_prime,
        delta5,
        b,
    })
}

/// `mu = tau = sigma sqrt(log(p / epsilon) / n)`.
pub fn practical_tuning(epsilon: f64, n: usize, p: usize, sigma: f64) -> Result<(f64, f64)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!("dimensions must be positive, got n={n} p={p}")));
    }
    let level = sigma * ((p as f64 / epsilon).ln().max(0.0) / n as f64).sqrt();
    Ok((level, level))
}

/// Parameter set `Theta = {theta : G theta <= h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSet {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Tuning triple and parameter set shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub mu: f64,
    pub tau: f64,
    pub theta_set: Option<ThetaSet>,
}

impl EstimatorConfig {
    pub fn new(lambda: f64, mu: f64, tau: f64) -> Self {
        Self { lambda, mu, tau, theta_set: None }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) || !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu and tau must be nonnegative, got mu={} tau={}",
                self.mu, self.tau
            )));
        }
        if let Some(ts) = &self.theta_set {
            if ts.g.ncols() != p || ts.g.nrows() != ts.h.len() {
                return Err(Error::DimensionMismatch(format!(
                    "theta set G is {:?} with {} bounds for p = {p}",
                    ts.g.shape(),
                    ts.h.len()
                )));
            }
        }
        Ok(())
    }
}

/// Seed of replication `index` derived from `base` (splitmix64 finalizer).
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// JSON form of a data-generating configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub sigma_star: f64,
    pub rho: f64,
    pub theta_star: Vec<f64>,
    pub seed: u64,
    pub epsilon: f64,
}

impl DgpConfig {
    pub fn true_model(&self) -> TrueModel {
        TrueModel::ar1(DVector::from_vec(self.theta_star.clone()), self.sigma, self.sigma_star, self.rho, self.seed)
    }

    pub fn generate(&self) -> Result<Dataset> {
        generate_dgp(&self.true_model(), self.n, self.p)
    }
}
