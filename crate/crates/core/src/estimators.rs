//! Estimators of `theta*` from `(y, Z)`, each posed as one LP or SOCP.
//!
//! All compensated estimators share the score
//! `S(theta) = (1/n) Z'(y - Z theta) + D_hat theta = b0 - M theta`
//! with `b0 = Z'y / n` and `M = Z'Z / n - D_hat`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Compensation, Dataset, EstimatorConfig, ThetaSet};
use crate::solver::{
    solve_lp, solve_socp, ConeBlock, KktRecord, LinearProgram, SecondOrderConeProgram, SolveStatus, SolverResult,
    SolverSettings,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt: KktRecord,
}

impl From<&SolverResult> for SolverSummary {
    fn from(r: &SolverResult) -> Self {
        Self { status: r.status, iterations: r.iterations, kkt: r.kkt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// Conic level `t`, or the l1 level of the LP selectors.
    pub t_hat: f64,
    pub objective: f64,
    /// `|S(theta_hat)|_inf` for the score the estimator constrains.
    pub residual_stat: f64,
    pub solver: SolverSummary,
}

impl FitResult {
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta_hat)
    }
}

/// `b0 - M theta` in matrix form.
#[derive(Debug, Clone)]
pub struct Score {
    pub b0: DVector<f64>,
    pub m: DMatrix<f64>,
}

impl Score {
    pub fn new(y: &DVector<f64>, z: &DMatrix<f64>, d_hat: &[f64]) -> Result<Self> {
        let n = z.nrows();
        let p = z.ncols();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!("y has {} rows but design has {n}", y.len())));
        }
        if d_hat.len() != p {
            return Err(Error::DimensionMismatch(format!("d_hat has length {} but p = {p}", d_hat.len())));
        }
        let nf = n as f64;
        let b0 = z.tr_mul(y) / nf;
        let mut m = crate::model::gram(z);
        for (j, d) in d_hat.iter().enumerate() {
            m[(j, j)] -= d;
        }
        Ok(Self { b0, m })
    }

    pub fn p(&self) -> usize {
        self.b0.len()
    }

    pub fn eval(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b0 - &self.m * theta
    }

    /// Smallest `tau` at which `theta = 0` satisfies the score bound.
    pub fn zero_level(&self) -> f64 {
        self.b0.amax()
    }
}

fn check_data(data: &Dataset, comp: &Compensation, cfg: &EstimatorConfig) -> Result<Score> {
    cfg.validate(data.p())?;
    Score::new(&data.y, &data.z, &comp.d_hat)
}

fn map_status(r: &SolverResult, score: &Score) -> Result<()> {
    match r.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => Err(Error::Infeasible { suggested_tau: score.zero_level() }),
        SolveStatus::Unbounded => Err(Error::Unbounded),
        SolveStatus::MaxIter => Err(Error::SolverFailure(format!(
            "no convergence after {} iterations (primal residual {:.2e}, gap {:.2e})",
            r.iterations, r.kkt.primal_residual, r.kkt.duality_gap
        ))),
    }
}

/// `theta = 0` is the unique minimizer of every objective here whenever it is
/// feasible, which needs no solver call.
fn zero_fit(score: &Score, level: f64, theta_set: Option<&ThetaSet>) -> Option<FitResult> {
    let inside = theta_set.is_none_or(|ts| ts.h.iter().all(|&h| h >= 0.0));
    (inside && score.zero_level() <= level).then(|| FitResult {
        theta_hat: vec![0.0; score.p()],
        t_hat: 0.0,
        objective: 0.0,
        residual_stat: score.zero_level(),
        solver: SolverSummary { status: SolveStatus::Optimal, iterations: 0, kkt: KktRecord::default() },
    })
}

fn concat(blocks: Vec<(DMatrix<f64>, DVector<f64>)>, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let m: usize = blocks.iter().map(|(a, _)| a.nrows()).sum();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut row = 0;
    for (blk, rhs) in blocks {
        let k = blk.nrows();
        a.view_mut((row, 0), (k, n)).copy_from(&blk);
        b.rows_mut(row, k).copy_from(&rhs);
        row += k;
    }
    (a, b)
}

/// Rows of `+-(b0 - M theta) <= mu t + tau` and `Theta` over the variables
/// `(theta+, theta-, [t])`, `theta = theta+ - theta-`; without `t` the bound
/// is the constant `tau`.
fn split_score_rows(
    score: &Score,
    mu: f64,
    tau: f64,
    with_t: bool,
    theta_set: Option<&ThetaSet>,
) -> Vec<(DMatrix<f64>, DVector<f64>)> {
    let p = score.p();
    let n = 2 * p + usize::from(with_t);
    let mut blocks = Vec::new();
    let mut upper = DMatrix::zeros(p, n);
    let mut lower = DMatrix::zeros(p, n);
    upper.view_mut((0, 0), (p, p)).copy_from(&(-&score.m));
    upper.view_mut((0, p), (p, p)).copy_from(&score.m);
    lower.view_mut((0, 0), (p, p)).copy_from(&score.m);
    lower.view_mut((0, p), (p, p)).copy_from(&(-&score.m));
    if with_t {
        upper.column_mut(2 * p).fill(-mu);
        lower.column_mut(2 * p).fill(-mu);
    }
    blocks.push((upper, score.b0.map(|b| tau - b)));
    blocks.push((lower, score.b0.map(|b| tau + b)));
    if let Some(ts) = theta_set {
        let k = ts.g.nrows();
        let mut g = DMatrix::zeros(k, n);
        g.view_mut((0, 0), (k, p)).copy_from(&ts.g);
        g.view_mut((0, p), (k, p)).copy_from(&(-&ts.g));
        blocks.push((g, ts.h.clone()));
    }
    blocks
}

fn split_theta(x: &[f64], p: usize) -> DVector<f64> {
    DVector::from_fn(p, |j, _| x[j] - x[p + j])
}

/// `min |theta|_1 + lambda t` s.t. `|S(theta)|_inf <= mu t + tau`,
/// `|theta|_2 <= t`, `theta in Theta`.
///
/// Variables are `(theta, u, t)` with `-u <= theta <= u`.
pub fn fit_conic(
    data: &Dataset,
    comp: &Compensation,
    cfg: &EstimatorConfig,
    settings: &SolverSettings,
) -> Result<FitResult> {
    let score = check_data(data, comp, cfg)?;
    fit_conic_score(&score, cfg, settings)
}

pub fn fit_conic_score(score: &Score, cfg: &EstimatorConfig, settings: &SolverSettings) -> Result<FitResult> {
    cfg.validate(score.p())?;
    if let Some(f) = zero_fit(score, cfg.tau, cfg.theta_set.as_ref()) {
        return Ok(f);
    }
    let p = score.p();
    let n = 2 * p + 1;
    let t = 2 * p;
    let mut c = DVector::zeros(n);
    c.rows_mut(p, p).fill(1.0);
    c[t] = cfg.lambda;

    let mut blocks = Vec::new();
    let eye = DMatrix::<f64>::identity(p, p);
    let mut abs_hi = DMatrix::zeros(p, n);
    abs_hi.view_mut((0, 0), (p, p)).copy_from(&eye);
    abs_hi.view_mut((0, p), (p, p)).copy_from(&(-&eye));
    let mut abs_lo = DMatrix::zeros(p, n);
    abs_lo.view_mut((0, 0), (p, p)).copy_from(&(-&eye));
    abs_lo.view_mut((0, p), (p, p)).copy_from(&(-&eye));
    blocks.push((abs_hi, DVector::zeros(p)));
    blocks.push((abs_lo, DVector::zeros(p)));
    let mut upper = DMatrix::zeros(p, n);
    upper.view_mut((0, 0), (p, p)).copy_from(&(-&score.m));
    upper.column_mut(t).fill(-cfg.mu);
    let mut lower = DMatrix::zeros(p, n);
    lower.view_mut((0, 0), (p, p)).copy_from(&score.m);
    lower.column_mut(t).fill(-cfg.mu);
    blocks.push((upper, score.b0.map(|b| cfg.tau - b)));
    blocks.push((lower, score.b0.map(|b| cfg.tau + b)));
    if let Some(ts) = &cfg.theta_set {
        let k = ts.g.nrows();
        let mut g = DMatrix::zeros(k, n);
        g.view_mut((0, 0), (k, p)).copy_from(&ts.g);
        blocks.push((g, ts.h.clone()));
    }
    let (a, b) = concat(blocks, n);
    let lp = LinearProgram::new(c).with_inequalities(a, b);
    let socp = SecondOrderConeProgram::new(lp, vec![ConeBlock { t, x: (0..p).collect() }]);
    let r = solve_socp(&socp, settings)?;
    map_status(&r, score)?;
    let theta = DVector::from_fn(p, |j, _| r.x[j]);
    Ok(FitResult {
        residual_stat: score.eval(&theta).amax(),
        theta_hat: theta.iter().copied().collect(),
        t_hat: r.x[t],
        objective: r.objective,
        solver: SolverSummary::from(&r),
    })
}

/// Single LP `min t` over `(theta+, theta-, t)` with
/// `t = sum(theta+ + theta-)` and `|S(theta)|_inf <= mu t + tau`.
///
/// Its solution solves the nonconvex selector whenever `r = phi(r)` has a
/// root; a returned point with `|theta|_1 < t` shows there is none.
pub fn fit_compensated_mu(
    data: &Dataset,
    comp: &Compensation,
    cfg: &EstimatorConfig,
    settings: &SolverSettings,
) -> Result<FitResult> {
    let score = check_data(data, comp, cfg)?;
    fit_compensated_mu_score(&score, cfg, settings)
}

pub fn fit_compensated_mu_score(score: &Score, cfg: &EstimatorConfig, settings: &SolverSettings) -> Result<FitResult> {
    cfg.validate(score.p())?;
    if let Some(f) = zero_fit(score, cfg.tau, cfg.theta_set.as_ref()) {
        return Ok(f);
    }
    let p = score.p();
    let n = 2 * p + 1;
    let mut c = DVector::zeros(n);
    c[2 * p] = 1.0;
    let (a, b) = concat(split_score_rows(score, cfg.mu, cfg.tau, true, cfg.theta_set.as_ref()), n);
    let mut level = DMatrix::from_element(1, n, 1.0);
    level[(0, 2 * p)] = -1.0;
    let mut nonneg = vec![true; n];
    nonneg[2 * p] = false;
    let lp = LinearProgram::new(c)
        .with_inequalities(a, b)
        .with_equalities(level, DVector::zeros(1))
        .with_nonneg(nonneg);
    let r = solve_lp(&lp, settings)?;
    map_status(&r, score)?;
    let theta = split_theta(&r.x, p);
    let l1 = theta.lp_norm(1);
    let residual_stat = score.eval(&theta).amax();
    // Interior-point iterates may carry a tiny overlap theta+ theta- > 0.
    // `(theta, |theta|_1)` still feasible means its level is at most the LP
    // optimum, so it is an optimal point without overlap and `r = phi(r)`.
    let slack = 10.0 * settings.tol * (1.0 + r.x[2 * p]);
    if residual_stat - cfg.mu * l1 - cfg.tau > slack {
        return Err(Error::NoFixedPoint { lp_level: r.x[2 * p], l1_norm: l1 });
    }
    Ok(FitResult {
        residual_stat,
        theta_hat: theta.iter().copied().collect(),
        t_hat: l1,
        objective: r.objective,
        solver: SolverSummary::from(&r),
    })
}

/// Matrix uncertainty selector: the compensated LP with `D_hat = 0`.
pub fn fit_mu_selector(data: &Dataset, cfg: &EstimatorConfig, settings: &SolverSettings) -> Result<FitResult> {
    fit_compensated_mu(data, &Compensation::zero(data.p()), cfg, settings)
}

/// `min |theta|_1` s.t. `|(1/n) M'(y - M theta)|_inf <= tau`, `theta in Theta`.
pub fn fit_dantzig(
    y: &DVector<f64>,
    m: &DMatrix<f64>,
    tau: f64,
    theta_set: Option<&ThetaSet>,
    settings: &SolverSettings,
) -> Result<FitResult> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
    }
    let score = Score::new(y, m, &vec![0.0; m.ncols()])?;
    if let Some(ts) = theta_set {
        if ts.g.ncols() != score.p() || ts.g.nrows() != ts.h.len() {
            return Err(Error::DimensionMismatch("theta set does not match the design width".into()));
        }
    }
    fit_level_lp(&score, tau, theta_set, settings)
}

/// `min |theta|_1` s.t. `|S(theta)|_inf <= level`; the common LP behind
/// the Dantzig selector and `phi(r)`.
fn fit_level_lp(score: &Score, level: f64, theta_set: Option<&ThetaSet>, settings: &SolverSettings) -> Result<FitResult> {
    if let Some(f) = zero_fit(score, level, theta_set) {
        return Ok(f);
    }
    let p = score.p();
    let n = 2 * p;
    let c = DVector::from_element(n, 1.0);
    let (a, b) = concat(split_score_rows(score, 0.0, level, false, theta_set), n);
    let lp = LinearProgram::new(c).with_inequalities(a, b).with_nonneg(vec![true; n]);
    let r = solve_lp(&lp, settings)?;
    map_status(&r, score)?;
    let theta = split_theta(&r.x, p);
    Ok(FitResult {
        residual_stat: score.eval(&theta).amax(),
        t_hat: theta.lp_norm(1),
        theta_hat: theta.iter().copied().collect(),
        objective: r.objective,
        solver: SolverSummary::from(&r),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    /// Minimizer of `phi(r_bar)`.
    pub fit: FitResult,
    pub r_bar: f64,
    /// Every `(r, phi(r))` evaluated; `phi = inf` where `U_r` is empty.
    pub trace: Vec<(f64, f64)>,
}

const MAX_BISECTIONS: usize = 200;
const MAX_DOUBLINGS: usize = 60;

/// Solves `r = phi(r)`, `phi(r) = min{|theta|_1 : |S(theta)|_inf <= mu r + tau}`,
/// by bisection on the decreasing function `phi(r) - r`.
pub fn fixed_point_oracle(
    data: &Dataset,
    comp: &Compensation,
    cfg: &EstimatorConfig,
    r_tol: f64,
    settings: &SolverSettings,
) -> Result<FixedPointResult> {
    let score = check_data(data, comp, cfg)?;
    if !(r_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("r_tol must be positive, got {r_tol}")));
    }
    let mut trace = Vec::new();
    let mut phi = |r: f64| -> Result<Option<FitResult>> {
        match fit_level_lp(&score, cfg.mu * r + cfg.tau, cfg.theta_set.as_ref(), settings) {
            Ok(f) => {
                trace.push((r, f.objective));
                Ok(Some(f))
            }
            Err(Error::Infeasible { .. }) => {
                trace.push((r, f64::INFINITY));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };

    // Bracket: psi(lo) >= 0 (or U_lo empty), psi(hi) <= 0 with U_hi nonempty.
    let mut lo = 0.0;
    let (mut hi, mut best) = match phi(0.0)? {
        Some(f) if f.objective <= r_tol => {
            return Ok(FixedPointResult { fit: f, r_bar: 0.0, trace });
        }
        Some(f) => {
            let h = f.objective;
            (h, phi(h)?.ok_or_else(|| Error::SolverFailure("phi became infinite above a finite value".into()))?)
        }
        None => {
            if cfg.mu == 0.0 {
                return Err(Error::Infeasible { suggested_tau: score.zero_level() });
            }
            let mut r = 1.0;
            let mut found = None;
            for _ in 0..MAX_DOUBLINGS {
                if let Some(f) = phi(r)? {
                    found = Some(f);
                    break;
                }
                lo = r;
                r *= 2.0;
            }
            let f = found.ok_or(Error::NoFixedPoint { lp_level: r, l1_norm: f64::INFINITY })?;
            if f.objective > r {
                lo = r;
                let h = f.objective;
                (h, phi(h)?.ok_or_else(|| Error::SolverFailure("phi became infinite above a finite value".into()))?)
            } else {
                (r, f)
            }
        }
    };

    for _ in 0..MAX_BISECTIONS {
        if (best.objective - hi).abs() <= r_tol {
            return Ok(FixedPointResult { fit: best, r_bar: hi, trace });
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match phi(mid)? {
            Some(f) if f.objective <= mid => {
                hi = mid;
                best = f;
            }
            Some(f) if f.objective - mid <= r_tol => {
                return Ok(FixedPointResult { fit: f, r_bar: mid, trace });
            }
            _ => lo = mid,
        }
    }
    Err(Error::NoFixedPoint { lp_level: hi, l1_norm: best.objective })
}
