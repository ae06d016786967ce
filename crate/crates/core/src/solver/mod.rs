//! Linear and second-order cone programming.
//!
//! Problems are stated in the user-facing forms [`LinearProgram`] and
//! [`SecondOrderConeProgram`] and lowered to the standard conic form
//!
//! ```text
//! minimise c'x  subject to  A x = b,  G x + s = h,  s in K
//! ```
//!
//! where `K` is a product of a nonnegative orthant and second-order cones.
//! The default engine is a homogeneous self-dual primal-dual interior-point
//! method with Nesterov-Todd scaling and Mehrotra predictor-corrector steps;
//! a first-order ADMM engine is available behind [`Algorithm::Admm`].
//!
//! Every returned [`SolverResult`] carries a [`KktRecord`] computed from the
//! final primal and dual point, so callers can check optimality without
//! trusting the iteration log. [`certify`] recomputes the same record from
//! the user-facing problem only.

mod admm;
pub mod certify;
pub mod cone;
mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use cone::ConeLayout;

pub use dump::dump_standard_form;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_REGULARIZATION: f64 = 1e-10;

/// `min c'x  s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq,  x_i >= 0 for flagged i`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub nonneg: Vec<bool>,
}

impl LinearProgram {
    /// Unconstrained problem over `c.len()` free variables.
    pub fn new(c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            c,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            nonneg: vec![false; n],
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_nonneg(mut self, mask: Vec<bool>) -> Self {
        self.nonneg = mask;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(what.to_string()))
            }
        };
        check(self.a_ineq.ncols() == n, "A_ineq column count differs from c length")?;
        check(self.a_ineq.nrows() == self.b_ineq.len(), "A_ineq row count differs from b_ineq length")?;
        check(self.a_eq.ncols() == n, "A_eq column count differs from c length")?;
        check(self.a_eq.nrows() == self.b_eq.len(), "A_eq row count differs from b_eq length")?;
        check(self.nonneg.len() == n, "nonneg mask length differs from c length")?;
        let finite = self.c.iter().chain(self.a_ineq.iter()).chain(self.b_ineq.iter())
            .chain(self.a_eq.iter()).chain(self.b_eq.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("problem data contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// Second-order cone constraint `|x[cone]|_2 <= x[t]` on variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub t: usize,
    pub x: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SecondOrderConeProgram {
    pub lp: LinearProgram,
    pub cones: Vec<ConeBlock>,
}

impl SecondOrderConeProgram {
    pub fn new(lp: LinearProgram, cones: Vec<ConeBlock>) -> Self {
        Self { lp, cones }
    }

    pub fn validate(&self) -> Result<()> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        let mut used = vec![false; n];
        for block in &self.cones {
            for &i in std::iter::once(&block.t).chain(&block.x) {
                if i >= n {
                    return Err(Error::DimensionMismatch(format!("cone index {i} out of range ({n} variables)")));
                }
                if used[i] {
                    return Err(Error::InvalidParameter(format!("cone index {i} appears in more than one cone position")));
                }
                used[i] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Optimality residuals of a primal-dual pair, all in the infinity norm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktRecord {
    /// Largest violation of any primal constraint.
    pub primal_residual: f64,
    /// Largest entry of the Lagrangian gradient, or of the dual cone violation.
    pub dual_residual: f64,
    /// Slack-dual inner product `sum_i slack_i * dual_i`.
    pub complementarity: f64,
    /// `|primal objective - dual objective|`.
    pub duality_gap: f64,
}

/// Dual multipliers in the user-facing layout.
///
/// Stationarity reads
/// `c + A_ineq' ineq + A_eq' eq - bound - sum_k E_k' cone_k = 0`,
/// where `E_k` picks `(x[t], x[cone])` of block `k`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Duals {
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
    /// One entry per variable; zero for free variables.
    pub bound: Vec<f64>,
    pub cone: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual objective `-b_ineq' ineq - b_eq' eq`; a lower bound on the
    /// optimum by weak duality.
    pub dual_objective: f64,
    pub kkt: KktRecord,
    pub iterations: usize,
    pub duals: Duals,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Algorithm {
    InteriorPoint,
    /// First-order splitting; intended for problems too large for dense
    /// interior-point factorizations. Does not detect infeasibility.
    Admm { rho: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub regularization: f64,
    pub algorithm: Algorithm,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            regularization: DEFAULT_REGULARIZATION,
            algorithm: Algorithm::InteriorPoint,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Standard conic form `min c'x s.t. A x = b, G x + s = h, s in K`.
#[derive(Debug, Clone)]
pub struct ConicForm {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub layout: ConeLayout,
}

/// Row bookkeeping to map standard-form duals back to user constraints.
struct Lowering {
    n_ineq: usize,
    bound_vars: Vec<usize>,
}

fn lower(socp: &SecondOrderConeProgram) -> (ConicForm, Lowering) {
    let lp = &socp.lp;
    let n = lp.num_vars();
    let bound_vars: Vec<usize> = (0..n).filter(|&i| lp.nonneg[i]).collect();
    let soc: Vec<usize> = socp.cones.iter().map(|b| b.x.len() + 1).collect();
    let n_ineq = lp.a_ineq.nrows();
    let m = n_ineq + bound_vars.len() + soc.iter().sum::<usize>();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    g.rows_mut(0, n_ineq).copy_from(&lp.a_ineq);
    h.rows_mut(0, n_ineq).copy_from(&lp.b_ineq);
    let mut row = n_ineq;
    for &i in &bound_vars {
        g[(row, i)] = -1.0;
        row += 1;
    }
    for block in &socp.cones {
        g[(row, block.t)] = -1.0;
        row += 1;
        for &i in &block.x {
            g[(row, i)] = -1.0;
            row += 1;
        }
    }
    let form = ConicForm {
        c: lp.c.clone(),
        a: lp.a_eq.clone(),
        b: lp.b_eq.clone(),
        g,
        h,
        layout: ConeLayout { nonneg: n_ineq + bound_vars.len(), soc },
    };
    (form, Lowering { n_ineq, bound_vars })
}

/// Raw primal-dual output of an engine on a [`ConicForm`].
pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub iterations: usize,
}

impl ConicForm {
    /// KKT record of `(x, y, z)` with slack `h - G x`.
    pub fn kkt(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> KktRecord {
        let slack = &self.h - &self.g * x;
        let eq_res = if self.a.nrows() > 0 { (&self.a * x - &self.b).amax() } else { 0.0 };
        let primal_residual = eq_res.max(self.layout.violation(&slack));
        let grad = &self.c + self.a.tr_mul(y) + self.g.tr_mul(z);
        let dual_residual = grad.amax().max(self.layout.violation(z));
        let pobj = self.c.dot(x);
        let dobj = -self.b.dot(y) - self.h.dot(z);
        KktRecord {
            primal_residual,
            dual_residual,
            complementarity: slack.dot(z),
            duality_gap: (pobj - dobj).abs(),
        }
    }

    pub(crate) fn solve(&self, settings: &SolverSettings) -> Result<RawSolution> {
        if !(settings.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("solver tolerance must be positive, got {}", settings.tol)));
        }
        Ok(match settings.algorithm {
            Algorithm::InteriorPoint => ipm::solve(self, settings),
            Algorithm::Admm { rho, max_iter } => admm::solve(self, settings.tol, rho, max_iter),
        })
    }
}

/// Solves a linear program. Non-convergence is reported through
/// [`SolveStatus::MaxIter`], not as an error.
pub fn solve_lp(lp: &LinearProgram, settings: &SolverSettings) -> Result<SolverResult> {
    solve_socp(&SecondOrderConeProgram::new(lp.clone(), Vec::new()), settings)
}

/// Solves a second-order cone program.
pub fn solve_socp(socp: &SecondOrderConeProgram, settings: &SolverSettings) -> Result<SolverResult> {
    socp.validate()?;
    let (form, low) = lower(socp);
    let RawSolution { status, x, y, z, iterations } = form.solve(settings)?;
    let n = socp.lp.num_vars();

    let mut bound = vec![0.0; n];
    for (k, &i) in low.bound_vars.iter().enumerate() {
        bound[i] = z[low.n_ineq + k];
    }
    let mut cone = Vec::with_capacity(socp.cones.len());
    for (off, q) in form.layout.soc_blocks() {
        cone.push(z.rows(off, q).iter().copied().collect());
    }
    let duals = Duals {
        ineq: z.rows(0, low.n_ineq).iter().copied().collect(),
        eq: y.iter().copied().collect(),
        bound,
        cone,
    };

    let (objective, dual_objective, kkt) = match status {
        SolveStatus::Optimal | SolveStatus::MaxIter => {
            let kkt = form.kkt(&x, &y, &z);
            (form.c.dot(&x), -form.b.dot(&y) - form.h.dot(&z), kkt)
        }
        SolveStatus::Infeasible => (f64::INFINITY, f64::INFINITY, KktRecord::default()),
        SolveStatus::Unbounded => (f64::NEG_INFINITY, f64::NEG_INFINITY, KktRecord::default()),
    };
    Ok(SolverResult {
        status,
        x: x.iter().copied().collect(),
        objective,
        dual_objective,
        kkt,
        iterations,
        duals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_1d_lower(bound: f64) -> LinearProgram {
        // min x  s.t. -x <= -bound
        LinearProgram::new(DVector::from_vec(vec![1.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 1, &[-1.0]), DVector::from_vec(vec![-bound]))
    }

    #[test]
    fn one_dimensional_lower_bound() {
        let r = solve_lp(&lp_1d_lower(3.0), &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-7);
        assert!((r.objective - 3.0).abs() < 1e-7);
        assert!(r.kkt.primal_residual <= 1e-8);
        assert!(r.kkt.duality_gap <= 1e-8 * (1.0 + r.objective.abs()));
    }

    #[test]
    fn empty_feasible_set_is_infeasible() {
        // x >= 1 and x <= 0
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0])).with_inequalities(
            DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        );
        let r = solve_lp(&lp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_detected() {
        // min -x s.t. x >= 0
        let lp = LinearProgram::new(DVector::from_vec(vec![-1.0])).with_nonneg(vec![true]);
        let r = solve_lp(&lp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Unbounded);
    }

    #[test]
    fn two_variable_vertex() {
        // min x1 + x2 s.t. x1 + 2 x2 >= 4, x >= 0 -> (0, 2)
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0, 1.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]), DVector::from_vec(vec![-4.0]))
            .with_nonneg(vec![true, true]);
        let r = solve_lp(&lp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-7);
        assert!(r.x[0].abs() < 1e-6 && (r.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_vector_norm() {
        // min t s.t. |(a, b)| <= t, a = 3, b = 4
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0, 0.0, 0.0])).with_equalities(
            DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![3.0, 4.0]),
        );
        let socp = SecondOrderConeProgram::new(lp, vec![ConeBlock { t: 0, x: vec![1, 2] }]);
        let r = solve_socp(&socp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 5.0).abs() < 1e-7, "{}", r.objective);
    }

    #[test]
    fn one_dimensional_cone() {
        // min t + x1 s.t. |x1| <= t, x1 >= 1 -> objective 2
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0, 1.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[0.0, -1.0]), DVector::from_vec(vec![-1.0]));
        let socp = SecondOrderConeProgram::new(lp, vec![ConeBlock { t: 0, x: vec![1] }]);
        let r = solve_socp(&socp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 2.0).abs() < 1e-7);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let lp = LinearProgram::new(DVector::from_vec(vec![1.0, 2.0]))
            .with_inequalities(DMatrix::zeros(1, 3), DVector::zeros(1));
        assert!(matches!(solve_lp(&lp, &SolverSettings::default()), Err(Error::DimensionMismatch(_))));
        let socp = SecondOrderConeProgram::new(
            LinearProgram::new(DVector::from_vec(vec![1.0, 2.0])),
            vec![ConeBlock { t: 0, x: vec![5] }],
        );
        assert!(matches!(solve_socp(&socp, &SolverSettings::default()), Err(Error::DimensionMismatch(_))));
    }
}
