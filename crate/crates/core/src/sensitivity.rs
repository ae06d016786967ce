//! Sensitivity constants of a Gram matrix `Psi` over the cones
//! `C_J(u) = {Delta : |Delta_{J^c}|_1 <= u |Delta_J|_1}` with `|J| <= s`.
//!
//! `kappa_q(s, u)` is the minimum of `|Psi Delta|_inf` over cone vectors with
//! `|Delta|_q = 1`; `kappa_pr` normalizes by `|Psi^{1/2} Delta|_2` instead.
//! Since `C_J(u)` grows with `J`, only supports of size `min(s, p)` are
//! enumerated.
//!
//! `q = inf` and `q = 1` are computed exactly. For `q = inf` every support,
//! sign pattern on `J` and pinned coordinate `Delta_k = 1` gives one LP. For
//! `q = 1` the split-variable LP is only a relaxation (a coordinate may carry
//! both a positive and a negative part, which lets `|Delta|_1` fall below the
//! normalization), so each sign pattern is refined by branch and bound over
//! the signs of `Delta_{J^c}`. `q = 2` and `q = pr` are bracketed: the upper
//! end is the best point found by a convex-concave local search, the lower
//! end follows from the exact constants.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{solve_lp, LinearProgram, SolveStatus, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitivityNorm {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "pr")]
    Pr,
}

impl FromStr for SensitivityNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            "inf" | "infinity" => Ok(Self::Inf),
            "pr" => Ok(Self::Pr),
            other => Err(Error::InvalidParameter(format!("unknown sensitivity norm '{other}' (expected 1, 2, inf or pr)"))),
        }
    }
}

impl fmt::Display for SensitivityNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::One => "1",
            Self::Two => "2",
            Self::Inf => "inf",
            Self::Pr => "pr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactLp,
    LocalSearch,
    /// The exact constants were over budget; the lower end is the trivial 0.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensitivityValue {
    Exact { value: f64 },
    Bracket { lower: f64, upper: f64 },
}

impl SensitivityValue {
    pub fn lower(&self) -> f64 {
        match *self {
            Self::Exact { value } => value,
            Self::Bracket { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            Self::Exact { value } => value,
            Self::Bracket { upper, .. } => upper,
        }
    }
}

/// A cone vector attaining the reported value, normalized for its norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub delta: Vec<f64>,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub psi: Vec<Vec<f64>>,
    pub s: usize,
    pub u: f64,
    pub q: SensitivityNorm,
    pub value: SensitivityValue,
    pub witness: Witness,
    pub method: Method,
    /// Number of LPs solved by the exact enumeration.
    pub subproblems: usize,
    /// Smallest `Delta' Psi Delta / |Delta_J|_2^2` seen by the local search.
    pub re_upper: Option<f64>,
}

/// Limits on the exact enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactBudget {
    pub p_max: usize,
    pub s_max: usize,
    pub max_subproblems: usize,
}

impl Default for ExactBudget {
    fn default() -> Self {
        Self { p_max: 20, s_max: 4, max_subproblems: 200_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { restarts: 20, seed: 0, max_iter: 100 }
    }
}

/// `|Psi Delta|_inf`.
pub fn image_norm(psi: &DMatrix<f64>, delta: &DVector<f64>) -> f64 {
    (psi * delta).amax()
}

/// The normalizing norm of `q`; `pr` uses `sqrt(Delta' Psi Delta)`.
pub fn normalizer(psi: &DMatrix<f64>, delta: &DVector<f64>, q: SensitivityNorm) -> f64 {
    match q {
        SensitivityNorm::One => delta.lp_norm(1),
        SensitivityNorm::Two => delta.norm(),
        SensitivityNorm::Inf => delta.amax(),
        SensitivityNorm::Pr => delta.dot(&(psi * delta)).max(0.0).sqrt(),
    }
}

/// `|Delta_{J^c}|_1 - u |Delta_J|_1`; nonpositive exactly on the cone.
pub fn cone_excess(delta: &DVector<f64>, support: &[usize], u: f64) -> f64 {
    let inside: f64 = support.iter().map(|&j| delta[j].abs()).sum();
    delta.lp_norm(1) - inside - u * inside
}

/// Largest absolute off-diagonal entry of `D^{-1/2} Psi D^{-1/2}`, `D = diag(Psi)`.
pub fn coherence(psi: &DMatrix<f64>) -> Result<f64> {
    check_square(psi)?;
    let p = psi.nrows();
    for i in 0..p {
        if psi[(i, i)] <= 0.0 {
            return Err(Error::ZeroDiagonal(i));
        }
    }
    let mut rho: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                rho = rho.max((psi[(i, j)] / (psi[(i, i)] * psi[(j, j)]).sqrt()).abs());
            }
        }
    }
    Ok(rho)
}

fn check_square(psi: &DMatrix<f64>) -> Result<()> {
    if psi.nrows() != psi.ncols() || psi.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("Psi must be square and nonempty, got {}x{}", psi.nrows(), psi.ncols())));
    }
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("Psi contains non-finite entries".into()));
    }
    let scale = psi.amax().max(1.0);
    if (psi - psi.transpose()).amax() > 1e-10 * scale {
        return Err(Error::InvalidParameter("Psi must be symmetric".into()));
    }
    Ok(())
}

fn check_inputs(psi: &DMatrix<f64>, s: usize, u: f64) -> Result<()> {
    check_square(psi)?;
    if s == 0 {
        return Err(Error::InvalidParameter("sparsity s must be at least 1".into()));
    }
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!("cone parameter u must be positive, got {u}")));
    }
    Ok(())
}

fn rows_of(psi: &DMatrix<f64>) -> Vec<Vec<f64>> {
    psi.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// All `k`-subsets of `0..p` in lexicographic order.
fn combinations(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > p {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < p - k + i) else {
            return out;
        };
        cur[i] += 1;
        for t in i + 1..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

fn binomial(p: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (p - i) as f64 / (i + 1) as f64)
}

/// How each coordinate of `Delta` is represented in a subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// `Delta_i = sign * b`, `b >= 0`.
    Signed(f64),
    /// `Delta_i = v+ - v-`, both nonnegative.
    Free,
}

/// Linear map from LP variables to `Delta`, plus the absolute-mass rows.
/// The last variable is the epigraph `e >= |Psi Delta|_inf`.
struct Layout {
    d: DMatrix<f64>,
    mass_in: DVector<f64>,
    mass_out: DVector<f64>,
    /// `(coordinate, column of v+)`; `v-` follows it.
    free: Vec<(usize, usize)>,
}

impl Layout {
    fn new(kinds: &[Coord], in_support: &[bool]) -> Self {
        let p = kinds.len();
        let nv = kinds.iter().map(|k| if matches!(k, Coord::Free) { 2 } else { 1 }).sum::<usize>() + 1;
        let mut d = DMatrix::zeros(p, nv);
        let mut mass_in = DVector::zeros(nv);
        let mut mass_out = DVector::zeros(nv);
        let mut free = Vec::new();
        let mut col = 0;
        for (i, k) in kinds.iter().enumerate() {
            let mass = if in_support[i] { &mut mass_in } else { &mut mass_out };
            match *k {
                Coord::Signed(sign) => {
                    d[(i, col)] = sign;
                    mass[col] = 1.0;
                    col += 1;
                }
                Coord::Free => {
                    d[(i, col)] = 1.0;
                    d[(i, col + 1)] = -1.0;
                    mass[col] = 1.0;
                    mass[col + 1] = 1.0;
                    free.push((i, col));
                    col += 2;
                }
            }
        }
        Self { d, mass_in, mass_out, free }
    }

    fn nv(&self) -> usize {
        self.d.ncols()
    }

    /// `+-Psi Delta <= e` and the cone row.
    fn base_rows(&self, psi: &DMatrix<f64>, u: f64) -> (DMatrix<f64>, DVector<f64>) {
        let p = psi.nrows();
        let nv = self.nv();
        let pd = psi * &self.d;
        let mut a = DMatrix::zeros(2 * p + 1, nv);
        a.view_mut((0, 0), (p, nv)).copy_from(&pd);
        a.view_mut((p, 0), (p, nv)).copy_from(&(-&pd));
        for i in 0..2 * p {
            a[(i, nv - 1)] = -1.0;
        }
        let cone = &self.mass_out - &self.mass_in * u;
        a.row_mut(2 * p).copy_from(&cone.transpose());
        (a, DVector::zeros(2 * p + 1))
    }

    fn program(&self, extra: (DMatrix<f64>, DVector<f64>), eq: (DMatrix<f64>, DVector<f64>), psi: &DMatrix<f64>, u: f64) -> LinearProgram {
        let nv = self.nv();
        let (a0, b0) = self.base_rows(psi, u);
        let m = a0.nrows() + extra.0.nrows();
        let mut a = DMatrix::zeros(m, nv);
        a.view_mut((0, 0), (a0.nrows(), nv)).copy_from(&a0);
        a.view_mut((a0.nrows(), 0), (extra.0.nrows(), nv)).copy_from(&extra.0);
        let mut b = DVector::zeros(m);
        b.rows_mut(0, b0.len()).copy_from(&b0);
        b.rows_mut(b0.len(), extra.1.len()).copy_from(&extra.1);
        let mut c = DVector::zeros(nv);
        c[nv - 1] = 1.0;
        LinearProgram::new(c).with_inequalities(a, b).with_equalities(eq.0, eq.1).with_nonneg(vec![true; nv])
    }

    fn delta(&self, x: &[f64]) -> DVector<f64> {
        &self.d * DVector::from_column_slice(x)
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    value: f64,
    delta: DVector<f64>,
    support: Vec<usize>,
}

impl Candidate {
    /// Normalizes `delta` for `q`; `None` for a zero vector.
    fn new(psi: &DMatrix<f64>, delta: DVector<f64>, support: &[usize], q: SensitivityNorm) -> Option<Self> {
        let nrm = normalizer(psi, &delta, q);
        if !(nrm > 1e-14) {
            return None;
        }
        let delta = delta / nrm;
        Some(Self { value: image_norm(psi, &delta), delta, support: support.to_vec() })
    }
}

fn keep_better(best: &mut Option<Candidate>, cand: Option<Candidate>) {
    if let Some(c) = cand {
        if best.as_ref().is_none_or(|b| c.value < b.value) {
            *best = Some(c);
        }
    }
}

struct Ctx<'a> {
    psi: &'a DMatrix<f64>,
    u: f64,
    counter: &'a AtomicUsize,
    max_subproblems: usize,
}

fn tight_settings() -> SolverSettings {
    SolverSettings::with_tol(1e-10)
}

impl Ctx<'_> {
    /// Solves one subproblem; `None` when it is infeasible.
    fn solve(&self, lp: &LinearProgram) -> Result<Option<Vec<f64>>> {
        let used = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
        if used > self.max_subproblems {
            return Err(Error::BudgetExceeded(format!("more than {} sensitivity subproblems", self.max_subproblems)));
        }
        solve_quiet(lp)
    }
}

fn solve_quiet(lp: &LinearProgram) -> Result<Option<Vec<f64>>> {
    let mut r = solve_lp(lp, &tight_settings())?;
    if r.status == SolveStatus::MaxIter {
        r = solve_lp(lp, &SolverSettings::default())?;
    }
    match r.status {
        SolveStatus::Optimal => Ok(Some(r.x)),
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::Unbounded => Err(Error::SolverFailure("sensitivity subproblem reported unbounded".into())),
        SolveStatus::MaxIter => Err(Error::SolverFailure(format!(
            "sensitivity subproblem did not converge (primal residual {:.2e}, gap {:.2e})",
            r.kkt.primal_residual, r.kkt.duality_gap
        ))),
    }
}

fn support_mask(p: usize, support: &[usize]) -> Vec<bool> {
    let mut m = vec![false; p];
    for &j in support {
        m[j] = true;
    }
    m
}

fn pattern_signs(support: &[usize], pattern: usize) -> Vec<f64> {
    (0..support.len()).map(|i| if pattern >> i & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

fn kinds_for(p: usize, support: &[usize], signs: &[f64]) -> Vec<Coord> {
    let mut kinds = vec![Coord::Free; p];
    for (&j, &sg) in support.iter().zip(signs) {
        kinds[j] = Coord::Signed(sg);
    }
    kinds
}

/// `min |Psi Delta|_inf` over `C_J(u)` with `|Delta|_inf = 1`.
fn kappa_inf_support(ctx: &Ctx<'_>, support: &[usize]) -> Result<Option<Candidate>> {
    let p = ctx.psi.nrows();
    let mask = support_mask(p, support);
    let mut best = None;
    for pattern in 0..1usize << support.len() {
        let signs = pattern_signs(support, pattern);
        let layout = Layout::new(&kinds_for(p, support, &signs), &mask);
        let nv = layout.nv();
        let mut boxed = DMatrix::zeros(2 * p, nv);
        boxed.view_mut((0, 0), (p, nv)).copy_from(&layout.d);
        boxed.view_mut((p, 0), (p, nv)).copy_from(&(-&layout.d));
        let ones = DVector::from_element(2 * p, 1.0);
        for k in 0..p {
            // Delta -> -Delta maps pattern to its complement, so the pinned
            // coordinate is +1 and a negative sign on it is never needed.
            if let Some(pos) = support.iter().position(|&j| j == k) {
                if signs[pos] < 0.0 {
                    continue;
                }
            }
            let pin = (layout.d.rows(k, 1).into_owned(), DVector::from_element(1, 1.0));
            let lp = layout.program((boxed.clone(), ones.clone()), pin, ctx.psi, ctx.u);
            if let Some(x) = ctx.solve(&lp)? {
                keep_better(&mut best, Candidate::new(ctx.psi, layout.delta(&x), support, SensitivityNorm::Inf));
            }
        }
    }
    Ok(best)
}

/// Relaxed `|Delta|_1 = 1` subproblem: the mass rows count `v+ + v-`.
fn l1_node(ctx: &Ctx<'_>, kinds: &[Coord], mask: &[bool]) -> Result<Option<(Layout, Vec<f64>)>> {
    let layout = Layout::new(kinds, mask);
    let nv = layout.nv();
    let norm = DMatrix::from_row_slice(1, nv, (&layout.mass_in + &layout.mass_out).as_slice());
    let lp = layout.program((DMatrix::zeros(0, nv), DVector::zeros(0)), (norm, DVector::from_element(1, 1.0)), ctx.psi, ctx.u);
    Ok(ctx.solve(&lp)?.map(|x| (layout, x)))
}

fn prune_slack(incumbent: f64) -> f64 {
    1e-10 * (1.0 + incumbent)
}

/// `min |Psi Delta|_inf` over `C_J(u)` with `|Delta|_1 = 1`.
fn kappa_one_support(ctx: &Ctx<'_>, support: &[usize]) -> Result<Option<Candidate>> {
    let p = ctx.psi.nrows();
    let mask = support_mask(p, support);
    let mut best: Option<Candidate> = None;
    // Delta -> -Delta lets the first sign on J be fixed to +.
    let patterns = 1usize << (support.len() - 1);
    for pattern in 0..patterns {
        let signs = pattern_signs(support, pattern << 1);
        let mut stack = vec![kinds_for(p, support, &signs)];
        while let Some(kinds) = stack.pop() {
            let Some((layout, x)) = l1_node(ctx, &kinds, &mask)? else {
                continue;
            };
            let bound = x[layout.nv() - 1];
            let incumbent = best.as_ref().map_or(f64::INFINITY, |b| b.value);
            if bound >= incumbent - prune_slack(incumbent) {
                continue;
            }
            let delta = layout.delta(&x);
            if delta.lp_norm(1) >= 1.0 - 1e-9 {
                // No coordinate carries both parts: the relaxation is tight here.
                keep_better(&mut best, Candidate::new(ctx.psi, delta, support, SensitivityNorm::One));
                continue;
            }
            let rounded: Vec<Coord> = kinds
                .iter()
                .enumerate()
                .map(|(i, k)| match k {
                    Coord::Free => Coord::Signed(if delta[i] < 0.0 { -1.0 } else { 1.0 }),
                    fixed => *fixed,
                })
                .collect();
            if let Some((lr, xr)) = l1_node(ctx, &rounded, &mask)? {
                keep_better(&mut best, Candidate::new(ctx.psi, lr.delta(&xr), support, SensitivityNorm::One));
            }
            let incumbent = best.as_ref().map_or(f64::INFINITY, |b| b.value);
            if bound >= incumbent - prune_slack(incumbent) {
                continue;
            }
            let (k, _) = layout
                .free
                .iter()
                .map(|&(i, col)| (i, x[col].min(x[col + 1])))
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
            if k == usize::MAX {
                continue;
            }
            for sign in [-1.0, 1.0] {
                let mut child = kinds.clone();
                child[k] = Coord::Signed(sign);
                stack.push(child);
            }
        }
    }
    Ok(best)
}

fn map_supports<F>(supports: &[Vec<usize>], f: F) -> Vec<Result<Option<Candidate>>>
where
    F: Fn(&[usize]) -> Result<Option<Candidate>> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        supports.par_iter().map(|j| f(j)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        supports.iter().map(|j| f(j)).collect()
    }
}

/// Reduces in index order so the result does not depend on scheduling.
fn reduce(results: Vec<Result<Option<Candidate>>>) -> Result<Option<Candidate>> {
    let mut best = None;
    for r in results {
        keep_better(&mut best, r?);
    }
    Ok(best)
}

fn exact_candidate(psi: &DMatrix<f64>, s: usize, u: f64, q: SensitivityNorm, budget: &ExactBudget) -> Result<(Candidate, usize)> {
    let p = psi.nrows();
    if p > budget.p_max || s.min(p) > budget.s_max {
        return Err(Error::BudgetExceeded(format!(
            "exact enumeration limited to p <= {} and s <= {} (got p = {p}, s = {s})",
            budget.p_max, budget.s_max
        )));
    }
    let k = s.min(p);
    if q == SensitivityNorm::Inf {
        let planned = binomial(p, k) * (1u64 << k) as f64 * p as f64;
        if planned > budget.max_subproblems as f64 {
            return Err(Error::BudgetExceeded(format!("{planned} subproblems exceed the budget of {}", budget.max_subproblems)));
        }
    }
    let supports = combinations(p, k);
    let counter = AtomicUsize::new(0);
    let ctx = Ctx { psi, u, counter: &counter, max_subproblems: budget.max_subproblems };
    let results = match q {
        SensitivityNorm::Inf => map_supports(&supports, |j| kappa_inf_support(&ctx, j)),
        SensitivityNorm::One => map_supports(&supports, |j| kappa_one_support(&ctx, j)),
        _ => unreachable!("exact enumeration covers q in {{1, inf}}"),
    };
    let best = reduce(results)?.ok_or_else(|| Error::SolverFailure("no feasible sensitivity subproblem".into()))?;
    Ok((best, counter.load(Ordering::Relaxed)))
}

/// Exact `kappa_q(s, u)` for `q` in `{1, inf}`.
pub fn kappa_exact(psi: &DMatrix<f64>, s: usize, u: f64, q: SensitivityNorm, budget: &ExactBudget) -> Result<SensitivityReport> {
    check_inputs(psi, s, u)?;
    if !matches!(q, SensitivityNorm::One | SensitivityNorm::Inf) {
        return Err(Error::InvalidParameter(format!("exact computation supports q in {{1, inf}}, got {q}")));
    }
    let (best, subproblems) = exact_candidate(psi, s, u, q, budget)?;
    Ok(SensitivityReport {
        psi: rows_of(psi),
        s,
        u,
        q,
        value: SensitivityValue::Exact { value: best.value },
        witness: Witness { delta: best.delta.iter().copied().collect(), support: best.support },
        method: Method::ExactLp,
        subproblems,
        re_upper: None,
    })
}

fn check_psd(psi: &DMatrix<f64>) -> Result<()> {
    let eig = psi.clone().symmetric_eigen().eigenvalues;
    let min = eig.min();
    if min < -1e-10 * eig.amax().max(1.0) {
        return Err(Error::NotPsd(min));
    }
    Ok(())
}

/// Gradient of the normalizer at `delta`; `g' delta = N(delta)` by homogeneity.
fn normalizer_gradient(psi: &DMatrix<f64>, delta: &DVector<f64>, q: SensitivityNorm) -> DVector<f64> {
    let nrm = normalizer(psi, delta, q);
    match q {
        SensitivityNorm::Pr => psi * delta / nrm,
        _ => delta / nrm,
    }
}

fn re_ratio(psi: &DMatrix<f64>, delta: &DVector<f64>, support: &[usize]) -> Option<f64> {
    let inside: f64 = support.iter().map(|&j| delta[j] * delta[j]).sum();
    (inside > 1e-14).then(|| delta.dot(&(psi * delta)).abs() / inside)
}

struct LocalOutcome {
    best: Option<Candidate>,
    re_upper: Option<f64>,
}

/// Convex-concave iteration from `start`: linearize the normalizer and solve
/// `min |Psi Delta|_inf` over the sign-fixed cone with `g' Delta >= 1`.
/// Every step is feasible for the next one, so the ratio never increases.
fn local_descent(psi: &DMatrix<f64>, u: f64, support: &[usize], start: DVector<f64>, q: SensitivityNorm, max_iter: usize) -> Result<LocalOutcome> {
    let p = psi.nrows();
    let signs: Vec<f64> = support.iter().map(|&j| if start[j] < 0.0 { -1.0 } else { 1.0 }).collect();
    let layout = Layout::new(&kinds_for(p, support, &signs), &support_mask(p, support));
    let nv = layout.nv();
    let mut out = LocalOutcome { best: None, re_upper: None };
    let mut cur = start;
    let mut value = f64::INFINITY;
    for _ in 0..max_iter {
        if !(normalizer(psi, &cur, q) > 1e-14) {
            break;
        }
        let g = normalizer_gradient(psi, &cur, q);
        let row = DMatrix::from_row_slice(1, nv, (-(g.transpose() * &layout.d)).as_slice());
        let lp = layout.program((row, DVector::from_element(1, -1.0)), (DMatrix::zeros(0, nv), DVector::zeros(0)), psi, u);
        let Some(x) = solve_quiet(&lp)? else {
            break;
        };
        let delta = layout.delta(&x);
        if let Some(r) = re_ratio(psi, &delta, support) {
            out.re_upper = Some(out.re_upper.map_or(r, |v: f64| v.min(r)));
        }
        let Some(cand) = Candidate::new(psi, delta, support, q) else {
            break;
        };
        let improved = cand.value < value - 1e-12 * (1.0 + value);
        cur = cand.delta.clone();
        value = value.min(cand.value);
        keep_better(&mut out.best, Some(cand));
        if !improved {
            break;
        }
    }
    Ok(out)
}

fn random_start(rng: &mut ChaCha8Rng, p: usize, s: usize, u: f64) -> (Vec<usize>, DVector<f64>) {
    let mut support = sample(rng, p, s.min(p)).into_vec();
    support.sort_unstable();
    let mask = support_mask(p, &support);
    let mut delta = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let inside: f64 = support.iter().map(|&j| delta[j].abs()).sum();
    let outside: f64 = (0..p).filter(|&i| !mask[i]).map(|i| delta[i].abs()).sum();
    if outside > 0.0 {
        let scale = rng.random::<f64>() * u * inside / outside;
        for i in (0..p).filter(|&i| !mask[i]) {
            delta[i] *= scale;
        }
    }
    (support, delta)
}

/// Certified bracket for `kappa_q(s, u)` with `q` in `{2, pr}`.
///
/// Lower ends: `|Delta|_2^2 <= |Delta|_inf |Delta|_1 <= (1+u) s |Delta|_inf^2`
/// on the cone gives `kappa_2 >= ((1+u) s)^{-1/2} kappa_inf`, and
/// `Delta' Psi Delta <= |Psi Delta|_inf |Delta|_1` gives `kappa_pr >= sqrt(kappa_1)`.
pub fn kappa_local(
    psi: &DMatrix<f64>,
    s: usize,
    u: f64,
    q: SensitivityNorm,
    opts: &LocalOptions,
    budget: &ExactBudget,
) -> Result<SensitivityReport> {
    check_inputs(psi, s, u)?;
    if !matches!(q, SensitivityNorm::Two | SensitivityNorm::Pr) {
        return Err(Error::InvalidParameter(format!("local search supports q in {{2, pr}}, got {q}")));
    }
    check_psd(psi)?;
    let p = psi.nrows();
    let k = s.min(p);
    let exact_q = if q == SensitivityNorm::Two { SensitivityNorm::Inf } else { SensitivityNorm::One };
    let exact = match exact_candidate(psi, s, u, exact_q, budget) {
        Ok(e) => Some(e),
        Err(Error::BudgetExceeded(_)) => None,
        Err(e) => return Err(e),
    };
    let mut starts = Vec::new();
    if let Some((c, _)) = &exact {
        starts.push((c.support.clone(), c.delta.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        starts.push(random_start(&mut rng, p, k, u));
    }
    let run = |(support, delta): &(Vec<usize>, DVector<f64>)| local_descent(psi, u, support, delta.clone(), q, opts.max_iter);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<LocalOutcome>> = {
        use rayon::prelude::*;
        starts.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<LocalOutcome>> = starts.iter().map(run).collect();
    let mut best = None;
    let mut re_upper: Option<f64> = None;
    for o in outcomes {
        let o = o?;
        keep_better(&mut best, o.best);
        if let Some(r) = o.re_upper {
            re_upper = Some(re_upper.map_or(r, |v| v.min(r)));
        }
    }
    let best = best.ok_or_else(|| Error::SolverFailure("local search found no admissible point".into()))?;
    let (lower, method, subproblems) = match &exact {
        Some((c, used)) => {
            let lower = match q {
                SensitivityNorm::Two => c.value / ((1.0 + u) * k as f64).sqrt(),
                _ => c.value.sqrt(),
            };
            (lower, Method::LocalSearch, *used)
        }
        None => (0.0, Method::Bound, 0),
    };
    if lower > best.value + 1e-9 {
        return Err(Error::SolverFailure(format!("bracket inverted: lower {lower} above upper {}", best.value)));
    }
    Ok(SensitivityReport {
        psi: rows_of(psi),
        s,
        u,
        q,
        value: SensitivityValue::Bracket { lower, upper: best.value },
        witness: Witness { delta: best.delta.iter().copied().collect(), support: best.support },
        method,
        subproblems,
        re_upper,
    })
}

/// Dispatches on `q`: exact for `{1, inf}`, bracketed for `{2, pr}`.
pub fn sensitivity(
    psi: &DMatrix<f64>,
    s: usize,
    u: f64,
    q: SensitivityNorm,
    opts: &LocalOptions,
    budget: &ExactBudget,
) -> Result<SensitivityReport> {
    match q {
        SensitivityNorm::One | SensitivityNorm::Inf => kappa_exact(psi, s, u, q, budget),
        SensitivityNorm::Two | SensitivityNorm::Pr => kappa_local(psi, s, u, q, opts, budget),
    }
}
