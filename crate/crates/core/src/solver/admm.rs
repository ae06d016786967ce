//! First-order fallback: proximal ADMM on `min c'x  s.t.  [A; G] x + s = [b; h]`,
//! `s in {0} x K`.

use nalgebra::{DMatrix, DVector};

use super::cone::project;
use super::{ConicForm, RawSolution, SolveStatus};

const PROX: f64 = 1e-6;
const CHECK_EVERY: usize = 25;

pub(crate) fn solve(form: &ConicForm, tol: f64, rho: f64, max_iter: usize) -> RawSolution {
    let n = form.c.len();
    let p = form.a.nrows();
    let m = form.g.nrows();
    let mut gbar = DMatrix::zeros(p + m, n);
    gbar.rows_mut(0, p).copy_from(&form.a);
    gbar.rows_mut(p, m).copy_from(&form.g);
    let mut hbar = DVector::zeros(p + m);
    hbar.rows_mut(0, p).copy_from(&form.b);
    hbar.rows_mut(p, m).copy_from(&form.h);

    let mut lhs = gbar.tr_mul(&gbar) * rho;
    for i in 0..n {
        lhs[(i, i)] += PROX;
    }
    let chol = match lhs.cholesky() {
        Some(c) => c,
        None => {
            return RawSolution {
                status: SolveStatus::MaxIter,
                x: DVector::zeros(n),
                y: DVector::zeros(p),
                z: DVector::zeros(m),
                iterations: 0,
            }
        }
    };
    let layout = &form.layout;
    let mut x = DVector::zeros(n);
    let mut s = DVector::zeros(p + m);
    let mut u = DVector::zeros(p + m);

    let split = |u: &DVector<f64>| (u.rows(0, p) * rho, u.rows(p, m) * rho);
    for iter in 1..=max_iter {
        let rhs = &x * PROX - &form.c - gbar.tr_mul(&(&s - &hbar + &u)) * rho;
        x = chol.solve(&rhs);
        let v = &hbar - &gbar * &x - &u;
        s.rows_mut(0, p).fill(0.0);
        s.rows_mut(p, m).copy_from(&project(layout, &v.rows(p, m).into_owned()));
        u += &gbar * &x + &s - &hbar;

        if iter % CHECK_EVERY == 0 || iter == max_iter {
            let (y, z) = split(&u);
            // The orthant and second-order cones are self-dual.
            let z = project(layout, &z);
            let rec = form.kkt(&x, &y, &z);
            let scale = 1.0 + form.c.dot(&x).abs();
            if rec.primal_residual <= tol
                && rec.dual_residual <= tol
                && rec.duality_gap <= tol * scale
                && rec.complementarity.abs() <= tol * scale
            {
                return RawSolution { status: SolveStatus::Optimal, x, y, z, iterations: iter };
            }
        }
    }
    let (y, z) = split(&u);
    let z = project(layout, &z);
    RawSolution { status: SolveStatus::MaxIter, x, y, z, iterations: max_iter }
}
