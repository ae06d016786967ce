//! Independent optimality certificate for [`SolverResult`]s.
//!
//! Works from the user-facing problem and the returned primal/dual vectors
//! only; it never touches the lowered standard form used by the engines.

use nalgebra::DVector;

use super::{KktRecord, SecondOrderConeProgram, SolverResult};

fn cone_gap(t: f64, x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>().sqrt() - t).max(0.0)
}

/// Recomputes the [`KktRecord`] of `result` against `socp`.
pub fn evaluate(socp: &SecondOrderConeProgram, result: &SolverResult) -> KktRecord {
    let lp = &socp.lp;
    let x = DVector::from_column_slice(&result.x);
    let d = &result.duals;
    let ineq = DVector::from_column_slice(&d.ineq);
    let eq = DVector::from_column_slice(&d.eq);

    // Primal feasibility.
    let mut primal: f64 = 0.0;
    let ax = &lp.a_ineq * &x;
    for i in 0..ax.len() {
        primal = primal.max(ax[i] - lp.b_ineq[i]);
    }
    let aex = &lp.a_eq * &x;
    for i in 0..aex.len() {
        primal = primal.max((aex[i] - lp.b_eq[i]).abs());
    }
    for (i, &nn) in lp.nonneg.iter().enumerate() {
        if nn {
            primal = primal.max(-x[i]);
        }
    }
    for block in &socp.cones {
        let xs: Vec<f64> = block.x.iter().map(|&i| x[i]).collect();
        primal = primal.max(cone_gap(x[block.t], &xs));
    }

    // Stationarity and dual cone membership.
    let mut grad = &lp.c + lp.a_ineq.tr_mul(&ineq) + lp.a_eq.tr_mul(&eq);
    let mut dual: f64 = 0.0;
    for v in &d.ineq {
        dual = dual.max(-v);
    }
    for (i, &nn) in lp.nonneg.iter().enumerate() {
        if nn {
            grad[i] -= d.bound[i];
            dual = dual.max(-d.bound[i]);
        }
    }
    for (block, zc) in socp.cones.iter().zip(&d.cone) {
        grad[block.t] -= zc[0];
        for (k, &i) in block.x.iter().enumerate() {
            grad[i] -= zc[k + 1];
        }
        dual = dual.max(cone_gap(zc[0], &zc[1..]));
    }
    dual = dual.max(grad.amax());

    // Complementarity of slacks against multipliers.
    let mut comp = 0.0;
    for i in 0..ax.len() {
        comp += (lp.b_ineq[i] - ax[i]) * d.ineq[i];
    }
    for (i, &nn) in lp.nonneg.iter().enumerate() {
        if nn {
            comp += x[i] * d.bound[i];
        }
    }
    for (block, zc) in socp.cones.iter().zip(&d.cone) {
        comp += x[block.t] * zc[0];
        for (k, &i) in block.x.iter().enumerate() {
            comp += x[i] * zc[k + 1];
        }
    }

    let pobj = lp.c.dot(&x);
    let dobj = -lp.b_ineq.dot(&ineq) - lp.b_eq.dot(&eq);
    KktRecord {
        primal_residual: primal,
        dual_residual: dual,
        complementarity: comp,
        duality_gap: (pobj - dobj).abs(),
    }
}
