use eivreg::solver::{
    certify, solve_lp, solve_socp, Algorithm, ConeBlock, LinearProgram, SecondOrderConeProgram, SolveStatus,
    SolverSettings,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bounded, feasible LP: `A x <= b` with a strictly feasible point
/// plus the box `|x_i| <= 5`.
fn random_lp(seed: u64, n: usize, m: usize) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows = m + 2 * n;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for i in 0..m {
        for j in 0..n {
            a[(i, j)] = rng.random_range(-1.0..1.0);
        }
        let ax: f64 = (0..n).map(|j| a[(i, j)] * x0[j]).sum();
        b[i] = ax + rng.random_range(0.1..1.0);
    }
    for j in 0..n {
        a[(m + 2 * j, j)] = 1.0;
        b[m + 2 * j] = 5.0;
        a[(m + 2 * j + 1, j)] = -1.0;
        b[m + 2 * j + 1] = 5.0;
    }
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    LinearProgram::new(c).with_inequalities(a, b)
}

/// Minimum over all vertices: every `n`-subset of constraints made active.
fn vertex_oracle(lp: &LinearProgram) -> f64 {
    let n = lp.c.len();
    let m = lp.a_ineq.nrows();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| lp.a_ineq[(idx[i], j)]);
        let b = DVector::from_fn(n, |i, _| lp.b_ineq[idx[i]]);
        if let Some(x) = a.lu().solve(&b) {
            let feasible = (&lp.a_ineq * &x - &lp.b_ineq).iter().all(|&v| v <= 1e-9);
            if feasible && x.iter().all(|v| v.is_finite()) {
                best = best.min(lp.c.dot(&x));
            }
        }
        // Next combination in lexicographic order.
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - n + k {
                break;
            }
        }
        idx[k] += 1;
        for l in k + 1..n {
            idx[l] = idx[l - 1] + 1;
        }
        if idx[n - 1] >= m {
            return best;
        }
    }
}

/// Same LP with slacks `s = b - A x` held in one-dimensional cones.
fn as_slack_socp(lp: &LinearProgram) -> SecondOrderConeProgram {
    let n = lp.c.len();
    let m = lp.a_ineq.nrows();
    let mut c = DVector::zeros(n + m);
    c.rows_mut(0, n).copy_from(&lp.c);
    let mut a = DMatrix::zeros(m, n + m);
    a.view_mut((0, 0), (m, n)).copy_from(&lp.a_ineq);
    for i in 0..m {
        a[(i, n + i)] = 1.0;
    }
    let cones = (0..m).map(|i| ConeBlock { t: n + i, x: Vec::new() }).collect();
    SecondOrderConeProgram::new(LinearProgram::new(c).with_equalities(a, lp.b_ineq.clone()), cones)
}

#[test]
fn random_lps_match_vertex_enumeration() {
    for seed in 0..20 {
        let lp = random_lp(seed, 3, 5);
        let r = solve_lp(&lp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "seed {seed}");
        let oracle = vertex_oracle(&lp);
        assert!((r.objective - oracle).abs() <= 1e-6, "seed {seed}: {} vs {oracle}", r.objective);
    }
}

#[test]
fn cone_reformulation_matches_lp_on_fifty_instances() {
    for seed in 0..50 {
        let lp = random_lp(1000 + seed, 6, 10);
        let direct = solve_lp(&lp, &SolverSettings::default()).unwrap();
        let conic = solve_socp(&as_slack_socp(&lp), &SolverSettings::default()).unwrap();
        assert!(direct.is_optimal() && conic.is_optimal(), "seed {seed}");
        assert!(
            (direct.objective - conic.objective).abs() <= 1e-6,
            "seed {seed}: {} vs {}",
            direct.objective,
            conic.objective
        );
    }
}

#[test]
fn independent_certificate_reproduces_record() {
    for seed in 0..20 {
        let lp = random_lp(2000 + seed, 5, 8);
        let socp = SecondOrderConeProgram::new(lp.clone(), Vec::new());
        let r = solve_lp(&lp, &SolverSettings::default()).unwrap();
        let rec = certify::evaluate(&socp, &r);
        assert!((rec.primal_residual - r.kkt.primal_residual).abs() <= 1e-10);
        assert!((rec.duality_gap - r.kkt.duality_gap).abs() <= 1e-10);
        assert!((rec.complementarity - r.kkt.complementarity).abs() <= 1e-10);
        assert!(rec.primal_residual <= 1e-8);
        assert!(rec.duality_gap <= 1e-8 * (1.0 + r.objective.abs()));

        let socp = as_slack_socp(&lp);
        let r = solve_socp(&socp, &SolverSettings::default()).unwrap();
        let rec = certify::evaluate(&socp, &r);
        assert!((rec.primal_residual - r.kkt.primal_residual).abs() <= 1e-10);
        assert!((rec.dual_residual - r.kkt.dual_residual).abs() <= 1e-10);
        assert!((rec.duality_gap - r.kkt.duality_gap).abs() <= 1e-10);
    }
}

#[test]
fn norm_ball_projection() {
    // min c'x s.t. |x|_2 <= 1  ->  -|c|_2
    let c = [0.3, -1.2, 0.5, 2.0];
    let mut obj = vec![0.0];
    obj.extend_from_slice(&c);
    let lp = LinearProgram::new(DVector::from_vec(obj))
        .with_equalities(DMatrix::from_row_slice(1, 5, &[1.0, 0.0, 0.0, 0.0, 0.0]), DVector::from_vec(vec![1.0]));
    let socp = SecondOrderConeProgram::new(lp, vec![ConeBlock { t: 0, x: vec![1, 2, 3, 4] }]);
    let r = solve_socp(&socp, &SolverSettings::default()).unwrap();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(r.is_optimal());
    assert!((r.objective + norm).abs() < 1e-7);
    for k in 0..4 {
        assert!((r.x[k + 1] + c[k] / norm).abs() < 1e-6);
    }
}

#[test]
fn admm_agrees_with_interior_point() {
    let settings = SolverSettings {
        tol: 1e-7,
        algorithm: Algorithm::Admm { rho: 1.0, max_iter: 50_000 },
        ..SolverSettings::default()
    };
    for seed in 0..5 {
        let lp = random_lp(3000 + seed, 4, 6);
        let ipm = solve_lp(&lp, &SolverSettings::default()).unwrap();
        let admm = solve_lp(&lp, &settings).unwrap();
        assert_eq!(admm.status, SolveStatus::Optimal, "seed {seed}");
        assert!((ipm.objective - admm.objective).abs() < 1e-4, "seed {seed}: {} vs {}", ipm.objective, admm.objective);
    }
}

#[test]
fn nonpositive_tolerance_rejected() {
    let lp = random_lp(1, 2, 2);
    assert!(solve_lp(&lp, &SolverSettings::with_tol(0.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weak_duality_on_optimal_returns(seed in 0u64..1_000_000) {
        let lp = random_lp(seed, 5, 7);
        let r = solve_lp(&lp, &SolverSettings::default()).unwrap();
        prop_assert!(r.is_optimal());
        prop_assert!(r.dual_objective <= r.objective + 1e-8);
        prop_assert!(r.kkt.primal_residual <= 1e-8);
    }

    #[test]
    fn argmin_invariant_to_objective_scaling(seed in 0u64..1_000_000, alpha in 0.1f64..10.0) {
        let lp = random_lp(seed, 4, 6);
        let mut scaled = lp.clone();
        scaled.c *= alpha;
        let a = solve_lp(&lp, &SolverSettings::default()).unwrap();
        let b = solve_lp(&scaled, &SolverSettings::default()).unwrap();
        prop_assert!(a.is_optimal() && b.is_optimal());
        // Random continuous costs give a unique vertex almost surely.
        for (u, v) in a.x.iter().zip(&b.x) {
            prop_assert!((u - v).abs() <= 1e-6, "{} vs {}", u, v);
        }
    }
}
