use eivreg::estimators::{
    fit_compensated_mu, fit_conic, fit_dantzig, fit_mu_selector, fixed_point_oracle, FitResult, Score,
};
use eivreg::model::{
    compute_m_k, generate_dgp, practical_tuning, theoretical_tuning, Compensation, CompensationMode, Dataset,
    EstimatorConfig, TrueModel, TuningConstants,
};
use eivreg::solver::SolverSettings;
use eivreg::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn settings() -> SolverSettings {
    SolverSettings::default()
}

/// For comparisons of two independent solves at the 1e-8 level.
fn tight() -> SolverSettings {
    SolverSettings::with_tol(1e-10)
}

fn instance(seed: u64, n: usize, p: usize, sigma_star: f64) -> (Dataset, Compensation, EstimatorConfig) {
    let mut theta = DVector::zeros(p);
    theta[0] = 1.0;
    theta[1] = -0.7;
    theta[p - 1] = 0.4;
    let m = TrueModel::ar1(theta, 0.128, sigma_star, 0.25, seed);
    let d = generate_dgp(&m, n, p).unwrap();
    let comp = Compensation::known_isotropic(p, sigma_star);
    let (mu, tau) = practical_tuning(0.05, n, p, 0.128).unwrap();
    (d, comp, EstimatorConfig::new(1.0, mu, tau))
}

#[test]
fn noiseless_recovery_matches_support_least_squares() {
    let mut theta = DVector::zeros(5);
    theta[0] = 1.0;
    let m = TrueModel::ar1(theta.clone(), 0.0, 0.0, 0.25, 21);
    let d = generate_dgp(&m, 50, 5).unwrap();
    let comp = Compensation::zero(5);
    let cfg = EstimatorConfig::new(1.0, 1e-6, 1e-6);
    let fit = fit_conic(&d, &comp, &cfg, &settings()).unwrap();
    // Least squares on the true support recovers theta exactly without noise.
    let col = d.z.column(0);
    let ls = col.dot(&d.y) / col.norm_squared();
    let mut oracle = DVector::zeros(5);
    oracle[0] = ls;
    assert!((fit.theta() - &oracle).norm() <= 1e-4);
    assert!((fit.theta() - theta).norm() <= 1e-4);
}

#[test]
fn small_dimension_conic_fits_coincide_across_lambda() {
    let (d, comp, cfg) = instance(1, 300, 10, 0.45);
    let fits: Vec<FitResult> = [0.5, 0.75, 1.0]
        .iter()
        .map(|&l| fit_conic(&d, &comp, &EstimatorConfig { lambda: l, ..cfg.clone() }, &settings()).unwrap())
        .collect();
    for f in &fits[1..] {
        assert!((f.theta() - fits[0].theta()).amax() <= 1e-6);
    }
}

#[test]
fn single_lp_matches_bisection_fixed_point() {
    let mut checked = 0;
    for seed in 0..50 {
        let (d, comp, cfg) = instance(500 + seed, 30, 8, 0.45);
        let lp = fit_compensated_mu(&d, &comp, &cfg, &tight());
        let fp = fixed_point_oracle(&d, &comp, &cfg, 1e-9, &tight());
        match (lp, fp) {
            (Ok(lp), Ok(fp)) => {
                assert!((lp.objective - fp.r_bar).abs() <= 1e-6, "seed {seed}: {} vs {}", lp.objective, fp.r_bar);
                assert!((lp.t_hat - fp.r_bar).abs() <= 10.0 * 1e-9, "seed {seed}: {} vs {}", lp.t_hat, fp.r_bar);
                assert!((lp.theta() - fp.fit.theta()).amax() <= 1e-5, "seed {seed}: {}", lp.theta() - fp.fit.theta());
                checked += 1;
            }
            (Err(Error::NoFixedPoint { .. }), Err(Error::NoFixedPoint { .. })) => {}
            (a, b) => panic!("seed {seed}: paths disagree: {:?} / {:?}", a.map(|f| f.objective), b.map(|f| f.r_bar)),
        }
    }
    assert!(checked >= 45, "only {checked} instances had a fixed point");
}

#[test]
fn fixed_point_trace_is_monotone() {
    for seed in 0..10 {
        let (d, comp, cfg) = instance(900 + seed, 30, 8, 0.45);
        let fp = fixed_point_oracle(&d, &comp, &cfg, 1e-9, &settings()).unwrap();
        let mut trace = fp.trace.clone();
        trace.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in trace.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-7, "seed {seed}: {:?}", w);
        }
        assert!((fp.fit.objective - fp.r_bar).abs() <= 1e-9 + 1e-12);
    }
}

#[test]
fn mu_selector_without_mu_is_dantzig_on_z() {
    for seed in 0..20 {
        let (d, _, cfg) = instance(1200 + seed, 40, 6, 0.3);
        let cfg = EstimatorConfig { mu: 0.0, ..cfg };
        let mu = fit_mu_selector(&d, &cfg, &tight()).unwrap();
        let dz = fit_dantzig(&d.y, &d.z, cfg.tau, None, &tight()).unwrap();
        assert!((mu.objective - dz.objective).abs() <= 1e-8 * (1.0 + dz.objective), "seed {seed}: {} vs {}", mu.objective, dz.objective);
    }
}

#[test]
fn mu_and_compensated_coincide_without_compensation() {
    let (d, _, cfg) = instance(77, 60, 6, 0.0);
    let a = fit_mu_selector(&d, &cfg, &settings()).unwrap();
    let b = fit_compensated_mu(&d, &Compensation::zero(6), &cfg, &settings()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn orthonormal_dantzig_is_soft_thresholding() {
    // Columns of M are sqrt(n) times orthonormal vectors, so M'M/n = I.
    let n = 8;
    let p = 4;
    let mut m = DMatrix::zeros(n, p);
    for j in 0..p {
        m[(2 * j, j)] = 2.0;
        m[(2 * j + 1, j)] = if j % 2 == 0 { 2.0 } else { -2.0 };
    }
    let y = DVector::from_vec(vec![0.5, 2.0, -1.0, 0.3, 0.1, 0.05, 3.0, -2.5]);
    let tau = 0.4;
    let yp = m.tr_mul(&y) / n as f64;
    let fit = fit_dantzig(&y, &m, tau, None, &settings()).unwrap();
    let soft: f64 = yp.iter().map(|v| (v.abs() - tau).max(0.0)).sum();
    for j in 0..p {
        assert!((fit.theta_hat[j] - yp[j]).abs() <= tau + 1e-8);
    }
    assert!((fit.objective - soft).abs() <= 1e-7, "{} vs {soft}", fit.objective);
}

#[test]
fn truth_satisfies_l1_shrinkage_when_feasible() {
    let mut tried = 0;
    for seed in 0..20 {
        let (d, comp, _) = instance(3000 + seed, 300, 10, 0.45);
        let m2 = compute_m_k(d.x.as_ref().unwrap(), 2.0);
        let tc = TuningConstants::defaults(0.128, 0.45, 0.05, m2);
        let t = theoretical_tuning(&tc, 300, 10, 0.128, 0.45, CompensationMode::Known).unwrap();
        let cfg = EstimatorConfig::new(1.0, t.mu, t.tau);
        let mut theta = DVector::zeros(10);
        theta[0] = 1.0;
        theta[1] = -0.7;
        theta[9] = 0.4;
        let score = Score::new(&d.y, &d.z, &comp.d_hat).unwrap();
        let feasible = score.eval(&theta).amax() <= cfg.mu * theta.norm() + cfg.tau;
        if !feasible {
            continue;
        }
        tried += 1;
        for lambda in [0.5, 1.0, 2.0] {
            let cfg = EstimatorConfig { lambda, ..cfg.clone() };
            let f = fit_conic(&d, &comp, &cfg, &settings()).unwrap();
            let lhs = f.theta().lp_norm(1) + lambda * f.t_hat;
            assert!(lhs <= theta.lp_norm(1) + lambda * theta.norm() + 1e-6);
        }
    }
    assert!(tried >= 15, "truth feasible in only {tried} of 20");
}

fn permute(d: &Dataset, comp: &Compensation, perm: &[usize]) -> (Dataset, Compensation) {
    let z = DMatrix::from_fn(d.n(), d.p(), |i, j| d.z[(i, perm[j])]);
    let d_hat = perm.iter().map(|&j| comp.d_hat[j]).collect();
    (Dataset::new(d.y.clone(), z, None).unwrap(), Compensation::new(d_hat, CompensationMode::Known).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn larger_tau_never_raises_objective(seed in 0u64..10_000, bump in 0.001f64..0.2) {
        let (d, comp, cfg) = instance(seed, 40, 6, 0.3);
        let wide = EstimatorConfig { tau: cfg.tau + bump, ..cfg.clone() };
        let s = settings();
        let slack = |a: &FitResult| 1e-7 * (1.0 + a.objective.abs());
        let (a, b) = (fit_conic(&d, &comp, &cfg, &s).unwrap(), fit_conic(&d, &comp, &wide, &s).unwrap());
        prop_assert!(b.objective <= a.objective + slack(&a));
        let (a, b) = (fit_compensated_mu(&d, &comp, &cfg, &s).unwrap(), fit_compensated_mu(&d, &comp, &wide, &s).unwrap());
        prop_assert!(b.objective <= a.objective + slack(&a));
        let (a, b) = (fit_dantzig(&d.y, &d.z, cfg.tau, None, &s).unwrap(), fit_dantzig(&d.y, &d.z, wide.tau, None, &s).unwrap());
        prop_assert!(b.objective <= a.objective + slack(&a));
    }

    #[test]
    fn column_permutation_permutes_estimate(seed in 0u64..10_000, rot in 1usize..6) {
        let (d, comp, cfg) = instance(seed, 40, 6, 0.3);
        let perm: Vec<usize> = (0..6).map(|j| (j + rot) % 6).collect();
        let (pd, pc) = permute(&d, &comp, &perm);
        let s = settings();
        let a = fit_conic(&d, &comp, &cfg, &s).unwrap();
        let b = fit_conic(&pd, &pc, &cfg, &s).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-7 * (1.0 + a.objective));
        for (k, &j) in perm.iter().enumerate() {
            prop_assert!((b.theta_hat[k] - a.theta_hat[j]).abs() <= 1e-5);
        }
    }
}
