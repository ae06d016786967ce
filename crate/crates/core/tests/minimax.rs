use eivreg::minimax::{
    gamma_select, hypothesis_family, kl_bound_ratio, kl_exact, separations, vg_packing, KlModel, PackingOptions,
};
use eivreg::model::ar1_covariance;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn opts() -> PackingOptions {
    PackingOptions::default()
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[test]
fn seventeen_choose_weight_one() {
    let pk = vg_packing(17, 2, 0, &opts()).unwrap();
    // Exhaustive: the 16 unit vectors of length 16, all pairwise distance 2.
    assert_eq!(pk.codewords.len(), 16);
    let mut units: Vec<Vec<u8>> = (0..16).map(|i| (0..16).map(|k| u8::from(k == i)).collect()).collect();
    let mut got = pk.codewords.clone();
    units.sort();
    got.sort();
    assert_eq!(got, units);
    for i in 0..16 {
        for j in i + 1..16 {
            assert_eq!(hamming(&pk.codewords[i], &pk.codewords[j]), 2);
        }
    }
}

#[test]
fn small_gamma_collapses_to_first_hypothesis() {
    let pk = vg_packing(12, 4, 0, &opts()).unwrap();
    let fam = hypothesis_family(&pk, 2.0, 1e-9).unwrap();
    for w in &fam.omega_bars {
        assert!((w[0] - 2.0).abs() < 1e-12);
        assert!(w[1..].iter().all(|x| x.abs() < 1e-8));
    }
}

#[test]
fn separation_constants_match_pair_scan() {
    for (p, s, gamma) in [(10, 2, 0.3), (12, 4, 0.1), (9, 3, 2.0)] {
        let pk = vg_packing(p, s, 1, &opts()).unwrap();
        let fam = hypothesis_family(&pk, 1.5, gamma).unwrap();
        let unit = 1.5 * gamma / (1.0 + gamma * gamma * (s - 1) as f64).sqrt();
        let seps = separations(&fam);
        for sep in &seps {
            let mut min = f64::INFINITY;
            for a in &fam.omega_bars {
                for b in &fam.omega_bars {
                    if a == b {
                        continue;
                    }
                    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
                    let v = match sep.q.as_str() {
                        "1" => d.iter().sum(),
                        "2" => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
                        _ => d.iter().copied().fold(0.0, f64::max),
                    };
                    min = min.min(v);
                }
            }
            let rate = match sep.q.as_str() {
                "1" => s as f64,
                "2" => (s as f64).sqrt(),
                _ => 1.0,
            };
            assert!((sep.min_distance - min).abs() <= 1e-14, "{sep:?} vs {min}");
            assert!((sep.constant - min / (rate * unit)).abs() <= 1e-12);
            assert!(sep.min_distance >= sep.constant * rate * unit - 1e-14);
            assert!(sep.constant > 0.0);
        }
    }
}

#[test]
fn gamma_limits() {
    let big = gamma_select(300, 50, 5, 1e8, 0.1, 1.0).unwrap();
    let limit = (0.1 * 10f64.ln() / (16.0 * 300.0)).sqrt();
    assert!((big - limit).abs() <= 1e-12 * limit);
    let a = gamma_select(300, 50, 5, 1.0, 0.1, 1.0).unwrap();
    let b = gamma_select(1200, 50, 5, 1.0, 0.1, 1.0).unwrap();
    assert!((b - a / 2.0).abs() <= 1e-15);
    assert!(gamma_select(16, 0, 1, 0.7, 1.0, 1.0).is_err());
    assert!(gamma_select(16, 10, 2, 0.7, 0.0, 1.0).is_err());
}

fn random_model(rng: &mut ChaCha8Rng, p: usize) -> KlModel {
    let rho = rng.random_range(-0.6..0.6);
    KlModel::new(ar1_covariance(p, rho), rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)).unwrap()
}

fn random_theta(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Covariance of `(U, V)` with `U = theta' A + eta`, `V = A + B`.
fn joint_covariance(m: &KlModel, theta: &DVector<f64>) -> DMatrix<f64> {
    let p = m.p();
    let s = &m.sigma_mat;
    let st = s * theta;
    let mut c = DMatrix::zeros(p + 1, p + 1);
    c[(0, 0)] = theta.dot(&st) + m.sigma * m.sigma;
    for i in 0..p {
        c[(0, i + 1)] = st[i];
        c[(i + 1, 0)] = st[i];
    }
    let v = s + DMatrix::identity(p, p) * (m.sigma_star * m.sigma_star);
    c.view_mut((1, 1), (p, p)).copy_from(&v);
    c
}

/// KL between centred Gaussians from their covariances.
fn gaussian_kl(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> f64 {
    let d = c1.nrows() as f64;
    let l1 = c1.clone().cholesky().unwrap();
    let l2 = c2.clone().cholesky().unwrap();
    let logdet = |l: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * l.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    0.5 * ((l2.inverse() * c1).trace() - d + logdet(&l2) - logdet(&l1))
}

#[test]
fn closed_form_matches_joint_gaussian_divergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let p = rng.random_range(1..7);
        let m = random_model(&mut rng, p);
        let (a, b) = (random_theta(&mut rng, p), random_theta(&mut rng, p));
        let want = gaussian_kl(&joint_covariance(&m, &a), &joint_covariance(&m, &b));
        let got = kl_exact(&m, &a, &b).unwrap();
        assert!((got - want).abs() <= 1e-10 * (1.0 + want), "{got} vs {want}");
    }
}

#[test]
fn divergence_is_nonnegative_and_zero_on_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let p = rng.random_range(1..8);
        let m = random_model(&mut rng, p);
        let (a, b) = (random_theta(&mut rng, p), random_theta(&mut rng, p));
        assert!(kl_exact(&m, &a, &b).unwrap() >= 0.0);
        assert_eq!(kl_exact(&m, &a, &a).unwrap(), 0.0);
    }
}

#[test]
fn equal_variances_make_divergence_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let m = random_model(&mut rng, 5);
        let a = random_theta(&mut rng, 5);
        let b = -&a;
        let (ab, ba) = (kl_exact(&m, &a, &b).unwrap(), kl_exact(&m, &b, &a).unwrap());
        assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
    }
}

/// Mean log-likelihood ratio of joint draws from the generative model.
fn monte_carlo_kl(m: &KlModel, a: &DVector<f64>, b: &DVector<f64>, draws: usize, seed: u64) -> (f64, f64) {
    let p = m.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = m.sigma_mat.clone().cholesky().unwrap().l();
    let (c1, c2) = (joint_covariance(m, a), joint_covariance(m, b));
    let (l1, l2) = (c1.cholesky().unwrap(), c2.cholesky().unwrap());
    let half_logdet = |l: &nalgebra::Cholesky<f64, nalgebra::Dyn>| l.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let (h1, h2) = (half_logdet(&l1), half_logdet(&l2));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut w = DVector::zeros(p + 1);
    for _ in 0..draws {
        let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &design * g;
        let eta: f64 = rng.sample::<f64, _>(StandardNormal) * m.sigma;
        w[0] = a.dot(&x) + eta;
        for i in 0..p {
            w[i + 1] = x[i] + m.sigma_star * rng.sample::<f64, _>(StandardNormal);
        }
        let q1 = l1.l().solve_lower_triangular(&w).unwrap().norm_squared();
        let q2 = l2.l().solve_lower_triangular(&w).unwrap().norm_squared();
        let llr = h2 - h1 + 0.5 * (q2 - q1);
        sum += llr;
        sum_sq += llr * llr;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn monte_carlo_log_likelihood_ratio_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..10 {
        let p = rng.random_range(2..6);
        let m = random_model(&mut rng, p);
        let (a, b) = (random_theta(&mut rng, p) * 0.5, random_theta(&mut rng, p) * 0.5);
        let exact = kl_exact(&m, &a, &b).unwrap();
        let (mc, se) = monte_carlo_kl(&m, &a, &b, 1_000_000, 100 + k);
        assert!((mc - exact).abs() <= 3.0 * se, "config {k}: mc {mc} (se {se}) vs {exact}");
    }
}

#[test]
fn lemma_constant_is_finite_on_families() {
    let m = KlModel::ar1(20, 0.25, 0.5, 0.45).unwrap();
    for s in [2, 4, 6] {
        let pk = vg_packing(20, s, 0, &opts()).unwrap();
        let g = gamma_select(300, 20, s, 1.0, 0.1, 1.0).unwrap();
        let fam = hypothesis_family(&pk, 1.0, g).unwrap();
        let first = DVector::from_vec(fam.omega_bars[0].clone());
        for w in &fam.omega_bars[1..] {
            let c = kl_bound_ratio(&m, &DVector::from_vec(w.clone()), &first).unwrap();
            assert!(c.is_finite() && c > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn packing_respects_weight_and_distance(p in 2usize..30, s_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let s = 2 + ((p - 1) as f64 * s_frac) as usize;
        let s = s.min(p);
        let small = PackingOptions { max_candidates: 5_000, max_codewords: 300, ..opts() };
        let pk = vg_packing(p, s, seed, &small).unwrap();
        prop_assert!(!pk.codewords.is_empty());
        for w in &pk.codewords {
            prop_assert_eq!(w.len(), p - 1);
            prop_assert_eq!(w.iter().map(|&b| b as usize).sum::<usize>(), s - 1);
        }
        for i in 0..pk.codewords.len() {
            for j in i + 1..pk.codewords.len() {
                prop_assert!(16 * hamming(&pk.codewords[i], &pk.codewords[j]) > s);
            }
        }
    }

    #[test]
    fn hypotheses_lie_on_sparse_sphere(p in 2usize..25, s_frac in 0.0f64..1.0, r in 0.01f64..100.0, gamma in 0.001f64..10.0) {
        let s = (2 + ((p - 1) as f64 * s_frac) as usize).min(p);
        let small = PackingOptions { max_candidates: 2_000, max_codewords: 100, ..opts() };
        let fam = hypothesis_family(&vg_packing(p, s, 0, &small).unwrap(), r, gamma).unwrap();
        for (j, w) in fam.omega_bars.iter().enumerate() {
            let nnz = w.iter().filter(|x| **x != 0.0).count();
            prop_assert_eq!(nnz, if j == 0 { 1 } else { s });
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - r).abs() <= 1e-12, "{}", norm - r);
        }
    }
}
