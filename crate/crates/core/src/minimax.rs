//! Lower-bound hypothesis families over `B_0(s) ∩ S_2(R)` and the exact
//! one-observation Kullback-Leibler divergence of the errors-in-variables
//! model with Gaussian design.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ar1_covariance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingOptions {
    /// Constant in the cardinality target `log|M'| >= c1' s log(p/s)`.
    pub c1_prime: f64,
    /// Above this many weight-`(s-1)` vectors, candidates are sampled.
    pub max_candidates: usize,
    pub max_codewords: usize,
}

impl Default for PackingOptions {
    fn default() -> Self {
        Self { c1_prime: 0.1, max_candidates: 200_000, max_codewords: 2_000 }
    }
}

/// Binary vectors of length `p - 1` and weight `s - 1`, pairwise Hamming
/// distance above `s / 16`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingSet {
    pub p: usize,
    pub s: usize,
    pub codewords: Vec<Vec<u8>>,
    /// `None` with fewer than two codewords.
    pub min_pairwise_dist: Option<usize>,
    pub log_cardinality: f64,
    pub target: f64,
    pub meets_target: bool,
}

type Bits = Vec<u64>;

fn to_bits(ones: &[usize], len: usize) -> Bits {
    let mut b = vec![0u64; len.div_ceil(64).max(1)];
    for &i in ones {
        b[i / 64] |= 1 << (i % 64);
    }
    b
}

fn hamming(a: &Bits, b: &Bits) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

fn n_choose_k(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Weight-`k` subsets of `0..len` in lexicographic order.
fn for_each_subset(len: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > len {
        return;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        if !f(&cur) {
            return;
        }
        let Some(i) = (0..k).rev().find(|&i| cur[i] < len - k + i) else {
            return;
        };
        cur[i] += 1;
        for t in i + 1..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

/// First-fit packing. Candidates are all weight-`(s-1)` vectors in
/// lexicographic order when there are at most `max_candidates` of them,
/// otherwise `max_candidates` seeded random draws.
pub fn vg_packing(p: usize, s: usize, seed: u64, opts: &PackingOptions) -> Result<PackingSet> {
    if s < 2 {
        return Err(Error::InvalidParameter(format!("packing needs s >= 2, got {s}")));
    }
    if s > p {
        return Err(Error::InvalidParameter(format!("packing needs s <= p, got s = {s}, p = {p}")));
    }
    let len = p - 1;
    let k = s - 1;
    let mut accepted: Vec<(Vec<usize>, Bits)> = Vec::new();
    // Accept iff every distance d satisfies d > s/16, i.e. 16 d > s.
    let mut offer = |ones: &[usize]| -> bool {
        let bits = to_bits(ones, len);
        if accepted.iter().all(|(_, b)| 16 * hamming(b, &bits) > s) {
            accepted.push((ones.to_vec(), bits));
        }
        accepted.len() < opts.max_codewords
    };
    if n_choose_k(len, k) <= opts.max_candidates as f64 {
        for_each_subset(len, k, |ones| offer(ones));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..opts.max_candidates {
            let mut ones = sample(&mut rng, len, k).into_vec();
            ones.sort_unstable();
            if !offer(&ones) {
                break;
            }
        }
    }
    let mut min_pairwise_dist = None;
    for (i, (_, a)) in accepted.iter().enumerate() {
        for (_, b) in &accepted[i + 1..] {
            let d = hamming(a, b);
            min_pairwise_dist = Some(min_pairwise_dist.map_or(d, |m: usize| m.min(d)));
        }
    }
    let codewords: Vec<Vec<u8>> = accepted
        .iter()
        .map(|(ones, _)| {
            let mut w = vec![0u8; len];
            for &i in ones {
                w[i] = 1;
            }
            w
        })
        .collect();
    let log_cardinality = (codewords.len() as f64).ln();
    let target = opts.c1_prime * s as f64 * (p as f64 / s as f64).ln();
    Ok(PackingSet { p, s, codewords, min_pairwise_dist, log_cardinality, target, meets_target: log_cardinality >= target })
}

/// `omega_bars[0] = R e_1`; `omega_bars[j] = R (e_1 + gamma w_j) / sqrt(1 + gamma^2 (s-1))`
/// where `w_j` is codeword `j` shifted to coordinates `2..p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFamily {
    pub omega_bars: Vec<Vec<f64>>,
    pub gamma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub s: usize,
}

pub fn hypothesis_family(packing: &PackingSet, r: f64, gamma: f64) -> Result<HypothesisFamily> {
    if !(r > 0.0 && r.is_finite()) || !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("need R > 0 and gamma > 0, got R = {r}, gamma = {gamma}")));
    }
    let p = packing.p;
    let s = packing.s;
    let scale = r / (1.0 + gamma * gamma * (s - 1) as f64).sqrt();
    let mut omega_bars = Vec::with_capacity(packing.codewords.len() + 1);
    let mut first = vec![0.0; p];
    first[0] = r;
    omega_bars.push(first);
    for w in &packing.codewords {
        let mut v = vec![0.0; p];
        v[0] = scale;
        for (k, &bit) in w.iter().enumerate() {
            if bit == 1 {
                v[k + 1] = scale * gamma;
            }
        }
        omega_bars.push(v);
    }
    for (j, v) in omega_bars.iter().enumerate() {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let support = v.iter().filter(|x| **x != 0.0).count();
        let want = if j == 0 { 1 } else { s };
        if (norm - r).abs() > 1e-12 || support != want {
            return Err(Error::SolverFailure(format!("hypothesis {j} has norm {norm} and support {support}")));
        }
    }
    Ok(HypothesisFamily { omega_bars, gamma, r, s })
}

/// Smallest pairwise `|w_j - w_k|_q` and its ratio to `s^{1/q} R gamma / sqrt(1 + gamma^2 (s-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// `"1"`, `"2"` or `"inf"`.
    pub q: String,
    pub min_distance: f64,
    pub constant: f64,
}

pub fn separations(family: &HypothesisFamily) -> Vec<Separation> {
    let s = family.s as f64;
    let unit = family.r * family.gamma / (1.0 + family.gamma.powi(2) * (s - 1.0)).sqrt();
    [1.0, 2.0, f64::INFINITY]
        .into_iter()
        .map(|q| {
            let mut min = f64::INFINITY;
            for (i, a) in family.omega_bars.iter().enumerate() {
                for b in &family.omega_bars[i + 1..] {
                    let diff = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
                    let d = if q.is_infinite() { diff.amax() } else { diff.lp_norm(q as i32) };
                    min = min.min(d);
                }
            }
            let rate = if q.is_infinite() { 1.0 } else { s.powf(1.0 / q) };
            let q = if q.is_infinite() { "inf".to_string() } else { format!("{q}") };
            Separation { q, min_distance: min, constant: min / (rate * unit) }
        })
        .collect()
}

/// `gamma = sqrt(c1' / (16 c2' n) * (1 + R^2) / R^2 * log(p / s))`.
pub fn gamma_select(n: usize, p: usize, s: usize, r: f64, c1_prime: f64, c2_prime: f64) -> Result<f64> {
    if n == 0 || p == 0 || s == 0 || !(r > 0.0) || !(c1_prime > 0.0) || !(c2_prime > 0.0) {
        return Err(Error::InvalidParameter("gamma selection needs positive arguments".into()));
    }
    let ratio = (1.0 + r * r) / (r * r);
    Ok((c1_prime / (16.0 * c2_prime * n as f64) * ratio * (p as f64 / s as f64).ln()).sqrt())
}

/// Design covariance and noise levels of the model `(U, V)` with
/// `V = A + B`, `U = theta' A + eta`, `A ~ N(0, Sigma)`, `B ~ N(0, sigma*^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlModel {
    pub sigma_mat: DMatrix<f64>,
    pub sigma: f64,
    pub sigma_star: f64,
    /// `sigma*^2 (Sigma + sigma*^2 I)^{-1}`.
    pub sigma_tilde: DMatrix<f64>,
    /// `I - sigma_tilde`.
    pub gamma: DMatrix<f64>,
    /// `Gamma (Sigma + sigma*^2 I) Gamma`.
    quad: DMatrix<f64>,
}

impl KlModel {
    pub fn new(sigma_mat: DMatrix<f64>, sigma: f64, sigma_star: f64) -> Result<Self> {
        let p = sigma_mat.nrows();
        if sigma_mat.ncols() != p || p == 0 {
            return Err(Error::DimensionMismatch("Sigma must be square and nonempty".into()));
        }
        if (&sigma_mat - sigma_mat.transpose()).amax() > 1e-12 * sigma_mat.amax().max(1.0) {
            return Err(Error::InvalidParameter("Sigma must be symmetric".into()));
        }
        if !(sigma >= 0.0) || !(sigma_star >= 0.0) {
            return Err(Error::InvalidParameter("noise levels must be nonnegative".into()));
        }
        if sigma_mat.clone().cholesky().is_none() {
            return Err(Error::NotPd);
        }
        let s2 = sigma_star * sigma_star;
        let shifted = &sigma_mat + DMatrix::identity(p, p) * s2;
        let inv = shifted.clone().cholesky().ok_or(Error::NotPd)?.inverse();
        let sigma_tilde = inv * s2;
        let gamma = DMatrix::identity(p, p) - &sigma_tilde;
        let quad = &gamma * shifted * &gamma;
        Ok(Self { sigma_mat, sigma, sigma_star, sigma_tilde, gamma, quad })
    }

    pub fn ar1(p: usize, rho: f64, sigma: f64, sigma_star: f64) -> Result<Self> {
        Self::new(ar1_covariance(p, rho), sigma, sigma_star)
    }

    pub fn p(&self) -> usize {
        self.sigma_mat.nrows()
    }

    /// `c_theta = theta' Gamma theta`.
    pub fn c_theta(&self, theta: &DVector<f64>) -> f64 {
        theta.dot(&(&self.gamma * theta))
    }

    /// Conditional variance of `U` given `V`.
    pub fn conditional_variance(&self, theta: &DVector<f64>) -> f64 {
        self.sigma * self.sigma + self.c_theta(theta) * self.sigma_star * self.sigma_star
    }
}

/// One-observation `KL(P_theta1, P_theta2)`; multiply by `n` for `n` draws.
pub fn kl_exact(model: &KlModel, theta1: &DVector<f64>, theta2: &DVector<f64>) -> Result<f64> {
    let p = model.p();
    if theta1.len() != p || theta2.len() != p {
        return Err(Error::DimensionMismatch(format!("theta length must be {p}")));
    }
    let v1 = model.conditional_variance(theta1);
    let v2 = model.conditional_variance(theta2);
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::InvalidParameter("degenerate conditional variance (sigma = 0 and c_theta = 0)".into()));
    }
    let d = theta1 - theta2;
    let quad = d.dot(&(&model.quad * &d));
    Ok(0.5 * ((v2 / v1).ln() + v1 / v2 - 1.0) + quad / (2.0 * v2))
}

/// `KL_n / (n (|d|^2 + |c1 - c2|) / (1 + |theta1|^2))`, the constant implied
/// by the lemma-form bound on this pair.
pub fn kl_bound_ratio(model: &KlModel, theta1: &DVector<f64>, theta2: &DVector<f64>) -> Result<f64> {
    let kl = kl_exact(model, theta1, theta2)?;
    let scale = ((theta1 - theta2).norm_squared() + (model.c_theta(theta1) - model.c_theta(theta2)).abs())
        / (1.0 + theta1.norm_squared());
    Ok(if scale > 0.0 { kl / scale } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxConfig {
    pub p: usize,
    pub s: usize,
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    pub sigma: f64,
    pub sigma_star: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_c1")]
    pub c1_prime: f64,
    #[serde(default = "default_c2")]
    pub c2_prime: f64,
    /// Overrides the selected spacing.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_c1() -> f64 {
    0.1
}

fn default_c2() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxReport {
    pub config: MinimaxConfig,
    pub codewords: usize,
    pub min_pairwise_dist: Option<usize>,
    pub log_cardinality: f64,
    pub target: f64,
    pub meets_target: bool,
    pub gamma: f64,
    pub separations: Vec<Separation>,
    /// `n KL(P_{w_j}, P_{w_0})` for `j >= 1`.
    pub kl_to_first: Vec<f64>,
    pub max_kl: f64,
    /// Largest lemma-form constant over the pairs `(w_j, w_0)`.
    pub kl_bound_constant: f64,
}

/// Builds the family for `cfg` and evaluates separations and divergences.
pub fn minimax_report(cfg: &MinimaxConfig) -> Result<(HypothesisFamily, MinimaxReport)> {
    let packing = vg_packing(cfg.p, cfg.s, cfg.seed, &PackingOptions { c1_prime: cfg.c1_prime, ..PackingOptions::default() })?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => gamma_select(cfg.n, cfg.p, cfg.s, cfg.r, cfg.c1_prime, cfg.c2_prime)?,
    };
    let family = hypothesis_family(&packing, cfg.r, gamma)?;
    let model = KlModel::ar1(cfg.p, cfg.rho, cfg.sigma, cfg.sigma_star)?;
    let first = DVector::from_vec(family.omega_bars[0].clone());
    let mut kl_to_first = Vec::with_capacity(family.omega_bars.len() - 1);
    let mut kl_bound_constant: f64 = 0.0;
    for w in &family.omega_bars[1..] {
        let w = DVector::from_vec(w.clone());
        kl_to_first.push(cfg.n as f64 * kl_exact(&model, &w, &first)?);
        kl_bound_constant = kl_bound_constant.max(kl_bound_ratio(&model, &w, &first)?);
    }
    let max_kl = kl_to_first.iter().copied().fold(0.0, f64::max);
    let report = MinimaxReport {
        config: cfg.clone(),
        codewords: packing.codewords.len(),
        min_pairwise_dist: packing.min_pairwise_dist,
        log_cardinality: packing.log_cardinality,
        target: packing.target,
        meets_target: packing.meets_target,
        gamma,
        separations: separations(&family),
        kl_to_first,
        max_kl,
        kl_bound_constant,
    };
    Ok((family, report))
}
