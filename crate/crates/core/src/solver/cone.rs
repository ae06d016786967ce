//! Cone algebra for the product of a nonnegative orthant and second-order
//! cones: membership, step lengths, Jordan products and Nesterov-Todd scaling.

use nalgebra::{DMatrix, DVector};

/// Layout of `K = R_+^nonneg x Q^{soc[0]} x Q^{soc[1]} x ...`.
///
/// Slack vectors are ordered with the orthant first, then each cone block
/// `(u0, u1)` with `u0` the scalar head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeLayout {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeLayout {
    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant coordinate, one per cone block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// `(offset, size)` of each second-order cone block.
    pub fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&q| {
            let b = (off, q);
            off += q;
            b
        })
    }

    /// Smallest `a` such that `u + a e` lies on the boundary of `K`
    /// (negative when `u` is interior).
    pub fn boundary_shift(&self, u: &DVector<f64>) -> f64 {
        let mut shift = f64::NEG_INFINITY;
        for i in 0..self.nonneg {
            shift = shift.max(-u[i]);
        }
        for (off, q) in self.soc_blocks() {
            let tail = u.rows(off + 1, q - 1).norm();
            shift = shift.max(tail - u[off]);
        }
        shift
    }

    /// `u + a e` where `e` is the identity element of the cone.
    pub fn add_identity(&self, u: &mut DVector<f64>, a: f64) {
        for i in 0..self.nonneg {
            u[i] += a;
        }
        for (off, _) in self.soc_blocks() {
            u[off] += a;
        }
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        self.add_identity(&mut e, 1.0);
        e
    }

    /// Distance-style violation of membership: `max(0, -u_i)` on the orthant,
    /// `max(0, |u1| - u0)` per cone block.
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        self.boundary_shift(u).max(0.0)
    }

    /// Largest `a >= 0` keeping `u + a du` in the cone, assuming `u` interior.
    pub fn max_step(&self, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.nonneg {
            if du[i] < 0.0 {
                alpha = alpha.min(-u[i] / du[i]);
            }
        }
        for (off, q) in self.soc_blocks() {
            alpha = alpha.min(soc_max_step(
                u.rows(off, q).as_slice(),
                du.rows(off, q).as_slice(),
            ));
        }
        alpha
    }

    /// Jordan product `u o v`.
    pub fn circ(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(u.len());
        for i in 0..self.nonneg {
            w[i] = u[i] * v[i];
        }
        for (off, q) in self.soc_blocks() {
            let u0 = u[off];
            let v0 = v[off];
            w[off] = u.rows(off, q).dot(&v.rows(off, q));
            for k in 1..q {
                w[off + k] = u0 * v[off + k] + v0 * u[off + k];
            }
        }
        w
    }

    /// Solves `lambda o x = v` for `x` (inverse of the arrow operator).
    pub fn circ_solve(&self, lambda: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(v.len());
        for i in 0..self.nonneg {
            x[i] = v[i] / lambda[i];
        }
        for (off, q) in self.soc_blocks() {
            let l0 = lambda[off];
            let l1 = lambda.rows(off + 1, q - 1);
            let v1 = v.rows(off + 1, q - 1);
            let det = jordan_det(lambda.rows(off, q).as_slice());
            let x0 = (l0 * v[off] - l1.dot(&v1)) / det;
            x[off] = x0;
            for k in 1..q {
                x[off + k] = (v[off + k] - lambda[off + k] * x0) / l0;
            }
        }
        x
    }
}

/// `u0^2 - |u1|^2`, factored to limit cancellation near the boundary.
fn jordan_det(u: &[f64]) -> f64 {
    let tail = u[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    (u[0] - tail) * (u[0] + tail)
}

fn soc_max_step(u: &[f64], du: &[f64]) -> f64 {
    let c = jordan_det(u);
    let a = jordan_det(du);
    let b = u[0] * du[0] - u[1..].iter().zip(&du[1..]).map(|(x, y)| x * y).sum::<f64>();
    let scale = du.iter().map(|x| x * x).sum::<f64>();
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-14 * scale {
        // du on the boundary ray of Q or -Q: f(alpha) = 2 b alpha + c.
        if du[0] >= 0.0 || b >= 0.0 {
            return f64::INFINITY;
        }
        return -c / (2.0 * b);
    }
    let d = (b * b - a * c).max(0.0);
    let sd = d.sqrt();
    if a > 0.0 {
        if du[0] > 0.0 {
            // du interior to Q.
            return f64::INFINITY;
        }
        // du interior to -Q: exit at the smaller (positive) root.
        let den = -b + sd;
        if den <= 0.0 {
            return f64::INFINITY;
        }
        c / den
    } else if b > 0.0 {
        (-b - sd) / a
    } else {
        c / (-b + sd)
    }
}

/// Nesterov-Todd scaling `W` at a strictly interior pair `(s, z)`:
/// symmetric, block diagonal, with `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub struct NtScaling {
    layout: ConeLayout,
    /// Orthant part: `sqrt(s_i / z_i)`.
    diag: Vec<f64>,
    /// Cone blocks: `(eta, wbar)` with `wbar' J wbar = 1`.
    blocks: Vec<(f64, DVector<f64>)>,
}

impl NtScaling {
    pub fn new(layout: &ConeLayout, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let diag = (0..layout.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let blocks = layout
            .soc_blocks()
            .map(|(off, q)| {
                let sb = s.rows(off, q).into_owned();
                let zb = z.rows(off, q).into_owned();
                let sn = jordan_det(sb.as_slice()).sqrt();
                let zn = jordan_det(zb.as_slice()).sqrt();
                let sbar = &sb / sn;
                let zbar = &zb / zn;
                let gamma = ((1.0 + sbar.dot(&zbar)) / 2.0).sqrt();
                let mut wbar = DVector::zeros(q);
                wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for k in 1..q {
                    wbar[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
                }
                let eta = (sn / zn).sqrt();
                (eta, wbar)
            })
            .collect();
        Self { layout: layout.clone(), diag, blocks }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_impl(v, false)
    }

    pub fn apply_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_impl(v, true)
    }

    fn apply_impl(&self, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (i, &d) in self.diag.iter().enumerate() {
            out[i] = if inverse { v[i] / d } else { v[i] * d };
        }
        for ((off, q), (eta, w)) in self.layout.soc_blocks().zip(&self.blocks) {
            let sign = if inverse { -1.0 } else { 1.0 };
            let scale = if inverse { 1.0 / eta } else { *eta };
            let v0 = v[off];
            let w0 = w[0];
            let w1v1: f64 = (1..q).map(|k| w[k] * v[off + k]).sum();
            out[off] = scale * (w0 * v0 + sign * w1v1);
            let coef = sign * v0 + w1v1 / (1.0 + w0);
            for k in 1..q {
                out[off + k] = scale * (v[off + k] + coef * w[k]);
            }
        }
        out
    }

    /// Dense `W^{-2}` block for cone block `idx`.
    pub fn soc_inv_sq_block(&self, idx: usize) -> DMatrix<f64> {
        let (eta, w) = &self.blocks[idx];
        let q = w.len();
        let w0 = w[0];
        let mut winv = DMatrix::zeros(q, q);
        winv[(0, 0)] = w0;
        for k in 1..q {
            winv[(0, k)] = -w[k];
            winv[(k, 0)] = -w[k];
            for l in 1..q {
                winv[(k, l)] = w[k] * w[l] / (1.0 + w0) + if k == l { 1.0 } else { 0.0 };
            }
        }
        winv /= *eta;
        &winv * &winv
    }

    /// Orthant part of `W^{-2}`: `z_i / s_i`.
    pub fn nonneg_inv_sq(&self, i: usize) -> f64 {
        1.0 / (self.diag[i] * self.diag[i])
    }
}

/// Euclidean projection onto `K`.
pub fn project(layout: &ConeLayout, u: &DVector<f64>) -> DVector<f64> {
    let mut out = u.clone();
    for i in 0..layout.nonneg {
        out[i] = u[i].max(0.0);
    }
    for (off, q) in layout.soc_blocks() {
        let t = u[off];
        let tail = u.rows(off + 1, q - 1).norm();
        if tail <= t {
            continue;
        }
        if tail <= -t {
            out.rows_mut(off, q).fill(0.0);
            continue;
        }
        let a = (t + tail) / 2.0;
        out[off] = a;
        for k in 1..q {
            out[off + k] = a * u[off + k] / tail;
        }
    }
    out
}
