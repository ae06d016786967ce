//! Homogeneous self-dual interior-point method.
//!
//! Iterates on the embedding
//!
//! ```text
//! [0]   [ 0   A'  G'  c ] [x]
//! [0] = [-A   0   0   b ] [y]
//! [s]   [-G   0   0   h ] [z]
//! [k]   [-c' -b' -h'  0 ] [tau]
//! ```
//!
//! with `s, z in K` and `tau, kappa >= 0`. Optimal points are recovered as
//! `(x, y, z, s) / tau`; when `tau -> 0` the iterates converge to a primal or
//! dual infeasibility certificate instead.

use std::cell::OnceCell;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::cone::NtScaling;
use super::{ConicForm, RawSolution, SolveStatus, SolverSettings};

const STEP_FRACTION: f64 = 0.99;
const REFINE_STEPS: usize = 3;
/// Relative residual above which the reduced solve is replaced.
const REDUCED_ACCURACY: f64 = 1e-10;

/// Reduced KKT system `[[G' W^-2 G, A'], [A, 0]]` with sparsity-aware assembly.
struct Kkt<'a> {
    form: &'a ConicForm,
    /// Nonzeros of each orthant row of `G`.
    orthant_rows: Vec<Vec<(usize, f64)>>,
    /// Columns touched by each cone block of `G`.
    block_cols: Vec<Vec<usize>>,
    reg: f64,
}

struct Factored {
    lu: LU<f64, Dyn, Dyn>,
    /// Factorization of the full system, built on demand when the reduced
    /// one is too ill-conditioned near the solution.
    augmented: OnceCell<LU<f64, Dyn, Dyn>>,
}

impl<'a> Kkt<'a> {
    fn new(form: &'a ConicForm, reg: f64) -> Self {
        let g = &form.g;
        let n = g.ncols();
        let orthant_rows = (0..form.layout.nonneg)
            .map(|i| (0..n).filter_map(|j| (g[(i, j)] != 0.0).then(|| (j, g[(i, j)]))).collect())
            .collect();
        let block_cols = form
            .layout
            .soc_blocks()
            .map(|(off, q)| (0..n).filter(|&j| (off..off + q).any(|i| g[(i, j)] != 0.0)).collect())
            .collect();
        Self { form, orthant_rows, block_cols, reg }
    }

    fn factor(&self, w: &NtScaling) -> Factored {
        let g = &self.form.g;
        let n = g.ncols();
        let p = self.form.a.nrows();
        let mut h = DMatrix::zeros(n, n);
        for (i, row) in self.orthant_rows.iter().enumerate() {
            let wi = w.nonneg_inv_sq(i);
            for &(a, ga) in row {
                let wga = wi * ga;
                for &(b, gb) in row {
                    h[(a, b)] += wga * gb;
                }
            }
        }
        for (k, ((off, q), cols)) in self.form.layout.soc_blocks().zip(&self.block_cols).enumerate() {
            let m = w.soc_inv_sq_block(k);
            let gb = DMatrix::from_fn(q, cols.len(), |i, j| g[(off + i, cols[j])]);
            let sub = gb.tr_mul(&(&m * &gb));
            for (a, &ca) in cols.iter().enumerate() {
                for (b, &cb) in cols.iter().enumerate() {
                    h[(ca, cb)] += sub[(a, b)];
                }
            }
        }
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            k[(i, i)] += self.reg;
        }
        if p > 0 {
            k.view_mut((0, n), (n, p)).copy_from(&self.form.a.transpose());
            k.view_mut((n, 0), (p, n)).copy_from(&self.form.a);
            for i in 0..p {
                k[(n + i, n + i)] = -self.reg;
            }
        }
        Factored { lu: k.lu(), augmented: OnceCell::new() }
    }

    /// `[[reg I, A', G'], [A, -reg I, 0], [G, 0, -(W^2 + reg I)]]`.
    fn factor_augmented(&self, w: &NtScaling) -> LU<f64, Dyn, Dyn> {
        let form = self.form;
        let n = form.g.ncols();
        let p = form.a.nrows();
        let m = form.g.nrows();
        let mut k = DMatrix::zeros(n + p + m, n + p + m);
        for i in 0..n {
            k[(i, i)] = self.reg;
        }
        for i in 0..p {
            k[(n + i, n + i)] = -self.reg;
        }
        k.view_mut((0, n), (n, p)).copy_from(&form.a.transpose());
        k.view_mut((n, 0), (p, n)).copy_from(&form.a);
        k.view_mut((0, n + p), (n, m)).copy_from(&form.g.transpose());
        k.view_mut((n + p, 0), (m, n)).copy_from(&form.g);
        let mut unit = DVector::zeros(m);
        for j in 0..m {
            unit[j] = 1.0;
            let col = w.apply(&w.apply(&unit));
            unit[j] = 0.0;
            for i in 0..m {
                k[(n + p + i, n + p + j)] = -col[i];
            }
            k[(n + p + j, n + p + j)] -= self.reg;
        }
        k.lu()
    }

    fn solve_augmented(
        &self,
        fac: &Factored,
        w: &NtScaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let form = self.form;
        let (n, p, m) = (form.g.ncols(), form.a.nrows(), form.g.nrows());
        let lu = fac.augmented.get_or_init(|| self.factor_augmented(w));
        let mut rhs = DVector::zeros(n + p + m);
        rhs.rows_mut(0, n).copy_from(r1);
        rhs.rows_mut(n, p).copy_from(r2);
        rhs.rows_mut(n + p, m).copy_from(r3);
        let sol = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n + p + m));
        (sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned(), sol.rows(n + p, m).into_owned())
    }

    fn residual(
        &self,
        w: &NtScaling,
        d: &(DVector<f64>, DVector<f64>, DVector<f64>),
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let form = self.form;
        let (dx, dy, dz) = d;
        (
            r1 - form.a.tr_mul(dy) - form.g.tr_mul(dz),
            r2 - &form.a * dx,
            r3 - (&form.g * dx - w.apply(&w.apply(dz))),
        )
    }

    /// One reduced solve of the block system, without refinement.
    fn solve_once(
        &self,
        fac: &Factored,
        w: &NtScaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let form = self.form;
        let n = form.g.ncols();
        let p = form.a.nrows();
        let top = r1 + form.g.tr_mul(&w.apply_inv(&w.apply_inv(r3)));
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&top);
        rhs.rows_mut(n, p).copy_from(r2);
        let sol = fac.lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n + p));
        let dx = sol.rows(0, n).into_owned();
        let dy = sol.rows(n, p).into_owned();
        let dz = w.apply_inv(&w.apply_inv(&(&form.g * &dx - r3)));
        (dx, dy, dz)
    }

    /// Solves `[0 A' G'; A 0 0; G 0 -W^2] [dx; dy; dz] = [r1; r2; r3]`,
    /// refining against the unregularized full system.
    fn solve(
        &self,
        fac: &Factored,
        w: &NtScaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let scale = 1.0 + r1.amax().max(r2.amax()).max(r3.amax());
        let reduced = self.refine(w, r1, r2, r3, |a, b, c| self.solve_once(fac, w, a, b, c));
        if reduced.1 <= REDUCED_ACCURACY * scale {
            return reduced.0;
        }
        let full = self.refine(w, r1, r2, r3, |a, b, c| self.solve_augmented(fac, w, a, b, c));
        if full.1 < reduced.1 || !reduced.1.is_finite() {
            full.0
        } else {
            reduced.0
        }
    }

    /// Iterative refinement around `step`; returns the direction and the
    /// infinity norm of its residual.
    fn refine(
        &self,
        w: &NtScaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
        step: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>),
    ) -> ((DVector<f64>, DVector<f64>, DVector<f64>), f64) {
        let mut d = step(r1, r2, r3);
        let mut size = f64::INFINITY;
        for k in 0..=REFINE_STEPS {
            let (e1, e2, e3) = self.residual(w, &d, r1, r2, r3);
            size = e1.amax().max(e2.amax()).max(e3.amax());
            if k == REFINE_STEPS || size == 0.0 || !size.is_finite() {
                break;
            }
            let (cx, cy, cz) = step(&e1, &e2, &e3);
            let next = (&d.0 + cx, &d.1 + cy, &d.2 + cz);
            let (f1, f2, f3) = self.residual(w, &next, r1, r2, r3);
            let next_size = f1.amax().max(f2.amax()).max(f3.amax());
            // A correction that does not reduce the residual is discarded.
            if !(next_size < size) {
                break;
            }
            d = next;
        }
        if !size.is_finite() {
            size = f64::INFINITY;
        }
        (d, size)
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

pub(crate) fn solve(form: &ConicForm, settings: &SolverSettings) -> RawSolution {
    let layout = &form.layout;
    let n = form.c.len();
    let p = form.a.nrows();
    let m = form.g.nrows();
    let tol = settings.tol;
    let kkt = Kkt::new(form, settings.regularization);
    let e = layout.identity();

    // Initial point: least-norm primal slack and dual, shifted into K.
    let w0 = NtScaling::new(layout, &e, &e);
    let f0 = kkt.factor(&w0);
    let (mut x, mut y, zp) = kkt.solve(&f0, &w0, &DVector::zeros(n), &form.b, &form.h);
    let mut s = -zp;
    let shift = layout.boundary_shift(&s);
    if shift >= 0.0 {
        layout.add_identity(&mut s, 1.0 + shift);
    }
    let (_, _, mut z) = kkt.solve(&f0, &w0, &(-&form.c), &DVector::zeros(p), &DVector::zeros(m));
    let shift = layout.boundary_shift(&z);
    if shift >= 0.0 {
        layout.add_identity(&mut z, 1.0 + shift);
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let degree = layout.degree() as f64 + 1.0;
    let mut stalls = 0;

    for iter in 0..=settings.max_iter {
        let xh = &x / tau;
        let yh = &y / tau;
        let zh = &z / tau;
        let rec = form.kkt(&xh, &yh, &zh);
        let pobj = form.c.dot(&xh);
        let scale = 1.0 + pobj.abs();
        if rec.primal_residual <= tol
            && rec.dual_residual <= tol
            && rec.duality_gap <= tol * scale
            && rec.complementarity.abs() <= tol * scale
        {
            return RawSolution { status: SolveStatus::Optimal, x: xh, y: yh, z: zh, iterations: iter };
        }

        // Infeasibility certificates, checked once the embedding favours kappa.
        if tau < kappa {
            let bh = form.b.dot(&y) + form.h.dot(&z);
            if bh < 0.0 {
                let res = (form.a.tr_mul(&y) + form.g.tr_mul(&z)).amax() / -bh;
                if res <= tol {
                    return RawSolution {
                        status: SolveStatus::Infeasible,
                        x: DVector::zeros(n),
                        y: &y / -bh,
                        z: &z / -bh,
                        iterations: iter,
                    };
                }
            }
            let cx = form.c.dot(&x);
            if cx < 0.0 {
                let ax = if p > 0 { (&form.a * &x).amax() } else { 0.0 };
                let res = ax.max((&form.g * &x + &s).amax()) / -cx;
                if res <= tol {
                    return RawSolution {
                        status: SolveStatus::Unbounded,
                        x: &x / -cx,
                        y: DVector::zeros(p),
                        z: DVector::zeros(m),
                        iterations: iter,
                    };
                }
            }
        }
        if iter == settings.max_iter || stalls >= 5 {
            return RawSolution { status: SolveStatus::MaxIter, x: xh, y: yh, z: zh, iterations: iter };
        }

        let rx = -(form.a.tr_mul(&y) + form.g.tr_mul(&z) + &form.c * tau);
        let ry = &form.a * &x - &form.b * tau;
        let rz = &s + &form.g * &x - &form.h * tau;
        let rtau = kappa + form.c.dot(&x) + form.b.dot(&y) + form.h.dot(&z);
        let mu = (s.dot(&z) + tau * kappa) / degree;

        let w = NtScaling::new(layout, &s, &z);
        let lambda = w.apply(&z);
        let fac = kkt.factor(&w);
        let (dx1, dy1, dz1) = kkt.solve(&fac, &w, &(-&form.c), &form.b, &form.h);
        let denom = form.c.dot(&dx1) + form.b.dot(&dy1) + form.h.dot(&dz1) - kappa / tau;

        let direction = |sigma: f64, xi: &DVector<f64>, zeta: f64| -> Direction {
            let f = 1.0 - sigma;
            let r3 = -(&rz * f) - w.apply(xi);
            let (dx2, dy2, dz2) = kkt.solve(&fac, &w, &(&rx * f), &(-(&ry * f)), &r3);
            let num = -f * rtau - zeta / tau - form.c.dot(&dx2) - form.b.dot(&dy2) - form.h.dot(&dz2);
            let dtau = num / denom;
            let dx = dx2 + &dx1 * dtau;
            let dy = dy2 + &dy1 * dtau;
            let dz = dz2 + &dz1 * dtau;
            let ds = w.apply(&(xi - w.apply(&dz)));
            let dkappa = (zeta - kappa * dtau) / tau;
            Direction { dx, dy, dz, ds, dtau, dkappa }
        };
        let max_step = |d: &Direction| -> f64 {
            let mut a = layout.max_step(&s, &d.ds).min(layout.max_step(&z, &d.dz));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        // Predictor.
        let aff = direction(0.0, &(-&lambda), -tau * kappa);
        let alpha_aff = max_step(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // Corrector with second-order term.
        let corr = layout.circ(&w.apply_inv(&aff.ds), &w.apply(&aff.dz));
        let target = &e * (sigma * mu) - layout.circ(&lambda, &lambda) - corr;
        let xi = layout.circ_solve(&lambda, &target);
        let zeta = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
        let d = direction(sigma, &xi, zeta);
        let alpha = (STEP_FRACTION * max_step(&d)).min(1.0);
        let finite = d.dx.iter().chain(d.dz.iter()).chain(d.ds.iter()).all(|v| v.is_finite())
            && d.dtau.is_finite()
            && d.dkappa.is_finite();
        if !finite || !alpha.is_finite() || alpha < 1e-12 {
            stalls += 1;
            continue;
        }
        stalls = 0;

        x += &d.dx * alpha;
        y += &d.dy * alpha;
        z += &d.dz * alpha;
        s += &d.ds * alpha;
        tau += d.dtau * alpha;
        kappa += d.dkappa * alpha;
    }
    unreachable!("loop returns on its final iteration")
}
