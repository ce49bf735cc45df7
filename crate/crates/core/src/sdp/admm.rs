//! Operator-splitting solver for `min q'x  s.t.  Ax + s = b,  s in K`, where
//! `K` is a nonnegative orthant followed by one PSD cone stored as a scaled
//! lower-triangle vector (off-diagonal entries times sqrt 2).
//!
//! Each iteration solves `(sigma I + rho A'A) x = sigma x - q + rho A'(b - s - u)`
//! with a cached Cholesky factor, over-relaxes `Ax`, projects onto `K`, and
//! updates the scaled dual `u`. The dual estimate is `y = rho u`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::geometry::eigen_desc;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Row-sparse constraint matrix.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub ncols: usize,
}

impl SparseRows {
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(j, v) in r {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    fn gram(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ncols, self.ncols);
        for r in &self.rows {
            for &(i, vi) in r {
                for &(j, vj) in r {
                    m[(i, j)] += vi * vj;
                }
            }
        }
        m
    }
}

/// Index of `(i, j)`, `i >= j`, in the packed lower triangle of side `n`,
/// column by column.
pub(crate) fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    j * n - j * (j + 1) / 2 + i
}

pub(crate) fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub(crate) fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let x = v[svec_index(n, i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / SQRT2;
                m[(j, i)] = x / SQRT2;
            }
        }
    }
    m
}

pub(crate) fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    for j in 0..n {
        for i in j..n {
            out[svec_index(n, i, j)] = if i == j { m[(i, i)] } else { m[(i, j)] * SQRT2 };
        }
    }
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clamped).
pub(crate) fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let (values, vectors) = eigen_desc(m);
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        if lam > 0.0 {
            let v = vectors.column(k);
            out += lam * v * v.transpose();
        }
    }
    0.5 * (&out + out.transpose())
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProblem {
    pub a: SparseRows,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    /// Leading rows constrained to `s >= 0`.
    pub n_nonneg: usize,
    /// Side of the trailing PSD block.
    pub psd_side: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AdmmSettings {
    pub max_iters: usize,
    pub eps_feas: f64,
    pub eps_gap: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub check_every: usize,
    pub adapt_every: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AdmmStatus {
    Converged,
    IterationLimit,
    Breakdown,
}

pub(crate) struct AdmmOutcome {
    #[allow(dead_code)]
    pub x: Vec<f64>,
    pub iterations: usize,
    pub status: AdmmStatus,
    pub residuals: Residuals,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
}

impl Factor {
    fn new(ata: &DMatrix<f64>, sigma: f64, rho: f64) -> Option<Self> {
        let n = ata.nrows();
        let k = DMatrix::<f64>::identity(n, n) * sigma + ata * rho;
        Cholesky::new(k).map(|chol| Self { chol })
    }

    fn solve(&self, rhs: Vec<f64>) -> Vec<f64> {
        self.chol.solve(&DVector::from_vec(rhs)).data.into()
    }
}

impl ConeProblem {
    fn project(&self, v: &mut [f64]) {
        for x in &mut v[..self.n_nonneg] {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        if self.psd_side > 0 {
            let tail = &mut v[self.n_nonneg..];
            let m = project_psd(&smat(tail, self.psd_side));
            svec_into(&m, tail);
        }
    }

    /// Runs the iteration from `x0`. `on_check(iter, x)` is called every
    /// `check_every` iterations and at exit.
    pub fn solve(&self, settings: &AdmmSettings, x0: &[f64], mut on_check: impl FnMut(usize, &[f64])) -> AdmmOutcome {
        let (m, n) = (self.b.len(), self.a.ncols);
        let ata = self.a.gram();
        let mut rho = settings.rho;
        let sigma = settings.sigma;
        let mut factor = match Factor::new(&ata, sigma, rho) {
            Some(f) => f,
            None => {
                return AdmmOutcome { x: x0.to_vec(), iterations: 0, status: AdmmStatus::Breakdown, residuals: Residuals::default() }
            }
        };
        let mut x = x0.to_vec();
        let mut s = {
            let ax = self.a.mul(&x);
            let mut s: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            self.project(&mut s);
            s
        };
        let mut u = vec![0.0; m];
        let b_norm = inf_norm(&self.b);
        let q_norm = inf_norm(&self.q);
        let mut res = Residuals::default();

        for iter in 1..=settings.max_iters {
            let w: Vec<f64> = (0..m).map(|i| self.b[i] - s[i] - u[i]).collect();
            let atw = self.a.mul_t(&w);
            let rhs: Vec<f64> = (0..n).map(|j| sigma * x[j] - self.q[j] + rho * atw[j]).collect();
            x = factor.solve(rhs);
            let ax = self.a.mul(&x);
            let z: Vec<f64> = (0..m)
                .map(|i| settings.alpha * ax[i] + (1.0 - settings.alpha) * (self.b[i] - s[i]))
                .collect();
            let mut s_new: Vec<f64> = (0..m).map(|i| self.b[i] - z[i] - u[i]).collect();
            self.project(&mut s_new);
            for i in 0..m {
                u[i] += z[i] + s_new[i] - self.b[i];
            }
            s = s_new;

            let check = iter % settings.check_every == 0 || iter == settings.max_iters;
            if !check {
                continue;
            }
            if x.iter().any(|v| !v.is_finite()) {
                return AdmmOutcome { x, iterations: iter, status: AdmmStatus::Breakdown, residuals: res };
            }
            let y: Vec<f64> = u.iter().map(|v| rho * v).collect();
            let aty = self.a.mul_t(&y);
            let prim: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - self.b[i]).collect();
            let dual: Vec<f64> = (0..n).map(|j| self.q[j] + aty[j]).collect();
            let (qx, by) = (dot(&self.q, &x), dot(&self.b, &y));
            res = Residuals { primal: inf_norm(&prim), dual: inf_norm(&dual), gap: (qx + by).abs() };
            on_check(iter, &x);

            let p_scale = 1.0 + inf_norm(&ax).max(inf_norm(&s)).max(b_norm);
            let d_scale = 1.0 + inf_norm(&aty).max(q_norm);
            let g_scale = 1.0 + qx.abs() + by.abs();
            if res.primal <= settings.eps_feas * p_scale
                && res.dual <= settings.eps_feas * d_scale
                && res.gap <= settings.eps_gap * g_scale
            {
                return AdmmOutcome { x, iterations: iter, status: AdmmStatus::Converged, residuals: res };
            }

            if settings.adapt_every > 0 && iter % settings.adapt_every == 0 {
                let ratio = ((res.primal / p_scale) / (res.dual / d_scale).max(1e-300)).sqrt();
                let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                    if let Some(f) = Factor::new(&ata, sigma, new_rho) {
                        for v in &mut u {
                            *v *= rho / new_rho;
                        }
                        rho = new_rho;
                        factor = f;
                    }
                }
            }
        }
        AdmmOutcome { x, iterations: settings.max_iters, status: AdmmStatus::IterationLimit, residuals: res }
    }
}
