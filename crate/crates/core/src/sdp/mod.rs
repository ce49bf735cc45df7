//! The outlier SDP: for every pair `(x, y)`
//!
//! ```text
//! (1 - d_x - d_y) d(x,y)^2  <=  |v_x - v_y|^2  <=  (c^2 + (d_x + d_y) f) d(x,y)^2
//! ```
//!
//! with `0 <= d <= 1`, Gram matrix `G = [<v_x, v_y>]` PSD, minimizing `sum d`.
//! Small penalties `d_x` mark likely outliers; [`round_solution`] thresholds
//! them and rescales the surviving vectors, and [`search_min_outliers`] walks
//! `k = 0, 1, ...` with `f = f_of_k(k)` until the optimum drops to `k`.
//!
//! Internally the metric is rescaled to unit mean squared distance and the
//! penalties are stored as `eta = s d` with `s = max(f, 1)`, so both sides of
//! each pair row have comparable magnitude. Every returned solution is
//! exactly feasible: ADMM iterates are repaired (PSD projection, scaling,
//! greedy penalty raises) before they are kept.

mod admm;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bourgain::{bourgain_embed, BourgainParams};
use crate::geometry::{centered_gram, points_from_gram, GeometryError, PointSet, SymmetricMatrix};
use crate::metric::{distortion_stats, MetricError, MetricSpace};
use crate::oracle::first_combination;
use crate::harmonic;

use admm::{project_psd, smat, svec_index, svec_into, svec_len, AdmmSettings, AdmmStatus, ConeProblem, SparseRows};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("target distortion c must be finite and at least 1, got {0}")]
    InvalidC(f64),
    #[error("penalty f_k must be finite and nonnegative, got {0}")]
    InvalidPenalty(f64),
    #[error("zeta must be finite and at least 1, got {0}")]
    InvalidZeta(f64),
    #[error("gamma must exceed 1, got {0}")]
    GammaNotAboveOne(f64),
    #[error("strong mode needs zeta_k")]
    MissingZetaK,
    #[error("certificate has {got} entries for {expected} points")]
    SizeMismatch { expected: usize, got: usize },
    #[error("solver broke down: {0}")]
    NumericalBreakdown(String),
    #[error("no k up to n met the objective test")]
    Exhausted,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// How the multiplier `g` in `f(k) = (g zeta)^2` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GMode {
    /// `g(k) = 190 H_k + 1`, times the global distortion `zeta`.
    Weak,
    /// `382 H_{k+1}` times the subset distortion `zeta_k`.
    Strong,
}

/// Multiplier `g` used by `mode` at `k`.
pub fn g_value(k: usize, mode: GMode) -> f64 {
    match mode {
        GMode::Weak => 190.0 * harmonic(k) + 1.0,
        GMode::Strong => 382.0 * harmonic(k + 1),
    }
}

/// Penalty `f(k)`.
pub fn f_of_k(k: usize, zeta: f64, mode: GMode, zeta_k: Option<f64>) -> Result<f64, SdpError> {
    if !(zeta.is_finite() && zeta >= 1.0) {
        return Err(SdpError::InvalidZeta(zeta));
    }
    let z = match mode {
        GMode::Weak => zeta,
        GMode::Strong => {
            let zk = zeta_k.ok_or(SdpError::MissingZetaK)?;
            if !(zk.is_finite() && zk >= 1.0) {
                return Err(SdpError::InvalidZeta(zk));
            }
            zk
        }
    };
    Ok((g_value(k, mode) * z).powi(2))
}

/// Cap on the rounded outlier count: `2 (g^2 zeta^2 / c^2 + gamma^2) k / (gamma^2 - 1)`.
pub fn bicriteria_bound(k: usize, c: f64, gamma: f64, g: f64, zeta: f64) -> Result<f64, SdpError> {
    if !(gamma > 1.0) {
        return Err(SdpError::GammaNotAboveOne(gamma));
    }
    let g2 = gamma * gamma;
    Ok(2.0 * ((g * zeta / c).powi(2) + g2) / (g2 - 1.0) * k as f64)
}

/// [`bicriteria_bound`] at `gamma = 1 + eps`.
pub fn bicriteria_bound_eps(k: usize, c: f64, eps: f64, g: f64, zeta: f64) -> Result<f64, SdpError> {
    bicriteria_bound(k, c, 1.0 + eps, g, zeta)
}

/// One SDP instance.
#[derive(Debug, Clone)]
pub struct SdpInstance {
    m: MetricSpace,
    c: f64,
    f_k: f64,
    pairs: Vec<(usize, usize)>,
}

pub fn build_instance(m: &MetricSpace, c: f64, f_k: f64) -> Result<SdpInstance, SdpError> {
    if !(c.is_finite() && c >= 1.0) {
        return Err(SdpError::InvalidC(c));
    }
    if !(f_k.is_finite() && f_k >= 0.0) {
        return Err(SdpError::InvalidPenalty(f_k));
    }
    let n = m.len();
    let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    Ok(SdpInstance { m: m.clone(), c, f_k, pairs })
}

/// Worst violations of a candidate `(G, delta)`, each relative: pair rows
/// divided by `d^2`, PSD by the largest eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub lower: f64,
    pub upper: f64,
    pub bounds: f64,
    pub psd: f64,
}

impl CertificateReport {
    pub fn max_violation(&self) -> f64 {
        self.lower.max(self.upper).max(self.bounds).max(self.psd)
    }
}

impl SdpInstance {
    pub fn metric(&self) -> &MetricSpace {
        &self.m
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn f_k(&self) -> f64 {
        self.f_k
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Two per pair.
    pub fn inequality_count(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Direct substitution into every constraint.
    pub fn check_certificate(&self, g: &SymmetricMatrix, delta: &[f64]) -> Result<CertificateReport, SdpError> {
        let n = self.m.len();
        if g.n() != n {
            return Err(SdpError::SizeMismatch { expected: n, got: g.n() });
        }
        if delta.len() != n {
            return Err(SdpError::SizeMismatch { expected: n, got: delta.len() });
        }
        let mut rep = CertificateReport { lower: 0.0, upper: 0.0, bounds: 0.0, psd: 0.0 };
        for &d in delta {
            rep.bounds = rep.bounds.max(-d).max(d - 1.0);
        }
        for &(x, y) in &self.pairs {
            let dd = self.m.d(x, y).powi(2);
            let dg = g.gram_sq_dist(x, y);
            let s = delta[x] + delta[y];
            rep.lower = rep.lower.max(((1.0 - s) * dd - dg) / dd);
            rep.upper = rep.upper.max((dg - (self.c * self.c + s * self.f_k) * dd) / dd);
        }
        if n > 0 {
            let ev = g.eigenvalues_desc();
            let top = ev[0].max(f64::MIN_POSITIVE);
            rep.psd = (-ev[n - 1] / top).max(0.0);
        }
        Ok(rep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative primal and dual residual target.
    pub eps_feas: f64,
    /// Relative duality-gap target.
    pub eps_obj: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { eps_feas: 1e-6, eps_obj: 1e-3, max_iters: 50_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Iterations ran out; the best repaired certificate is still returned.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub g: SymmetricMatrix,
    pub delta: Vec<f64>,
    /// `sum delta` of the returned certificate.
    pub objective: f64,
    pub max_violation: f64,
    pub stats: SolverStats,
}

/// Working copy of an instance in solver units.
struct Scaled<'a> {
    inst: &'a SdpInstance,
    /// Squared rescaled distance per pair.
    dd: Vec<f64>,
    /// Metric scale squared: `G_true = G / lambda2`.
    lambda2: f64,
    /// Penalty unit: `eta = s delta`.
    s: f64,
}

impl<'a> Scaled<'a> {
    fn new(inst: &'a SdpInstance) -> Self {
        let raw: Vec<f64> = inst.pairs.iter().map(|&(x, y)| inst.m.d(x, y).powi(2)).collect();
        let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
        let lambda2 = if mean > 0.0 { 1.0 / mean } else { 1.0 };
        Self { inst, dd: raw.iter().map(|v| v * lambda2).collect(), lambda2, s: inst.f_k.max(1.0) }
    }

    fn n(&self) -> usize {
        self.inst.m.len()
    }

    fn f_over_s(&self) -> f64 {
        self.inst.f_k / self.s
    }

    fn problem(&self) -> ConeProblem {
        let n = self.n();
        let l = svec_len(n);
        let c2 = self.inst.c * self.inst.c;
        let mut rows = Vec::new();
        let mut b = Vec::new();
        let mut push = |mut row: Vec<(usize, f64)>, rhs: f64| {
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            for e in &mut row {
                e.1 /= norm;
            }
            rows.push(row);
            b.push(rhs / norm);
        };
        for (&(x, y), &dd) in self.inst.pairs.iter().zip(&self.dd) {
            let gram = |sign: f64| {
                vec![
                    (svec_index(n, x, x), sign / dd),
                    (svec_index(n, y, y), sign / dd),
                    (svec_index(n, y, x), -sign * SQRT2 / dd),
                ]
            };
            let fs = self.f_over_s();
            let mut upper = gram(1.0);
            if fs > 0.0 {
                upper.extend([(l + x, -fs), (l + y, -fs)]);
            }
            push(upper, c2);
            let mut lower = gram(-1.0);
            lower.extend([(l + x, -1.0 / self.s), (l + y, -1.0 / self.s)]);
            push(lower, -1.0);
        }
        for i in 0..n {
            push(vec![(l + i, -1.0)], 0.0);
            push(vec![(l + i, 1.0)], self.s);
        }
        let n_nonneg = rows.len();
        for j in 0..l {
            rows.push(vec![(j, -1.0)]);
            b.push(0.0);
        }
        let mut q = vec![0.0; l + n];
        for v in &mut q[l..] {
            *v = 1.0 / self.s;
        }
        ConeProblem { a: SparseRows { rows, ncols: l + n }, b, q, n_nonneg, psd_side: n }
    }

    fn start(&self) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![0.0; svec_len(n) + n];
        let g0 = project_psd(&(centered_gram(&self.inst.m).into_inner() * self.lambda2));
        svec_into(&g0, &mut x[..svec_len(n)]);
        x
    }

    /// Turns any `(G, eta)` into an exactly feasible certificate, or `None`.
    fn repair(&self, g: &DMatrix<f64>, eta: &[f64]) -> Option<(DMatrix<f64>, Vec<f64>)> {
        let s = self.s;
        let mut g = project_psd(g);
        let mut eta: Vec<f64> = eta.iter().map(|v| v.clamp(0.0, s)).collect();
        let sq = |g: &DMatrix<f64>, x: usize, y: usize| g[(x, x)] + g[(y, y)] - 2.0 * g[(x, y)];

        // Raise penalties on `x` then `y` (larger first) by `need`, capped at s.
        let raise = |eta: &mut [f64], x: usize, y: usize, mut need: f64| -> bool {
            let (a, b) = if eta[x] >= eta[y] { (x, y) } else { (y, x) };
            for v in [a, b] {
                let step = need.min(s - eta[v]);
                eta[v] += step;
                need -= step;
            }
            need <= 0.0
        };

        let mut scale: f64 = 1.0;
        for (&(x, y), &dd) in self.inst.pairs.iter().zip(&self.dd) {
            let need = 1.0 - (eta[x] + eta[y]) / s;
            if need <= 0.0 {
                continue;
            }
            let ratio = sq(&g, x, y) / dd;
            if ratio <= 1e-12 {
                if !raise(&mut eta, x, y, need * s) {
                    return None;
                }
            } else {
                scale = scale.max(need / ratio);
            }
        }
        if scale > 1.0 {
            g *= scale * (1.0 + 1e-12);
        }

        let c2 = self.inst.c * self.inst.c;
        let fs = self.f_over_s();
        for (&(x, y), &dd) in self.inst.pairs.iter().zip(&self.dd) {
            let excess = sq(&g, x, y) / dd - c2 - fs * (eta[x] + eta[y]);
            if excess > 0.0 && (fs == 0.0 || !raise(&mut eta, x, y, excess / fs * (1.0 + 1e-12))) {
                return None;
            }
        }
        Some((g, eta))
    }

    fn objective(&self, eta: &[f64]) -> f64 {
        eta.iter().sum::<f64>() / self.s
    }
}

/// Solves the instance and returns the best exactly-feasible certificate
/// seen. `delta = 1` with `G = 0` is always feasible and seeds the search.
pub fn solve_sdp(inst: &SdpInstance, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    let n = inst.m.len();
    let zero_stats = |status| SolverStats { status, iterations: 0, primal_residual: 0.0, dual_residual: 0.0, gap: 0.0 };
    if n <= 1 {
        return Ok(SdpSolution {
            g: SymmetricMatrix::from_fn(n, |_, _| 0.0),
            delta: vec![0.0; n],
            objective: 0.0,
            max_violation: 0.0,
            stats: zero_stats(SolveStatus::Converged),
        });
    }
    let sc = Scaled::new(inst);
    let l = svec_len(n);
    let mut best = (DMatrix::zeros(n, n), vec![sc.s; n]);
    let mut best_obj = n as f64;
    let mut consider = |g: DMatrix<f64>, eta: Vec<f64>| {
        if let Some((g, eta)) = sc.repair(&g, &eta) {
            let obj = sc.objective(&eta);
            if obj < best_obj {
                best_obj = obj;
                best = (g, eta);
            }
        }
    };
    let x0 = sc.start();
    consider(smat(&x0[..l], n), x0[l..].to_vec());

    let settings = AdmmSettings {
        max_iters: opts.max_iters.max(1),
        eps_feas: opts.eps_feas,
        eps_gap: opts.eps_obj,
        rho: 0.1,
        sigma: 1e-6,
        alpha: 1.6,
        check_every: 50,
        adapt_every: 200,
    };
    let out = sc.problem().solve(&settings, &x0, |_, x| consider(smat(&x[..l], n), x[l..].to_vec()));
    if out.status == AdmmStatus::Breakdown {
        return Err(SdpError::NumericalBreakdown(format!("non-finite iterate after {} iterations", out.iterations)));
    }

    let (g, eta) = best;
    let g = SymmetricMatrix::from_fn(n, |i, j| g[(i, j)] / sc.lambda2);
    let delta: Vec<f64> = eta.iter().map(|e| (e / sc.s).clamp(0.0, 1.0)).collect();
    let max_violation = inst.check_certificate(&g, &delta)?.max_violation();
    Ok(SdpSolution {
        objective: delta.iter().sum(),
        g,
        delta,
        max_violation,
        stats: SolverStats {
            status: if out.status == AdmmStatus::Converged { SolveStatus::Converged } else { SolveStatus::IterationLimit },
            iterations: out.iterations,
            primal_residual: out.residuals.primal,
            dual_residual: out.residuals.dual,
            gap: out.residuals.gap,
        },
    })
}

/// Outcome of thresholding a solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rounding {
    /// Removed points `K`, ascending.
    #[serde(rename = "K")]
    pub outliers: Vec<usize>,
    /// Remaining points, ascending; `embedding` row `i` is `survivors[i]`.
    pub survivors: Vec<usize>,
    pub embedding: PointSet,
    pub threshold: f64,
    pub scale: f64,
    pub achieved_distortion: f64,
    /// `sum delta / threshold`, which caps `|K|`.
    pub count_bound: f64,
}

/// Threshold `Delta = c^2 (gamma^2 - 1) / (2 f + 2 c^2 gamma^2)`.
pub fn rounding_threshold(c: f64, gamma: f64, f_k: f64) -> Result<f64, SdpError> {
    if !(gamma > 1.0) {
        return Err(SdpError::GammaNotAboveOne(gamma));
    }
    let (c2, g2) = (c * c, gamma * gamma);
    Ok(c2 * (g2 - 1.0) / (2.0 * f_k + 2.0 * c2 * g2))
}

/// Drops `{x : delta_x >= Delta}` and scales the remaining Gram vectors by
/// `1 / sqrt(1 - 2 Delta)`.
pub fn round_solution(inst: &SdpInstance, sol: &SdpSolution, gamma: f64) -> Result<Rounding, SdpError> {
    let n = inst.m.len();
    if sol.delta.len() != n {
        return Err(SdpError::SizeMismatch { expected: n, got: sol.delta.len() });
    }
    let threshold = rounding_threshold(inst.c, gamma, inst.f_k)?;
    let scale = 1.0 / (1.0 - 2.0 * threshold).sqrt();
    let outliers: Vec<usize> = (0..n).filter(|&x| sol.delta[x] >= threshold).collect();
    let (sub, survivors) = inst.m.restrict(&outliers)?;
    let g = SymmetricMatrix::from_fn(survivors.len(), |i, j| sol.g.get(survivors[i], survivors[j]));
    let embedding = points_from_gram(&g, 1e-10)?.scaled(scale);
    let achieved_distortion = distortion_stats(&sub, &embedding)?.distortion;
    Ok(Rounding {
        outliers,
        survivors,
        embedding,
        threshold,
        scale,
        achieved_distortion,
        count_bound: sol.delta.iter().sum::<f64>() / threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub solver: SolverOptions,
    /// Global distortion bound; measured by a Bourgain run when absent.
    pub zeta: Option<f64>,
    /// Seed of the Bourgain runs.
    pub seed: u64,
    /// Strong mode measures subset distortions only while the number of
    /// subsets stays at or below this; beyond it the global zeta is used.
    pub strong_subset_limit: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), zeta: None, seed: 0, strong_subset_limit: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub k: usize,
    pub f_k: f64,
    pub objective: f64,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierResult {
    pub k: usize,
    pub c: f64,
    pub gamma: f64,
    pub mode: GMode,
    pub zeta: f64,
    /// `"user"` or `"bourgain"`.
    pub zeta_source: String,
    /// The distortion that entered `f_k`: effective zeta (weak) or zeta_k (strong).
    pub zeta_used: f64,
    pub g_value: f64,
    pub f_k: f64,
    pub objective: f64,
    pub delta: Vec<f64>,
    pub certified_bound: f64,
    #[serde(flatten)]
    pub rounding: Rounding,
    pub trace: Vec<SearchStep>,
}

fn measured_distortion(m: &MetricSpace, seed: u64) -> Result<f64, SdpError> {
    let (_, stats) = bourgain_embed(m, &BourgainParams::default_for(m.len(), seed, 2.0))?;
    Ok(stats.distortion)
}

/// Largest distortion over `size`-subsets, each capped at `zeta`. Falls back
/// to `zeta` when there are more than `limit` subsets.
fn subset_zeta(m: &MetricSpace, size: usize, zeta: f64, seed: u64, limit: usize) -> Result<f64, SdpError> {
    let n = m.len();
    if size <= 2 || size > n {
        return Ok(if size > n { zeta } else { 1.0 });
    }
    let mut count = 0usize;
    first_combination(n, size, |_| {
        count += 1;
        count > limit
    });
    if count > limit {
        return Ok(zeta);
    }
    let mut worst: f64 = 1.0;
    let mut err = None;
    first_combination(n, size, |set| {
        match m.induced(set).map_err(SdpError::from).and_then(|sub| measured_distortion(&sub, seed)) {
            Ok(z) => worst = worst.max(z.min(zeta)),
            Err(e) => err = Some(e),
        }
        err.is_some()
    });
    match err {
        Some(e) => Err(e),
        None => Ok(worst),
    }
}

/// Tries `k = 0, 1, ...` and rounds the first solution with objective at
/// most `k + eps_obj`. At `k = 0` the rounded set must also be empty.
pub fn search_min_outliers(
    m: &MetricSpace,
    c: f64,
    gamma: f64,
    mode: GMode,
    opts: &SearchOptions,
) -> Result<OutlierResult, SdpError> {
    if !(gamma > 1.0) {
        return Err(SdpError::GammaNotAboveOne(gamma));
    }
    if !(c.is_finite() && c >= 1.0) {
        return Err(SdpError::InvalidC(c));
    }
    let (zeta, zeta_source) = match opts.zeta {
        Some(z) => (z, "user"),
        None => (measured_distortion(m, opts.seed)?, "bourgain"),
    };
    if !(zeta.is_finite() && zeta >= 1.0) {
        return Err(SdpError::InvalidZeta(zeta));
    }
    let zeta_eff = zeta.max(c);
    let mut trace = Vec::new();
    for k in 0..=m.len() {
        let (zeta_used, zeta_k) = match mode {
            GMode::Weak => (zeta_eff, None),
            GMode::Strong => {
                let zk = subset_zeta(m, k + 1, zeta_eff, opts.seed, opts.strong_subset_limit)?;
                (zk, Some(zk))
            }
        };
        let f_k = f_of_k(k, zeta_eff, mode, zeta_k)?;
        let inst = build_instance(m, c, f_k)?;
        let sol = solve_sdp(&inst, &opts.solver)?;
        trace.push(SearchStep { k, f_k, objective: sol.objective, stats: sol.stats.clone() });
        if sol.objective <= k as f64 + opts.solver.eps_obj {
            let rounding = round_solution(&inst, &sol, gamma)?;
            // k = 0 certifies no outliers at all, so it only counts when
            // rounding removes nothing.
            if k == 0 && !rounding.outliers.is_empty() {
                continue;
            }
            let g = g_value(k, mode);
            return Ok(OutlierResult {
                k,
                c,
                gamma,
                mode,
                zeta,
                zeta_source: zeta_source.to_string(),
                zeta_used,
                g_value: g,
                f_k,
                objective: sol.objective,
                delta: sol.delta,
                certified_bound: bicriteria_bound(k, c, gamma, g, zeta_used)?,
                rounding,
                trace,
            });
        }
    }
    Err(SdpError::Exhausted)
}

#[cfg(test)]
mod tests;
