//! Exhaustive ground truth on small instances.

use std::collections::HashSet;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bourgain::{bourgain_embed, BourgainParams};
use crate::geometry::{is_l2_isometric, DEFAULT_EIG_TOL};
use crate::metric::{Graph, MetricSpace};
use crate::sdp::{build_instance, solve_sdp, SdpError, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("scale must be positive")]
    ZeroScale,
    #[error("solver failure: {0}")]
    SolverFailure(String),
}

impl From<SdpError> for OracleError {
    fn from(e: SdpError) -> Self {
        OracleError::SolverFailure(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_nodes: usize,
    /// Largest subset size tried; `None` means no cap.
    pub max_subset_size: Option<usize>,
    /// Column cap for hypercube search; `None` leaves only the structural cap.
    pub max_columns: Option<usize>,
    pub max_search_nodes: u64,
    pub time_cap: Duration,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_nodes: 16,
            max_subset_size: None,
            max_columns: None,
            max_search_nodes: 50_000_000,
            time_cap: Duration::from_secs(120),
        }
    }
}

impl OracleBudget {
    fn check_nodes(&self, n: usize) -> Result<(), OracleError> {
        if n > self.max_nodes {
            Err(OracleError::BudgetExceeded(format!("{n} nodes > max_nodes {}", self.max_nodes)))
        } else {
            Ok(())
        }
    }
}

/// Calls `f` on every `r`-subset of `0..n` in lexicographic order until it
/// returns `true`; returns that subset.
pub(crate) fn first_combination(n: usize, r: usize, mut f: impl FnMut(&[usize]) -> bool) -> Option<Vec<usize>> {
    if r > n {
        return None;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        if f(&idx) {
            return Some(idx);
        }
        let i = (0..r).rev().find(|&i| idx[i] < i + n - r)?;
        idx[i] += 1;
        for j in (i + 1)..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact minimum vertex cover by subset enumeration in increasing size.
/// Returns the size and the lexicographically first minimum cover.
pub fn min_vertex_cover(g: &Graph, budget: &OracleBudget) -> Result<(usize, Vec<usize>), OracleError> {
    let n = g.node_count();
    budget.check_nodes(n)?;
    let cap = budget.max_subset_size.unwrap_or(n).min(n);
    for r in 0..=cap {
        let hit = first_combination(n, r, |set| {
            let mut mask = vec![false; n];
            for &v in set {
                mask[v] = true;
            }
            g.edges().iter().all(|&(u, v)| mask[u] || mask[v])
        });
        if let Some(w) = hit {
            return Ok((r, w));
        }
    }
    Err(OracleError::BudgetExceeded(format!("no cover of size <= {cap}")))
}

/// Smallest `K` such that `X \ K` embeds isometrically in l_2, by increasing
/// size with the lexicographically first witness.
pub fn min_outlier_isometric_l2(
    m: &MetricSpace,
    budget: &OracleBudget,
) -> Result<(usize, Vec<usize>), OracleError> {
    let n = m.len();
    budget.check_nodes(n)?;
    let cap = budget.max_subset_size.unwrap_or(n).min(n);
    for r in 0..=cap {
        let hit = first_combination(n, r, |set| {
            let (sub, _) = m.restrict(set).expect("indices in range");
            is_l2_isometric(&sub, DEFAULT_EIG_TOL)
        });
        if let Some(w) = hit {
            return Ok((r, w));
        }
    }
    Err(OracleError::BudgetExceeded(format!("no isometric restriction with <= {cap} outliers")))
}

/// Smallest `c` (within `tol`) for which the outlier-free SDP is feasible,
/// by bisection on `[1, measured Bourgain distortion]`.
///
/// A candidate `c` counts as feasible when the outlier SDP with penalty 1
/// has a repaired objective of at most `FEASIBLE_SLACK`: every pair then
/// stays within `sqrt((c^2 + 2s) / (1 - 2s))` of distortion `c`.
pub fn optimal_distortion_l2(m: &MetricSpace, tol: f64, opts: &SolverOptions) -> Result<f64, OracleError> {
    const FEASIBLE_SLACK: f64 = 1e-5;
    if m.len() <= 2 || is_l2_isometric(m, DEFAULT_EIG_TOL) {
        return Ok(1.0);
    }
    let (_, stats) = bourgain_embed(m, &BourgainParams::default_for(m.len(), 0, 2.0))
        .map_err(|e| OracleError::SolverFailure(e.to_string()))?;
    let feasible = |c: f64| -> Result<bool, OracleError> {
        let inst = build_instance(m, c, 1.0)?;
        let sol = solve_sdp(&inst, opts)?;
        Ok(sol.objective <= FEASIBLE_SLACK)
    };
    let (mut lo, mut hi) = (1.0, stats.distortion.max(1.0));
    if !feasible(hi)? {
        return Err(OracleError::SolverFailure(format!("no feasible point at c = {hi}")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Outcome of the hypercube search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypercubeResult {
    pub embeddable: bool,
    /// Rows are codewords, node 0 is all zeros.
    pub witness: Option<Vec<Vec<u8>>>,
    /// Column cap actually searched.
    pub column_cap: usize,
    pub search_nodes: u64,
}

struct CubeSearch {
    /// `separates[c]` lists the pair indices cut `c` separates.
    separates: Rc<Vec<Vec<usize>>>,
    cap: usize,
    failed: HashSet<(usize, usize, Vec<u32>)>,
    nodes: u64,
    max_nodes: u64,
    deadline: Instant,
    chosen: Vec<usize>,
    min_sep: usize,
    max_sep: usize,
}

impl CubeSearch {
    fn run(&mut self, start: usize, residual: &mut Vec<u32>, total: u64) -> Result<bool, OracleError> {
        if total == 0 {
            return Ok(true);
        }
        let left = self.cap - self.chosen.len();
        if left == 0 || total > (left * self.max_sep) as u64 {
            return Ok(false);
        }
        // every remaining cut removes at least min_sep units of residual
        if (total as usize) < self.min_sep {
            return Ok(false);
        }
        let key = (start, left, residual.clone());
        if self.failed.contains(&key) {
            return Ok(false);
        }
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(OracleError::BudgetExceeded(format!("{} search nodes", self.max_nodes)));
        }
        if self.nodes % 4096 == 0 && Instant::now() > self.deadline {
            return Err(OracleError::BudgetExceeded("time cap".into()));
        }
        let first_open = residual.iter().position(|&r| r > 0).expect("total > 0");
        let separates = Rc::clone(&self.separates);
        for (c, sep) in separates.iter().enumerate().skip(start) {
            if sep.iter().any(|&p| residual[p] == 0) {
                continue;
            }
            // the lowest open pair must still be separable by some cut >= c
            if !self.coverable(first_open, c, residual) {
                break;
            }
            for &p in sep {
                residual[p] -= 1;
            }
            self.chosen.push(c);
            let found = self.run(c, residual, total - sep.len() as u64)?;
            if found {
                return Ok(true);
            }
            self.chosen.pop();
            for &p in sep {
                residual[p] += 1;
            }
        }
        self.failed.insert(key);
        Ok(false)
    }

    fn coverable(&self, pair: usize, from: usize, residual: &[u32]) -> bool {
        self.separates[from..]
            .iter()
            .any(|sep| sep.contains(&pair) && sep.iter().all(|&p| residual[p] > 0))
    }
}

/// Searches for binary codewords whose Hamming distances equal `scale` times
/// the graph distances. Node 0 is fixed to the all-zero word, so each column
/// is a nonempty cut avoiding node 0; columns are enumerated as a multiset
/// in non-decreasing cut order. A cut separates at least `n - 1` pairs, so
/// no embedding needs more than `scale * sum(d) / (n - 1)` columns; the
/// search uses the smaller of that and `budget.max_columns`.
pub fn hypercube_embeddable(g: &Graph, scale: usize, budget: &OracleBudget) -> Result<HypercubeResult, OracleError> {
    if scale == 0 {
        return Err(OracleError::ZeroScale);
    }
    let n = g.node_count();
    budget.check_nodes(n)?;
    let m = MetricSpace::from_graph(g).map_err(|_| OracleError::Disconnected)?;
    if n <= 1 {
        return Ok(HypercubeResult { embeddable: true, witness: Some(vec![vec![]; n]), column_cap: 0, search_nodes: 0 });
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
    let target: Vec<u32> = pairs.iter().map(|&(u, v)| (scale as f64 * m.d(u, v)) as u32).collect();
    let total: u64 = target.iter().map(|&t| t as u64).sum();
    let structural = (total as usize) / (n - 1);
    let cap = budget.max_columns.map_or(structural, |c| c.min(structural));

    // Hamming distances to the zero word fix parities: h(u,v) = h(0,u) + h(0,v) mod 2.
    let h0 = |v: usize| (scale as f64 * m.d(0, v)) as u64;
    let parity_ok = pairs.iter().zip(&target).all(|(&(u, v), &t)| (t as u64 + h0(u) + h0(v)) % 2 == 0);
    if !parity_ok {
        return Ok(HypercubeResult { embeddable: false, witness: None, column_cap: cap, search_nodes: 0 });
    }

    let cuts: Vec<u64> = (1u64..(1u64 << (n - 1))).map(|mask| mask << 1).collect();
    let separates: Vec<Vec<usize>> = cuts
        .iter()
        .map(|&cut| {
            pairs
                .iter()
                .enumerate()
                .filter(|(_, &(u, v))| ((cut >> u) & 1) != ((cut >> v) & 1))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let min_sep = separates.iter().map(Vec::len).min().unwrap_or(0);
    let max_sep = separates.iter().map(Vec::len).max().unwrap_or(0);
    let mut search = CubeSearch {
        separates: Rc::new(separates),
        cap,
        failed: HashSet::new(),
        nodes: 0,
        max_nodes: budget.max_search_nodes,
        deadline: Instant::now() + budget.time_cap,
        chosen: Vec::new(),
        min_sep,
        max_sep,
    };
    let mut residual = target.clone();
    let found = search.run(0, &mut residual, total)?;
    let witness = found.then(|| {
        (0..n)
            .map(|v| search.chosen.iter().map(|&c| ((cuts[c] >> v) & 1) as u8).collect())
            .collect()
    });
    Ok(HypercubeResult { embeddable: found, witness, column_cap: cap, search_nodes: search.nodes })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Classes of the transitive closure of the Djokovic-Winkler relation:
/// edges `ab` and `cd` are related when
/// `d(a,c) - d(a,d) - d(b,c) + d(b,d) != 0`. Classes are sorted by their
/// smallest edge.
pub fn dw_edge_classes(g: &Graph) -> Result<Vec<Vec<(usize, usize)>>, OracleError> {
    let m = MetricSpace::from_graph(g).map_err(|_| OracleError::Disconnected)?;
    let edges = g.edges();
    let mut parent: Vec<usize> = (0..edges.len()).collect();
    for (i, &(a, b)) in edges.iter().enumerate() {
        for (j, &(c, d)) in edges.iter().enumerate().skip(i + 1) {
            let lhs = (m.d(a, c) - m.d(a, d)) - (m.d(b, c) - m.d(b, d));
            if lhs != 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut classes: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut slot = vec![usize::MAX; edges.len()];
    for i in 0..edges.len() {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = classes.len();
            classes.push(Vec::new());
        }
        classes[slot[r]].push(edges[i]);
    }
    Ok(classes)
}
