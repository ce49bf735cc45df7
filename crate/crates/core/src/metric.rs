//! Finite metric spaces, unweighted graphs, and distortion measurement.
//!
//! A [`MetricSpace`] is a validated, dense, row-major distance matrix. Validation
//! rejects bad input and never repairs it. Graph metrics are built from hop
//! counts, so every downstream formula sees finite distances.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PointSet;

/// Default absolute slack for the triangle inequality on unit-scale inputs.
pub const DEFAULT_TRIANGLE_TOL: f64 = 1e-9;

const SYMMETRY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("entry ({i},{j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("matrix is asymmetric at ({i},{j})")]
    Asymmetric { i: usize, j: usize },
    #[error("diagonal entry {i} is nonzero")]
    NonzeroDiagonal { i: usize },
    #[error("off-diagonal entry ({i},{j}) is not positive")]
    NonpositiveOffDiagonal { i: usize, j: usize },
    #[error("triangle inequality violated: d({i},{k}) > d({i},{j}) + d({j},{k})")]
    TriangleViolation { i: usize, j: usize, k: usize },
    #[error("graph is disconnected")]
    DisconnectedGraph,
    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("size mismatch: expected {expected} points, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("source distance between {i} and {j} is zero")]
    ZeroSourceDistance { i: usize, j: usize },
    #[error("graph edge ({u},{v}) is a self-loop")]
    SelfLoop { u: usize, v: usize },
    #[error("graph edge ({u},{v}) appears twice")]
    DuplicateEdge { u: usize, v: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

/// A finite metric on points `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    n: usize,
    dist: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl MetricSpace {
    /// Validates a square matrix as a metric.
    pub fn from_matrix(matrix: &[Vec<f64>], tol_tri: f64) -> Result<Self, MetricError> {
        let n = matrix.len();
        for (row, r) in matrix.iter().enumerate() {
            if r.len() != n {
                return Err(MetricError::NotSquare { row, len: r.len(), expected: n });
            }
        }
        let dist: Vec<f64> = matrix.iter().flatten().copied().collect();
        Self::from_row_major(n, dist, tol_tri)
    }

    /// Validates a row-major `n*n` buffer as a metric.
    pub fn from_row_major(n: usize, dist: Vec<f64>, tol_tri: f64) -> Result<Self, MetricError> {
        if dist.len() != n * n {
            return Err(MetricError::NotSquare { row: 0, len: dist.len(), expected: n * n });
        }
        let at = |i: usize, j: usize| dist[i * n + j];
        for i in 0..n {
            for j in 0..n {
                if !at(i, j).is_finite() {
                    return Err(MetricError::NonFinite { i, j });
                }
            }
        }
        for i in 0..n {
            if at(i, i) != 0.0 {
                return Err(MetricError::NonzeroDiagonal { i });
            }
            for j in (i + 1)..n {
                let (a, b) = (at(i, j), at(j, i));
                if (a - b).abs() > SYMMETRY_REL_TOL * a.abs().max(b.abs()) {
                    return Err(MetricError::Asymmetric { i, j });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && at(i, j) <= 0.0 {
                    return Err(MetricError::NonpositiveOffDiagonal { i, j });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if at(i, k) > at(i, j) + at(j, k) + tol_tri {
                        return Err(MetricError::TriangleViolation { i, j, k });
                    }
                }
            }
        }
        Ok(Self { n, dist, labels: None })
    }

    /// Hop-count shortest-path metric of a connected graph.
    pub fn from_graph(g: &Graph) -> Result<Self, MetricError> {
        let n = g.node_count();
        let mut dist = vec![0.0; n * n];
        for src in 0..n {
            let hops = g.bfs(src);
            for (dst, h) in hops.into_iter().enumerate() {
                match h {
                    Some(h) => dist[src * n + dst] = h as f64,
                    None => return Err(MetricError::DisconnectedGraph),
                }
            }
        }
        Ok(Self { n, dist, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, MetricError> {
        if labels.len() != self.n {
            return Err(MetricError::SizeMismatch { expected: self.n, got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Largest pairwise distance (0 for fewer than two points).
    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Removes the points in `removed` and returns the metric on the
    /// survivors together with the surviving original indices, in order.
    pub fn restrict(&self, removed: &[usize]) -> Result<(MetricSpace, Vec<usize>), MetricError> {
        let mut keep = vec![true; self.n];
        for &r in removed {
            if r >= self.n {
                return Err(MetricError::IndexOutOfRange { index: r, n: self.n });
            }
            keep[r] = false;
        }
        let survivors: Vec<usize> = (0..self.n).filter(|&i| keep[i]).collect();
        Ok((self.sub_metric(&survivors), survivors))
    }

    /// Metric induced on `points` (in the given order). Indices must be valid
    /// and distinct.
    pub fn induced(&self, points: &[usize]) -> Result<MetricSpace, MetricError> {
        let mut seen = vec![false; self.n];
        for &p in points {
            if p >= self.n {
                return Err(MetricError::IndexOutOfRange { index: p, n: self.n });
            }
            if seen[p] {
                return Err(MetricError::Parse(format!("point {p} listed twice")));
            }
            seen[p] = true;
        }
        Ok(self.sub_metric(points))
    }

    fn sub_metric(&self, points: &[usize]) -> MetricSpace {
        let m = points.len();
        let mut dist = Vec::with_capacity(m * m);
        for &i in points {
            for &j in points {
                dist.push(self.d(i, j));
            }
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| points.iter().map(|&i| l[i].clone()).collect());
        MetricSpace { n: m, dist, labels }
    }

    /// Multiplies every distance by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> MetricSpace {
        MetricSpace {
            n: self.n,
            dist: self.dist.iter().map(|d| d * factor).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Parses the text format: first line `n`, then `n` rows of reals.
    pub fn parse_text(text: &str, tol_tri: f64) -> Result<Self, MetricError> {
        let mut tokens = text.split_whitespace();
        let n: usize = tokens
            .next()
            .ok_or_else(|| MetricError::Parse("missing point count".into()))?
            .parse()
            .map_err(|e| MetricError::Parse(format!("bad point count: {e}")))?;
        let mut dist = Vec::with_capacity(n * n);
        for idx in 0..n * n {
            let tok = tokens.next().ok_or_else(|| {
                MetricError::Parse(format!("expected {} entries, found {idx}", n * n))
            })?;
            dist.push(
                tok.parse::<f64>()
                    .map_err(|e| MetricError::Parse(format!("entry {idx}: {e}")))?,
            );
        }
        if tokens.next().is_some() {
            return Err(MetricError::Parse("trailing tokens after matrix".into()));
        }
        Self::from_row_major(n, dist, tol_tri)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Undirected simple graph with unit edge lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Edges with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphJson { nodes: self.n, edges: self.edges.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = GraphJson::deserialize(d)?;
        Graph::new(raw.nodes, &raw.edges).map_err(serde::de::Error::custom)
    }
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, MetricError> {
        let mut norm = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(MetricError::IndexOutOfRange { index: u.max(v), n });
            }
            if u == v {
                return Err(MetricError::SelfLoop { u, v });
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        for w in norm.windows(2) {
            if w[0] == w[1] {
                return Err(MetricError::DuplicateEdge { u: w[0].0, v: w[0].1 });
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &norm {
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self { n, edges: norm, adj })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
        Self::new(n, &edges).expect("complete graph is simple")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Self::new(n, &edges).expect("path is simple")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 nodes");
        let mut edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        edges.push((0, n - 1));
        Self::new(n, &edges).expect("cycle is simple")
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        Self::new(leaves + 1, &edges).expect("star is simple")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    /// Hop distances from `src`; `None` marks unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut hops = vec![None; self.n];
        let mut queue = VecDeque::new();
        hops[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let h = hops[u].unwrap_or(0);
            for &v in &self.adj[u] {
                if hops[v].is_none() {
                    hops[v] = Some(h + 1);
                    queue.push_back(v);
                }
            }
        }
        hops
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs(0).iter().all(Option::is_some)
    }

    pub fn is_bipartite(&self) -> bool {
        let mut color: Vec<Option<bool>> = vec![None; self.n];
        for s in 0..self.n {
            if color[s].is_some() {
                continue;
            }
            color[s] = Some(false);
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                let cu = color[u].unwrap_or(false);
                for &v in &self.adj[u] {
                    match color[v] {
                        None => {
                            color[v] = Some(!cu);
                            queue.push_back(v);
                        }
                        Some(cv) if cv == cu => return false,
                        _ => {}
                    }
                }
            }
        }
        true
    }

    /// Parses the text format: first line `n m`, then `m` lines `u v`.
    pub fn parse_text(text: &str) -> Result<Self, MetricError> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<usize, MetricError> {
            tokens
                .next()
                .ok_or_else(|| MetricError::Parse(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| MetricError::Parse(format!("bad {what}: {e}")))
        };
        let n = next("node count")?;
        let m = next("edge count")?;
        let mut edges = Vec::with_capacity(m);
        for e in 0..m {
            let u = next(&format!("edge {e} endpoint"))?;
            let v = next(&format!("edge {e} endpoint"))?;
            edges.push((u, v));
        }
        if next("trailing").is_ok() {
            return Err(MetricError::Parse("trailing tokens after edge list".into()));
        }
        Self::new(n, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for (u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// Ratio statistics of image distance over source distance across all pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionStats {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub distortion: f64,
}

impl DistortionStats {
    /// Convention for fewer than two points.
    pub const TRIVIAL: DistortionStats =
        DistortionStats { max_ratio: 1.0, min_ratio: 1.0, distortion: 1.0 };
}

impl fmt::Display for DistortionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "distortion {:.6} (ratios {:.6}..{:.6})",
            self.distortion, self.min_ratio, self.max_ratio
        )
    }
}

/// Raw pairwise ratios; no normalization is applied. Fewer than two points
/// yields [`DistortionStats::TRIVIAL`].
pub fn distortion_stats(m: &MetricSpace, e: &PointSet) -> Result<DistortionStats, MetricError> {
    if e.len() != m.len() {
        return Err(MetricError::SizeMismatch { expected: m.len(), got: e.len() });
    }
    if m.len() < 2 {
        return Ok(DistortionStats::TRIVIAL);
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for i in 0..m.len() {
        for j in (i + 1)..m.len() {
            let d = m.d(i, j);
            if d <= 0.0 {
                return Err(MetricError::ZeroSourceDistance { i, j });
            }
            let r = e.distance(i, j) / d;
            max_ratio = max_ratio.max(r);
            min_ratio = min_ratio.min(r);
        }
    }
    let distortion = if min_ratio > 0.0 { max_ratio / min_ratio } else { f64::INFINITY };
    Ok(DistortionStats { max_ratio, min_ratio, distortion })
}

/// Checks that `e` (one point per survivor of `X \ outliers`, in increasing
/// index order) satisfies `d <= |e(x)-e(y)| <= c*d` for every surviving pair,
/// with relative slack `tol`.
pub fn verify_outlier_embedding(
    m: &MetricSpace,
    outliers: &[usize],
    e: &PointSet,
    c: f64,
    tol: f64,
) -> Result<bool, MetricError> {
    let (sub, survivors) = m.restrict(outliers)?;
    if e.len() != survivors.len() {
        return Err(MetricError::SizeMismatch { expected: survivors.len(), got: e.len() });
    }
    for i in 0..sub.len() {
        for j in (i + 1)..sub.len() {
            let d = sub.d(i, j);
            let img = e.distance(i, j);
            if img < d * (1.0 - tol) || img > c * d * (1.0 + tol) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
