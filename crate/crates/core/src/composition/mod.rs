//! Nested composition: combine an embedding of a subset `S` with a coarser
//! embedding of all of `X`, keeping the distortion of `S` intact.
//!
//! One random draw picks a scale `b` in `[2, 2 + tau]` and an order `pi` of the
//! outliers `K = X \ S`. Walking `pi`, the i-th outlier becomes the center `u_i`
//! and grabs every still-unassigned outlier `v` with
//! `d(v, u_i) <= b * d(v, gamma(v))`, where `gamma(v)` is the nearest point of `S`.
//! The output concatenates a block built from `alpha_S` with one `alpha_X`
//! block per cluster.

pub mod bounds;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bourgain::{bourgain_embed, BourgainParams};
use crate::geometry::{check_p, GeometryError, PointSet};
use crate::metric::MetricSpace;
use crate::random::{derive_seed, rng_from_seed};

pub use bounds::{
    expansion_bound, expansion_bound_exact, weak_factor, BoundError, BoundQuery, Coefficients,
    PairCase,
};

/// Default relative slack when checking that inputs are expanding.
pub const DEFAULT_EXPANDING_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositionError {
    #[error("subset S is empty")]
    EmptyS,
    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("point {0} listed twice in S")]
    DuplicateIndex(usize),
    #[error("{what}: expected {expected} points, got {got}")]
    SizeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("{what} uses p={got}, expected p={expected}")]
    PMismatch { what: &'static str, expected: f64, got: f64 },
    #[error("tau must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("{what} contracts pair ({i},{j}) to ratio {ratio}")]
    NotExpanding { what: &'static str, i: usize, j: usize, ratio: f64 },
    #[error("c_S = {c_s} exceeds c_X = {c_x}")]
    CsExceedsCx { c_s: f64, c_x: f64 },
    #[error("b = {b} outside [2, {max}]")]
    InvalidB { b: f64, max: f64 },
    #[error("pi is not a permutation of the outliers")]
    InvalidPermutation,
    #[error("transcript does not match the inputs: {0}")]
    InconsistentTranscript(String),
    #[error("cluster embedder returned a non-expanding embedding for cluster {cluster}")]
    CallbackNotExpanding { cluster: usize },
    #[error("sample count must be positive")]
    ZeroSamples,
    #[error("pair ({0},{1}) is not a pair of distinct points")]
    InvalidPair(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `gamma(u)` = nearest point of `S` (lowest index on ties) for every point;
/// the identity on `S`.
pub fn nearest_anchors(m: &MetricSpace, s: &[usize]) -> Result<Vec<usize>, CompositionError> {
    if s.is_empty() {
        return Err(CompositionError::EmptyS);
    }
    let n = m.len();
    let mut in_s = vec![false; n];
    for &v in s {
        if v >= n {
            return Err(CompositionError::IndexOutOfRange { index: v, n });
        }
        in_s[v] = true;
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    Ok((0..n)
        .map(|u| {
            if in_s[u] {
                return u;
            }
            let mut best = sorted[0];
            for &v in &sorted[1..] {
                if m.d(u, v) < m.d(u, best) {
                    best = v;
                }
            }
            best
        })
        .collect())
}

/// Checks an embedding is expanding on `points` (indices into `m` and rows
/// of `e`, in the same order) and returns its largest ratio.
fn expansion_of(
    what: &'static str,
    m: &MetricSpace,
    points: &[usize],
    e: &PointSet,
    tol: f64,
) -> Result<f64, CompositionError> {
    let mut worst = 1.0f64;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let d = m.d(points[a], points[b]);
            let ratio = e.distance(a, b) / d;
            if ratio < 1.0 - tol {
                return Err(CompositionError::NotExpanding { what, i: points[a], j: points[b], ratio });
            }
            worst = worst.max(ratio);
        }
    }
    Ok(worst)
}

/// The parts of the construction that depend only on `(X, S, alpha_S, tau)`.
#[derive(Debug, Clone)]
pub struct AnchoredSubset {
    m: MetricSpace,
    s: Vec<usize>,
    outliers: Vec<usize>,
    s_pos: Vec<Option<usize>>,
    gamma: Vec<usize>,
    p: f64,
    tau: f64,
    alpha_s: PointSet,
    c_s: f64,
    dist_s: Vec<f64>,
}

impl AnchoredSubset {
    /// `alpha_s` row `i` embeds point `s[i]`.
    pub fn new(
        m: &MetricSpace,
        s: &[usize],
        p: f64,
        alpha_s: &PointSet,
        tau: f64,
        tol: f64,
    ) -> Result<Self, CompositionError> {
        check_p(p)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CompositionError::InvalidTau(tau));
        }
        let gamma = nearest_anchors(m, s)?;
        let n = m.len();
        let mut s_pos = vec![None; n];
        for (i, &v) in s.iter().enumerate() {
            if s_pos[v].is_some() {
                return Err(CompositionError::DuplicateIndex(v));
            }
            s_pos[v] = Some(i);
        }
        if alpha_s.len() != s.len() {
            return Err(CompositionError::SizeMismatch { what: "alpha_S", expected: s.len(), got: alpha_s.len() });
        }
        if alpha_s.p() != p {
            return Err(CompositionError::PMismatch { what: "alpha_S", expected: p, got: alpha_s.p() });
        }
        let c_s = expansion_of("alpha_S", m, s, alpha_s, tol)?;
        let ns = s.len();
        let mut dist_s = vec![0.0; ns * ns];
        for a in 0..ns {
            for b in 0..ns {
                dist_s[a * ns + b] = alpha_s.distance(a, b);
            }
        }
        let outliers = (0..n).filter(|&v| s_pos[v].is_none()).collect();
        Ok(Self {
            m: m.clone(),
            s: s.to_vec(),
            outliers,
            s_pos,
            gamma,
            p,
            tau,
            alpha_s: alpha_s.clone(),
            c_s,
            dist_s,
        })
    }

    pub fn metric(&self) -> &MetricSpace {
        &self.m
    }

    pub fn s(&self) -> &[usize] {
        &self.s
    }

    /// `K = X \ S`, ascending.
    pub fn outliers(&self) -> &[usize] {
        &self.outliers
    }

    pub fn k(&self) -> usize {
        self.outliers.len()
    }

    pub fn in_s(&self, v: usize) -> bool {
        self.s_pos[v].is_some()
    }

    pub fn gamma(&self) -> &[usize] {
        &self.gamma
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha_s(&self) -> &PointSet {
        &self.alpha_s
    }

    /// Largest expansion of `alpha_S` over pairs of `S`.
    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    /// Distance from `v` to its anchor.
    pub fn anchor_distance(&self, v: usize) -> f64 {
        self.m.d(v, self.gamma[v])
    }

    fn alpha_s_dist(&self, u: usize, v: usize) -> f64 {
        let ns = self.s.len();
        let (a, b) = (self.s_pos[u].unwrap_or(0), self.s_pos[v].unwrap_or(0));
        self.dist_s[a * ns + b]
    }

    fn greedy_clusters(&self, b: f64, pi: &[usize]) -> Vec<Cluster> {
        let n = self.m.len();
        let mut assigned = vec![false; n];
        let mut clusters = Vec::new();
        for &u in pi {
            let members: Vec<usize> = self
                .outliers
                .iter()
                .copied()
                .filter(|&v| !assigned[v] && self.m.d(v, u) <= b * self.anchor_distance(v))
                .collect();
            if members.is_empty() {
                continue;
            }
            for &v in &members {
                assigned[v] = true;
            }
            clusters.push(Cluster { center: u, members });
        }
        clusters
    }

    /// Runs the greedy cluster loop for a fixed `b` and `pi`.
    pub fn transcript_from(&self, b: f64, pi: &[usize]) -> Result<CompositionTranscript, CompositionError> {
        let max = 2.0 + self.tau;
        if !(2.0..=max).contains(&b) {
            return Err(CompositionError::InvalidB { b, max });
        }
        let mut sorted = pi.to_vec();
        sorted.sort_unstable();
        if sorted != self.outliers {
            return Err(CompositionError::InvalidPermutation);
        }
        Ok(CompositionTranscript {
            b,
            pi: pi.to_vec(),
            clusters: self.greedy_clusters(b, pi),
            gamma: self.gamma.clone(),
        })
    }

    /// `b = 2 + tau * U[0,1)`, `pi` by Fisher-Yates.
    pub fn sample_transcript<R: Rng + ?Sized>(&self, rng: &mut R) -> CompositionTranscript {
        let b = 2.0 + self.tau * rng.gen::<f64>();
        let mut pi = self.outliers.clone();
        pi.shuffle(rng);
        let clusters = self.greedy_clusters(b, &pi);
        CompositionTranscript { b, pi, clusters, gamma: self.gamma.clone() }
    }

    fn check_transcript(&self, t: &CompositionTranscript) -> Result<(), CompositionError> {
        if t.gamma != self.gamma {
            return Err(CompositionError::InconsistentTranscript("anchor map differs".into()));
        }
        let replay = self
            .transcript_from(t.b, &t.pi)
            .map_err(|e| CompositionError::InconsistentTranscript(e.to_string()))?;
        if replay.clusters != t.clusters {
            return Err(CompositionError::InconsistentTranscript("clusters differ from replay".into()));
        }
        Ok(())
    }

    /// Row of the `alpha'` block for `v`.
    fn prime_source(&self, t: &CompositionTranscript, cluster_of: &[Option<usize>], v: usize) -> usize {
        match cluster_of[v] {
            None => v,
            Some(i) => self.gamma[t.clusters[i].center],
        }
    }

    /// Split-probability cap for an outlier pair: the sum over outliers `u`
    /// with `beta_u <= tau + 2` of `(2(tau+3)/tau) * d(x,y) / d(x_u, gamma(x_u))
    /// / index(u)`, where `beta_u = min(d(x,u)/d(x,gamma(x)), d(y,u)/d(y,gamma(y)))`,
    /// `x_u` is the endpoint attaining it, and `index` ranks outliers by
    /// increasing `beta_u` (lower point index on ties).
    pub fn split_probability_bound(&self, x: usize, y: usize) -> f64 {
        let (ax, ay) = (self.anchor_distance(x), self.anchor_distance(y));
        let mut ranked: Vec<(f64, f64, usize)> = self
            .outliers
            .iter()
            .map(|&u| {
                let (bx, by) = (self.m.d(x, u) / ax, self.m.d(y, u) / ay);
                if bx <= by {
                    (bx, ax, u)
                } else {
                    (by, ay, u)
                }
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let w = 2.0 * (self.tau + 3.0) / self.tau;
        let dxy = self.m.d(x, y);
        ranked
            .iter()
            .enumerate()
            .filter(|(_, (beta, _, _))| *beta <= self.tau + 2.0)
            .map(|(r, (_, a, _))| w * dxy / a / (r + 1) as f64)
            .sum()
    }
}

/// Inputs of the composition: a metric, the subset `S`, `alpha_S` on `S` and
/// `alpha_X` on all of `X`, both expanding.
#[derive(Debug, Clone)]
pub struct CompositionInputs {
    base: AnchoredSubset,
    alpha_x: PointSet,
    c_x: f64,
    dist_x: Vec<f64>,
}

impl std::ops::Deref for CompositionInputs {
    type Target = AnchoredSubset;
    fn deref(&self) -> &AnchoredSubset {
        &self.base
    }
}

impl CompositionInputs {
    pub fn new(
        m: &MetricSpace,
        s: &[usize],
        p: f64,
        alpha_s: &PointSet,
        alpha_x: &PointSet,
        tau: f64,
        tol: f64,
    ) -> Result<Self, CompositionError> {
        let base = AnchoredSubset::new(m, s, p, alpha_s, tau, tol)?;
        let n = m.len();
        if alpha_x.len() != n {
            return Err(CompositionError::SizeMismatch { what: "alpha_X", expected: n, got: alpha_x.len() });
        }
        if alpha_x.p() != p {
            return Err(CompositionError::PMismatch { what: "alpha_X", expected: p, got: alpha_x.p() });
        }
        let all: Vec<usize> = (0..n).collect();
        let c_x = expansion_of("alpha_X", m, &all, alpha_x, tol)?;
        if base.c_s > c_x * (1.0 + tol) {
            return Err(CompositionError::CsExceedsCx { c_s: base.c_s, c_x });
        }
        let mut dist_x = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                dist_x[a * n + b] = alpha_x.distance(a, b);
            }
        }
        Ok(Self { base, alpha_x: alpha_x.clone(), c_x, dist_x })
    }

    pub fn base(&self) -> &AnchoredSubset {
        &self.base
    }

    pub fn alpha_x(&self) -> &PointSet {
        &self.alpha_x
    }

    /// Largest expansion of `alpha_X` over all pairs.
    pub fn c_x(&self) -> f64 {
        self.c_x
    }

    fn alpha_x_dist(&self, u: usize, v: usize) -> f64 {
        self.dist_x[u * self.m.len() + v]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: usize,
    /// Ascending.
    pub members: Vec<usize>,
}

/// One draw of the randomized construction. Clusters that came out empty are
/// omitted; they would only contribute constant blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionTranscript {
    pub b: f64,
    pub pi: Vec<usize>,
    pub clusters: Vec<Cluster>,
    /// Anchor of every point (identity on `S`).
    pub gamma: Vec<usize>,
}

impl CompositionTranscript {
    pub fn cluster_of(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (i, c) in self.clusters.iter().enumerate() {
            for &v in &c.members {
                out[v] = Some(i);
            }
        }
        out
    }

    /// Both points are outliers placed in different clusters.
    pub fn splits(&self, x: usize, y: usize) -> bool {
        let n = self.gamma.len();
        let of = self.cluster_of(n);
        matches!((of[x], of[y]), (Some(a), Some(b)) if a != b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockKind {
    Prime { sample: usize },
    Cluster { sample: usize, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub offset: usize,
    pub dims: usize,
    pub weight: f64,
}

/// Composed point set with its block layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedEmbedding {
    pub points: PointSet,
    pub blocks: Vec<Block>,
}

struct Assembler {
    n: usize,
    rows: Vec<Vec<f64>>,
    blocks: Vec<Block>,
    offset: usize,
}

impl Assembler {
    fn new(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n], blocks: Vec::new(), offset: 0 }
    }

    /// Appends a block whose row for point `v` is `source.point(pick(v))`.
    fn push(&mut self, kind: BlockKind, source: &PointSet, weight: f64, pick: impl Fn(usize) -> usize) {
        let dims = source.dims();
        for v in 0..self.n {
            self.rows[v].extend(source.point(pick(v)).iter().map(|c| c * weight));
        }
        self.blocks.push(Block { kind, offset: self.offset, dims, weight });
        self.offset += dims;
    }

    fn finish(self, p: f64) -> Result<ComposedEmbedding, CompositionError> {
        let dims = self.offset.max(1);
        let coords = if self.offset == 0 {
            vec![0.0; self.n]
        } else {
            self.rows.into_iter().flatten().collect()
        };
        Ok(ComposedEmbedding { points: PointSet::new(dims, coords, p)?, blocks: self.blocks })
    }
}

fn push_once(
    asm: &mut Assembler,
    inputs: &CompositionInputs,
    t: &CompositionTranscript,
    sample: usize,
    w_prime: f64,
    w_cluster: f64,
) {
    let of = t.cluster_of(inputs.m.len());
    asm.push(BlockKind::Prime { sample }, &inputs.alpha_s, w_prime, |v| {
        inputs.s_pos[inputs.prime_source(t, &of, v)].expect("prime source lies in S")
    });
    for (i, c) in t.clusters.iter().enumerate() {
        let anchor = inputs.gamma[c.center];
        asm.push(BlockKind::Cluster { sample, index: i }, &inputs.alpha_x, w_cluster, |v| {
            if of[v] == Some(i) {
                v
            } else {
                anchor
            }
        });
    }
}

/// Builds the composed embedding for one transcript.
pub fn compose_once(
    inputs: &CompositionInputs,
    t: &CompositionTranscript,
) -> Result<ComposedEmbedding, CompositionError> {
    inputs.check_transcript(t)?;
    let mut asm = Assembler::new(inputs.m.len());
    push_once(&mut asm, inputs, t, 0, 1.0, 1.0);
    asm.finish(inputs.p)
}

/// Distance between `x` and `y` in `compose_once(inputs, t)`, computed from
/// cached `alpha_S`/`alpha_X` distances without building the embedding. Only
/// the clusters of `x` and `y` contribute.
pub fn pair_distance(inputs: &CompositionInputs, t: &CompositionTranscript, x: usize, y: usize) -> f64 {
    if x == y {
        return 0.0;
    }
    let cluster_of = |v: usize| t.clusters.iter().position(|c| c.members.binary_search(&v).is_ok());
    let (cx, cy) = (cluster_of(x), cluster_of(y));
    let source = |v: usize, c: Option<usize>| match c {
        None => v,
        Some(i) => inputs.gamma[t.clusters[i].center],
    };
    let p = inputs.p;
    let mut acc = inputs.alpha_s_dist(source(x, cx), source(y, cy)).powf(p);
    match (cx, cy) {
        (Some(a), Some(b)) if a == b => acc += inputs.alpha_x_dist(x, y).powf(p),
        _ => {
            if let Some(a) = cx {
                acc += inputs.alpha_x_dist(x, inputs.gamma[t.clusters[a].center]).powf(p);
            }
            if let Some(b) = cy {
                acc += inputs.alpha_x_dist(y, inputs.gamma[t.clusters[b].center]).powf(p);
            }
        }
    }
    acc.powf(1.0 / p)
}

/// Table-1 case of a pair under transcript `t`; `kappa` separates (d) from (e).
pub fn classify_pair(
    inputs: &AnchoredSubset,
    t: &CompositionTranscript,
    x: usize,
    y: usize,
    kappa: f64,
) -> PairCase {
    match (inputs.in_s(x), inputs.in_s(y)) {
        (true, true) => PairCase::A,
        (true, false) | (false, true) => PairCase::C,
        (false, false) => {
            let of = t.cluster_of(inputs.m.len());
            if of[x] == of[y] {
                PairCase::B
            } else {
                let dxy = inputs.m.d(x, y);
                if inputs.anchor_distance(x) <= kappa * dxy || inputs.anchor_distance(y) <= kappa * dxy {
                    PairCase::D
                } else {
                    PairCase::E
                }
            }
        }
    }
}

/// Result of averaging several draws into one embedding.
#[derive(Debug, Clone)]
pub struct DeterministicComposition {
    pub embedding: ComposedEmbedding,
    pub transcripts: Vec<CompositionTranscript>,
}

/// Concatenates `m_samples` independent draws. Sample `j` contributes its own
/// `alpha'` block weighted `m^(-1/p)` and its cluster blocks weighted `1/m`.
///
/// Pairs of `S` keep their `alpha_S` distance exactly. For `p = 1` every
/// distance is the empirical mean of the per-draw distances; for `p > 1` it
/// is at most twice the empirical `E[D^p]^(1/p)`.
pub fn compose_deterministic<R: Rng + ?Sized>(
    inputs: &CompositionInputs,
    m_samples: usize,
    rng: &mut R,
) -> Result<DeterministicComposition, CompositionError> {
    if m_samples == 0 {
        return Err(CompositionError::ZeroSamples);
    }
    let mf = m_samples as f64;
    let (w_prime, w_cluster) = (mf.powf(-1.0 / inputs.p), 1.0 / mf);
    let transcripts: Vec<_> = (0..m_samples).map(|_| inputs.sample_transcript(rng)).collect();
    let mut asm = Assembler::new(inputs.m.len());
    for (j, t) in transcripts.iter().enumerate() {
        push_once(&mut asm, inputs, t, j, w_prime, w_cluster);
    }
    Ok(DeterministicComposition { embedding: asm.finish(inputs.p)?, transcripts })
}

/// Draws `count` transcripts from independent per-index streams of `base`.
pub fn sample_transcripts(inputs: &AnchoredSubset, count: usize, base: u64) -> Vec<CompositionTranscript> {
    (0..count)
        .into_par_iter()
        .map(|i| inputs.sample_transcript(&mut rng_from_seed(derive_seed(base, &[i as u64]))))
        .collect()
}

/// Monte Carlo mean and standard error of the composed distance of `(x, y)`.
pub fn estimate_expected_expansion<R: Rng + ?Sized>(
    inputs: &CompositionInputs,
    pair: (usize, usize),
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64), CompositionError> {
    let (x, y) = pair;
    let n = inputs.m.len();
    if x == y || x >= n || y >= n {
        return Err(CompositionError::InvalidPair(x, y));
    }
    if trials == 0 {
        return Err(CompositionError::ZeroSamples);
    }
    let base: u64 = rng.gen();
    let samples: Vec<f64> = sample_transcripts(inputs, trials, base)
        .iter()
        .map(|t| pair_distance(inputs, t, x, y))
        .collect();
    Ok(mean_stderr(&samples))
}

/// Sample mean and its standard error.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Output of [`compose_strong`].
#[derive(Debug, Clone)]
pub struct StrongComposition {
    pub embedding: ComposedEmbedding,
    pub transcript: CompositionTranscript,
    /// Largest expansion of each cluster embedding.
    pub cluster_distortions: Vec<f64>,
}

/// Composition without a global `alpha_X`: each cluster block comes from
/// `embed_cluster(sub_metric, points)`, an expanding embedding of
/// `K_i ∪ {gamma(u_i)}` whose rows follow `points` (ascending).
pub fn compose_strong<R, F>(
    inputs: &AnchoredSubset,
    mut embed_cluster: F,
    rng: &mut R,
) -> Result<StrongComposition, CompositionError>
where
    R: Rng + ?Sized,
    F: FnMut(&MetricSpace, &[usize]) -> Result<PointSet, CompositionError>,
{
    let t = inputs.sample_transcript(rng);
    let n = inputs.m.len();
    let of = t.cluster_of(n);
    let mut asm = Assembler::new(n);
    asm.push(BlockKind::Prime { sample: 0 }, &inputs.alpha_s, 1.0, |v| {
        inputs.s_pos[inputs.prime_source(&t, &of, v)].expect("prime source lies in S")
    });
    let mut cluster_distortions = Vec::with_capacity(t.clusters.len());
    for (i, c) in t.clusters.iter().enumerate() {
        let anchor = inputs.gamma[c.center];
        let mut points = c.members.clone();
        points.push(anchor);
        points.sort_unstable();
        let sub = inputs.m.induced(&points).expect("cluster points are valid and distinct");
        let emb = embed_cluster(&sub, &points)?;
        if emb.len() != points.len() {
            return Err(CompositionError::SizeMismatch { what: "cluster embedding", expected: points.len(), got: emb.len() });
        }
        if emb.p() != inputs.p {
            return Err(CompositionError::PMismatch { what: "cluster embedding", expected: inputs.p, got: emb.p() });
        }
        let local: Vec<usize> = (0..points.len()).collect();
        let worst = expansion_of("cluster embedding", &sub, &local, &emb, DEFAULT_EXPANDING_TOL)
            .map_err(|_| CompositionError::CallbackNotExpanding { cluster: i })?;
        cluster_distortions.push(worst);
        let pos = |v: usize| points.binary_search(&v).expect("point in cluster");
        let anchor_row = pos(anchor);
        asm.push(BlockKind::Cluster { sample: 0, index: i }, &emb, 1.0, |v| {
            if of[v] == Some(i) {
                pos(v)
            } else {
                anchor_row
            }
        });
    }
    Ok(StrongComposition { embedding: asm.finish(inputs.p)?, transcript: t, cluster_distortions })
}

/// Default cluster embedder: a Bourgain run per cluster, seeded from `seed`
/// and the cluster's point list.
pub fn bourgain_cluster_embedder(
    p: f64,
    seed: u64,
) -> impl FnMut(&MetricSpace, &[usize]) -> Result<PointSet, CompositionError> {
    move |sub, points| {
        let ids: Vec<u64> = points.iter().map(|&v| v as u64).collect();
        let params = BourgainParams::default_for(sub.len(), derive_seed(seed, &ids), p);
        Ok(bourgain_embed(sub, &params)?.0)
    }
}

/// Inputs with `alpha_X` from a Bourgain run on `X` and `alpha_S` its
/// restriction to `S`, rescaled to be expanding there. This keeps
/// `c_S <= c_X`.
pub fn bourgain_inputs(
    m: &MetricSpace,
    s: &[usize],
    p: f64,
    tau: f64,
    seed: u64,
) -> Result<CompositionInputs, CompositionError> {
    nearest_anchors(m, s)?;
    let sub = m.induced(s).map_err(|_| {
        let mut sorted = s.to_vec();
        sorted.sort_unstable();
        let dup = sorted.windows(2).find(|w| w[0] == w[1]).map_or(s[0], |w| w[0]);
        CompositionError::DuplicateIndex(dup)
    })?;
    let (alpha_x, _) = bourgain_embed(m, &BourgainParams::default_for(m.len(), seed, p))?;
    let restricted = alpha_x.select(s);
    let min_ratio = if s.len() < 2 {
        1.0
    } else {
        crate::metric::distortion_stats(&sub, &restricted).expect("sizes match").min_ratio
    };
    let alpha_s = restricted.scaled(1.0 / min_ratio);
    CompositionInputs::new(m, s, p, &alpha_s, &alpha_x, tau, DEFAULT_EXPANDING_TOL)
}

#[cfg(test)]
mod tests;
