//! Seeding helpers and seeded random metric generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metric::{MetricSpace, DEFAULT_TRIANGLE_TOL};

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a tuple of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Shape of a generated metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricFamily {
    /// Uniform points in the square `[0,10]^2`, Euclidean distances.
    Plane,
    /// Uniform points on `[0,10]`.
    Line,
    /// Shortest paths of a random connected weighted graph.
    WeightedGraph,
}

impl MetricFamily {
    pub const ALL: [MetricFamily; 3] = [MetricFamily::Plane, MetricFamily::Line, MetricFamily::WeightedGraph];
}

/// Minimum gap enforced between generated points, keeping ratios bounded.
const MIN_GAP: f64 = 0.05;

pub fn random_metric<R: Rng>(family: MetricFamily, n: usize, rng: &mut R) -> MetricSpace {
    match family {
        MetricFamily::Plane => plane_metric(n, rng),
        MetricFamily::Line => line_metric(n, rng),
        MetricFamily::WeightedGraph => weighted_graph_metric(n, rng),
    }
}

fn spread_points<R: Rng>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    while pts.len() < n {
        let cand: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.0..10.0)).collect();
        let far = pts.iter().all(|q| {
            q.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= MIN_GAP
        });
        if far {
            pts.push(cand);
        }
    }
    pts
}

fn euclidean_from(pts: &[Vec<f64>]) -> MetricSpace {
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .collect()
        })
        .collect();
    MetricSpace::from_matrix(&rows, DEFAULT_TRIANGLE_TOL).expect("euclidean distances form a metric")
}

pub fn plane_metric<R: Rng>(n: usize, rng: &mut R) -> MetricSpace {
    euclidean_from(&spread_points(n, 2, rng))
}

pub fn line_metric<R: Rng>(n: usize, rng: &mut R) -> MetricSpace {
    euclidean_from(&spread_points(n, 1, rng))
}

/// Random spanning tree plus extra edges, weights in `[1,5)`, closed under
/// shortest paths.
pub fn weighted_graph_metric<R: Rng>(n: usize, rng: &mut R) -> MetricSpace {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let add = |d: &mut Vec<Vec<f64>>, u: usize, v: usize, w: f64| {
        if w < d[u][v] {
            d[u][v] = w;
            d[v][u] = w;
        }
    };
    for v in 1..n {
        let u = rng.gen_range(0..v);
        let w = rng.gen_range(1.0..5.0);
        add(&mut d, u, v, w);
    }
    for _ in 0..n {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            let w = rng.gen_range(1.0..5.0);
            add(&mut d, u, v, w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    MetricSpace::from_matrix(&d, DEFAULT_TRIANGLE_TOL).expect("shortest paths form a metric")
}
