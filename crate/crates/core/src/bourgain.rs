//! Randomized Bourgain embeddings built from Frechet coordinates `x -> d(x, S)`.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{check_p, GeometryError, PointSet};
use crate::metric::{distortion_stats, DistortionStats, MetricSpace};
use crate::random::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BourgainParams {
    pub repetitions_per_scale: usize,
    pub seed: u64,
    pub p: f64,
}

impl BourgainParams {
    /// `ceil(24 ln n)` repetitions per scale, at least one.
    pub fn default_for(n: usize, seed: u64, p: f64) -> Self {
        Self { repetitions_per_scale: default_repetitions(n), seed, p }
    }
}

pub fn default_repetitions(n: usize) -> usize {
    ((24.0 * (n.max(1) as f64).ln()).ceil() as usize).max(1)
}

/// Raw Frechet coordinates with the sets that produced them.
#[derive(Debug, Clone)]
pub struct FrechetCoordinates {
    /// One set per coordinate, scale-major then repetition.
    pub sets: Vec<Vec<usize>>,
    /// `values[x][c] = d(x, sets[c])`.
    pub values: Vec<Vec<f64>>,
}

fn dist_to_set(m: &MetricSpace, x: usize, set: &[usize]) -> f64 {
    set.iter().map(|&s| m.d(x, s)).fold(f64::INFINITY, f64::min)
}

/// Draws sets of size `2^t` for `t = 0..=floor(log2 n)`, `reps` per scale,
/// each from its own derived seed.
pub fn frechet_coordinates(m: &MetricSpace, reps: usize, seed: u64) -> FrechetCoordinates {
    let n = m.len();
    if n == 0 {
        return FrechetCoordinates { sets: Vec::new(), values: Vec::new() };
    }
    let scales = usize::BITS - 1 - n.leading_zeros();
    let slots: Vec<(u32, usize)> =
        (0..=scales).flat_map(|t| (0..reps).map(move |j| (t, j))).collect();
    let sets: Vec<Vec<usize>> = slots
        .par_iter()
        .map(|&(t, j)| {
            let mut rng = rng_from_seed(derive_seed(seed, &[t as u64, j as u64]));
            let mut s = sample(&mut rng, n, 1usize << t).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    let values = (0..n)
        .into_par_iter()
        .map(|x| sets.iter().map(|s| dist_to_set(m, x, s)).collect())
        .collect();
    FrechetCoordinates { sets, values }
}

/// Bourgain embedding normalized to be expanding, with its measured distortion.
pub fn bourgain_embed(
    m: &MetricSpace,
    params: &BourgainParams,
) -> Result<(PointSet, DistortionStats), GeometryError> {
    check_p(params.p)?;
    let n = m.len();
    if n <= 1 {
        return Ok((PointSet::zeros(n, 1, params.p)?, DistortionStats::TRIVIAL));
    }
    let reps = params.repetitions_per_scale.max(1);
    let mut fc = frechet_coordinates(m, reps, params.seed);

    // Points with identical images get a coordinate d(., x) that separates x
    // from everything else.
    let mut extra = Vec::new();
    for x in 0..n {
        let collides = ((x + 1)..n).any(|y| fc.values[x] == fc.values[y]);
        if collides {
            extra.push(x);
        }
    }
    for &x in &extra {
        fc.sets.push(vec![x]);
        for (y, row) in fc.values.iter_mut().enumerate() {
            row.push(m.d(y, x));
        }
    }

    let dims = fc.sets.len();
    let raw = PointSet::new(dims, fc.values.into_iter().flatten().collect(), params.p)?;
    let stats = distortion_stats(m, &raw).expect("sizes match by construction");
    let emb = raw.scaled(1.0 / stats.min_ratio);
    let normalized = DistortionStats {
        max_ratio: stats.max_ratio / stats.min_ratio,
        min_ratio: 1.0,
        distortion: stats.distortion,
    };
    Ok((emb, normalized))
}
