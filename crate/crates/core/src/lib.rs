//! Outlier embeddings of finite metric spaces into l_p.
//!
//! The crate covers:
//! - [`metric`]: validated finite metrics, graph metrics and distortion checks;
//! - [`geometry`]: l_p points, the Schoenberg test and Gram factorization;
//! - [`bourgain`]: randomized Frechet-coordinate embeddings;
//! - [`composition`]: nested composition of a subset embedding with a global one;
//! - [`sdp`]: the outlier SDP, its solver, rounding and the k-search loop;
//! - [`oracle`]: exhaustive ground truth on small instances;
//! - [`gadgets`]: the hardness gadget graphs;
//! - [`cli`]: the command-line driver.

pub mod bourgain;
pub mod cli;
pub mod composition;
pub mod gadgets;
pub mod geometry;
pub mod metric;
pub mod oracle;
pub mod random;
pub mod sdp;

pub use geometry::{PointSet, SymmetricMatrix};
pub use metric::{DistortionStats, Graph, MetricSpace};

/// Harmonic number `H_k`; `H_0 = 0`.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}
