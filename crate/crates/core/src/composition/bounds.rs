//! Expansion multipliers for each pair case, generic over the number type so
//! the same formulas run in `f64` and in exact rationals.

use num_rational::Ratio;
use num_traits::{Num, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pair cases of the expansion analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairCase {
    /// Both points in S.
    A,
    /// Both outliers, same cluster.
    B,
    /// Exactly one point in S.
    C,
    /// Both outliers in different clusters, one of them close to its anchor
    /// relative to the pair distance.
    D,
    /// Both outliers far from their anchors relative to the pair distance.
    E,
}

impl PairCase {
    pub const ALL: [PairCase; 5] = [PairCase::A, PairCase::B, PairCase::C, PairCase::D, PairCase::E];

    pub fn parse(s: &str) -> Result<Self, BoundError> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(PairCase::A),
            "b" => Ok(PairCase::B),
            "c" => Ok(PairCase::C),
            "d" => Ok(PairCase::D),
            "e" => Ok(PairCase::E),
            other => Err(BoundError::InvalidCase(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("unknown case {0:?}")]
    InvalidCase(String),
    #[error("kappa {0} out of range")]
    KappaOutOfRange(f64),
    #[error("tau must be positive, got {0}")]
    InvalidTau(f64),
    #[error("distortions must satisfy 1 <= c_S <= c_X, got c_S={c_s}, c_X={c_x}")]
    InvalidDistortion { c_s: f64, c_x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub case: PairCase,
    pub c_s: f64,
    pub c_x: f64,
    pub k: usize,
    pub tau: f64,
    pub kappa: f64,
}

impl BoundQuery {
    /// `tau = 2`, `kappa = 2`.
    pub fn standard(case: PairCase, c_s: f64, c_x: f64, k: usize) -> Self {
        Self { case, c_s, c_x, k, tau: 2.0, kappa: 2.0 }
    }
}

/// Multiplier `s * c_S + x * c_X` of `d(x,y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coefficients<T> {
    pub s: T,
    pub x: T,
}

fn int<T: Num + Clone>(v: u32) -> T {
    let mut acc = T::zero();
    for _ in 0..v {
        acc = acc + T::one();
    }
    acc
}

pub fn harmonic_t<T: Num + Clone>(k: usize) -> T {
    let mut acc = T::zero();
    let mut i = T::zero();
    for _ in 0..k {
        i = i + T::one();
        acc = acc + T::one() / i.clone();
    }
    acc
}

/// Coefficients for general `tau` and `kappa`.
///
/// Cases (a)-(c) ignore `kappa`; (d) needs `kappa > 0`; (e) needs `kappa > 1`
/// and scales with `H_k`.
pub fn coefficients<T: Num + Clone + PartialOrd>(
    case: PairCase,
    k: usize,
    tau: T,
    kappa: T,
) -> Option<Coefficients<T>> {
    let one = T::one();
    let zero = T::zero();
    if tau <= zero {
        return None;
    }
    Some(match case {
        PairCase::A => Coefficients { s: one, x: zero },
        PairCase::B => Coefficients { s: zero, x: one },
        PairCase::C => Coefficients {
            s: tau.clone() + int(5),
            x: int::<T>(2) * tau + int(5),
        },
        PairCase::D => {
            if kappa <= zero {
                return None;
            }
            Coefficients {
                s: (int::<T>(2) * tau.clone() + int(8)) * kappa.clone() + tau.clone() + int(5),
                x: (int::<T>(4) * tau.clone() + int(10)) * kappa + int::<T>(2) * tau + int(5),
            }
        }
        PairCase::E => {
            if kappa <= one {
                return None;
            }
            let h: T = harmonic_t(k);
            let lead = (tau.clone() + int(3)) / ((kappa.clone() - one.clone()) * tau.clone()) * h;
            let s = lead.clone()
                * (kappa.clone() * (tau.clone() + int(3))
                    + (kappa.clone() + one.clone()) * (tau.clone() + int(5)));
            let x = one.clone()
                + lead * (int::<T>(2) * tau + int(5)) * (int::<T>(2) * kappa + one);
            Coefficients { s, x }
        }
    })
}

/// Exact rational coefficients.
pub fn expansion_bound_exact(
    case: PairCase,
    k: usize,
    tau: Ratio<i128>,
    kappa: Ratio<i128>,
) -> Result<Coefficients<Ratio<i128>>, BoundError> {
    let tau_f = *tau.numer() as f64 / *tau.denom() as f64;
    let kappa_f = *kappa.numer() as f64 / *kappa.denom() as f64;
    if tau <= Ratio::zero() {
        return Err(BoundError::InvalidTau(tau_f));
    }
    coefficients(case, k, tau, kappa).ok_or(BoundError::KappaOutOfRange(kappa_f))
}

/// Multiplier of `d(x,y)` for the queried case.
pub fn expansion_bound(q: &BoundQuery) -> Result<f64, BoundError> {
    if !(q.tau > 0.0 && q.tau.is_finite()) {
        return Err(BoundError::InvalidTau(q.tau));
    }
    // c_X may trail c_S by rounding when both are measured on the same map.
    if !(q.c_s >= 1.0 && q.c_x >= q.c_s * (1.0 - 1e-9) && q.c_x.is_finite()) {
        return Err(BoundError::InvalidDistortion { c_s: q.c_s, c_x: q.c_x });
    }
    let c = coefficients(q.case, q.k, q.tau, q.kappa).ok_or(BoundError::KappaOutOfRange(q.kappa))?;
    Ok(c.s * q.c_s + c.x * q.c_x)
}

/// Weak-mode envelope `g(k) = 190 H_k + 1`: the case-(e) multiplier at
/// `tau = kappa = 2` with `c_S = c_X = 1`.
pub fn weak_factor(k: usize) -> f64 {
    190.0 * crate::harmonic(k) + 1.0
}
