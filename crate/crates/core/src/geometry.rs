//! Point sets in l_p, the Schoenberg test for exact l_2 embeddability, and
//! Gram-matrix factorization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::metric::MetricSpace;

/// Default relative eigenvalue tolerance for PSD decisions.
pub const DEFAULT_EIG_TOL: f64 = 1e-8;

const SYMMETRY_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("p must be finite and at least 1, got {0}")]
    InvalidP(f64),
    #[error("dims must be at least 1")]
    ZeroDims,
    #[error("coordinate buffer of length {len} is not a multiple of dims {dims}")]
    RaggedCoords { len: usize, dims: usize },
    #[error("non-finite coordinate at point {point}")]
    NonFinite { point: usize },
    #[error("matrix is not symmetric at ({i},{j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("matrix is not positive semidefinite: eigenvalue {min_eig} below tolerance")]
    NotPsd { min_eig: f64 },
}

pub fn check_p(p: f64) -> Result<(), GeometryError> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidP(p))
    }
}

/// l_p distance between two coordinate slices.
pub fn lp_distance(a: &[f64], b: &[f64], p: f64) -> Result<f64, GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimMismatch { left: a.len(), right: b.len() });
    }
    check_p(p)?;
    Ok(lp_distance_unchecked(a, b, p))
}

#[inline]
pub(crate) fn lp_distance_unchecked(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `n` points in `R^dims` with an attached finite `p >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dims: usize,
    coords: Vec<f64>,
    p: f64,
}

impl PointSet {
    pub fn new(dims: usize, coords: Vec<f64>, p: f64) -> Result<Self, GeometryError> {
        if dims == 0 {
            return Err(GeometryError::ZeroDims);
        }
        check_p(p)?;
        if coords.len() % dims != 0 {
            return Err(GeometryError::RaggedCoords { len: coords.len(), dims });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite { point: pos / dims });
        }
        Ok(Self { dims, coords, p })
    }

    pub fn from_rows(rows: &[Vec<f64>], p: f64) -> Result<Self, GeometryError> {
        let dims = rows.first().map_or(1, Vec::len);
        for r in rows {
            if r.len() != dims {
                return Err(GeometryError::DimMismatch { left: dims, right: r.len() });
            }
        }
        Self::new(dims, rows.iter().flatten().copied().collect(), p)
    }

    /// `n` points at the origin.
    pub fn zeros(n: usize, dims: usize, p: f64) -> Result<Self, GeometryError> {
        Self::new(dims, vec![0.0; n * dims], p)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        lp_distance_unchecked(self.point(i), self.point(j), self.p)
    }

    pub fn scaled(&self, factor: f64) -> PointSet {
        PointSet { dims: self.dims, coords: self.coords.iter().map(|c| c * factor).collect(), p: self.p }
    }

    /// Points `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(idx.len() * self.dims);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        PointSet { dims: self.dims, coords, p: self.p }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i).to_vec()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PointSetJson {
    p: f64,
    points: Vec<Vec<f64>>,
}

impl Serialize for PointSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PointSetJson { p: self.p, points: self.to_rows() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PointSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = PointSetJson::deserialize(d)?;
        PointSet::from_rows(&raw.points, raw.p).map_err(D::Error::custom)
    }
}

/// Dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, GeometryError> {
        if m.nrows() != m.ncols() {
            return Err(GeometryError::DimMismatch { left: m.nrows(), right: m.ncols() });
        }
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > SYMMETRY_REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                    return Err(GeometryError::NotSymmetric { i, j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds from the upper triangle, mirroring it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> SymmetricMatrix {
        SymmetricMatrix(&self.0 * factor)
    }

    /// Eigenvalues sorted descending, with matching eigenvector columns.
    pub fn eigen_desc(&self) -> (Vec<f64>, DMatrix<f64>) {
        eigen_desc(&self.0)
    }

    pub fn eigenvalues_desc(&self) -> Vec<f64> {
        self.eigen_desc().0
    }

    /// Squared Euclidean distance between the Gram vectors `i` and `j`.
    pub fn gram_sq_dist(&self, i: usize, j: usize) -> f64 {
        self.get(i, i) + self.get(j, j) - 2.0 * self.get(i, j)
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub(crate) fn eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Double-centered Gram matrix `B = -1/2 J D^2 J`.
pub fn centered_gram(m: &MetricSpace) -> SymmetricMatrix {
    let n = m.len();
    if n == 0 {
        return SymmetricMatrix(DMatrix::zeros(0, 0));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| m.d(i, j) * m.d(i, j));
    let row_means: DVector<f64> = DVector::from_fn(n, |i, _| d2.row(i).mean());
    let total = d2.mean();
    SymmetricMatrix::from_fn(n, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + total))
}

fn min_eig_ok(values: &[f64], tol_eig: f64) -> bool {
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    min >= -tol_eig * max
}

/// Schoenberg test: `m` embeds isometrically in l_2 iff its centered Gram is PSD.
pub fn is_l2_isometric(m: &MetricSpace, tol_eig: f64) -> bool {
    if m.len() <= 2 {
        return true;
    }
    min_eig_ok(&centered_gram(m).eigenvalues_desc(), tol_eig)
}

/// Factors `G = X X^T` and returns the rows of `X` as l_2 points. Eigenvalues
/// in `[-tol_eig * lambda_max, 0)` are clamped to zero; anything lower fails.
pub fn points_from_gram(g: &SymmetricMatrix, tol_eig: f64) -> Result<PointSet, GeometryError> {
    let n = g.n();
    if n == 0 {
        return PointSet::zeros(0, 1, 2.0);
    }
    let (values, vectors) = g.eigen_desc();
    if !min_eig_ok(&values, tol_eig) {
        return Err(GeometryError::NotPsd { min_eig: values[n - 1] });
    }
    let cutoff = tol_eig * values[0].max(0.0);
    let kept: Vec<usize> = (0..n).filter(|&k| values[k] > cutoff).collect();
    if kept.is_empty() {
        return PointSet::zeros(n, 1, 2.0);
    }
    let dims = kept.len();
    let mut coords = Vec::with_capacity(n * dims);
    for i in 0..n {
        for &k in &kept {
            coords.push(vectors[(i, k)] * values[k].sqrt());
        }
    }
    PointSet::new(dims, coords, 2.0)
}

/// Exact l_2 coordinates of an isometrically embeddable metric.
pub fn l2_points_of_metric(m: &MetricSpace, tol_eig: f64) -> Result<PointSet, GeometryError> {
    points_from_gram(&centered_gram(m), tol_eig)
}
