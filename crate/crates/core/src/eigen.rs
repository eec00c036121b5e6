//! Symmetric eigensolves, spectral gaps and the unstructured distance to ambiguity.
//!
//! Cluster counts `k` are 1-based throughout the public API: `spectral_gap(w, 1)`
//! is `λ_2 − λ_1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{laplacian, DenseSymmetric, WeightMatrix};

/// Default relative tolerance under which two eigenvalues count as coalesced.
pub const COALESCENCE_RTOL: f64 = 1e-8;

/// Absolute coalescence threshold for a pair whose upper eigenvalue is `lambda`.
pub fn coalescence_tol(lambda: f64) -> f64 {
    COALESCENCE_RTOL * lambda.abs().max(1.0)
}

/// Ascending eigenvalues with orthonormal eigenvectors stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `λ_i` with 1-based `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// `x_i` with 1-based `i`.
    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i - 1).into_owned()
    }

    /// `Q Λ Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

/// Full eigendecomposition of a symmetric matrix, sorted ascending.
///
/// Each eigenvector is signed so that its largest-magnitude component is
/// positive (first such component on ties).
pub fn eig_symmetric(a: &DenseSymmetric) -> Result<EigenSystem> {
    if a.matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = a.n();
    let SymmetricEigen { eigenvalues, eigenvectors } = SymmetricEigen::new(a.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalues[i].total_cmp(&eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eigenvectors.column(src).into_owned();
        normalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(EigenSystem { values, vectors })
}

pub(crate) fn normalize_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// The `k`th spectral gap of a Laplacian and its scaled form `gap/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub k: usize,
    pub lambda_k: f64,
    pub lambda_k1: f64,
    pub gap: f64,
    pub scaled_gap: f64,
}

impl GapReport {
    pub fn from_eigen(eig: &EigenSystem, k: usize) -> Result<Self> {
        check_k(k, eig.n())?;
        let lambda_k = eig.value(k);
        let lambda_k1 = eig.value(k + 1);
        let gap = (lambda_k1 - lambda_k).max(0.0);
        Ok(Self {
            k,
            lambda_k,
            lambda_k1,
            gap,
            scaled_gap: gap / std::f64::consts::SQRT_2,
        })
    }

    pub fn is_coalesced(&self) -> bool {
        self.gap <= coalescence_tol(self.lambda_k1)
    }
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(Error::KOutOfRange { k, n })
    } else {
        Ok(())
    }
}

/// `λ_{k+1} − λ_k` of `L(W)`; `scaled_gap` is the unstructured distance to ambiguity.
pub fn spectral_gap(w: &WeightMatrix, k: usize) -> Result<GapReport> {
    check_k(k, w.n())?;
    let eig = eig_symmetric(&laplacian(w))?;
    GapReport::from_eigen(&eig, k)
}

/// Closest symmetric matrix to `L(W)` whose `k`th and `(k+1)`st eigenvalues coincide:
/// both eigenvalues are moved to their midpoint along their eigenvectors.
pub fn unstructured_minimizer(w: &WeightMatrix, k: usize) -> Result<DenseSymmetric> {
    check_k(k, w.n())?;
    let l = laplacian(w);
    let eig = eig_symmetric(&l)?;
    let half_gap = 0.5 * (eig.value(k + 1) - eig.value(k));
    let xk = eig.vector(k);
    let xk1 = eig.vector(k + 1);
    let update = (&xk * xk.transpose() - &xk1 * xk1.transpose()) * half_gap;
    let mut m = l.into_inner() + update;
    // symmetrize away rounding from the rank-one products
    let t = m.transpose();
    m = (m + t) * 0.5;
    Ok(DenseSymmetric::from_symmetric_unchecked(m))
}

/// Number of eigenvalues of `L(W)` below `tol`, i.e. the number of connected components.
pub fn connected_components_via_kernel(w: &WeightMatrix, tol: f64) -> Result<usize> {
    if w.n() == 0 {
        return Ok(0);
    }
    let eig = eig_symmetric(&laplacian(w))?;
    Ok(eig.values.iter().filter(|&&v| v < tol).count())
}
