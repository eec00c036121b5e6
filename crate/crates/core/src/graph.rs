//! Pattern-aware symmetric matrices and the Laplacian map.
//!
//! A [`SparsityPattern`] is the undirected edge set of a graph without
//! self-loops. Weight matrices, perturbation directions and gradients all live
//! on a pattern and store one value per unordered edge `(i, j)` with `i < j`.
//! The Frobenius inner product of two such matrices counts every edge twice,
//! once for each of the symmetric entries.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected edge set on `n` vertices. Edges are sorted, unique and satisfy `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl SparsityPattern {
    /// Builds a pattern from unordered pairs. `(j, i)` is normalized to `(i, j)`;
    /// self-loops, out-of-range indices and repeated pairs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidEdge(a, b));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge(w[0].0, w[0].1));
        }
        Ok(Self { n, edges: list })
    }

    /// All `n(n-1)/2` off-diagonal pairs.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Position of the unordered pair `{i, j}` in [`Self::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        if i == j {
            return None;
        }
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some()
    }
}

/// Anything that stores one value per edge of a pattern.
pub trait OnPattern {
    fn pattern(&self) -> &Arc<SparsityPattern>;
    fn values(&self) -> &[f64];
}

/// Symmetric real matrix supported on a pattern; values may have any sign.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl PatternMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.num_edges()];
        Self { pattern, values }
    }

    pub fn from_values(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: pattern.num_edges(),
                got: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Entry `(i, j)`; zero off the pattern and on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern
            .edge_index(i, j)
            .map_or(0.0, |e| self.values[e])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        to_dense(&self.pattern, &self.values)
    }

    /// Frobenius inner product `trace(AᵀB)`, i.e. `2 Σ_{i<j} a_ij b_ij`.
    pub fn dot(&self, other: &PatternMatrix) -> Result<f64> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && self.pattern != other.pattern {
            return Err(Error::PatternMismatch);
        }
        Ok(edge_dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        edge_dot(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pattern: Arc::clone(&self.pattern),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self += alpha * other`; both operands must share the pattern.
    pub fn axpy(&mut self, alpha: f64, other: &PatternMatrix) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl OnPattern for PatternMatrix {
    fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Symmetric nonnegative weights on a pattern (the matrix `W`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pattern: Arc<SparsityPattern>,
    weights: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(pattern: Arc<SparsityPattern>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != pattern.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: pattern.num_edges(),
                got: weights.len(),
            });
        }
        for (&(i, j), &w) in pattern.edges().iter().zip(&weights) {
            if !w.is_finite() {
                return Err(Error::NonFinite);
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { i, j, weight: w });
            }
        }
        Ok(Self { pattern, weights })
    }

    /// Builds `W` from `(i, j, w)` triplets. Diagonal entries and zero weights
    /// are dropped; a pair listed in both orientations must carry the same weight.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut list: Vec<((usize, usize), f64)> = Vec::new();
        for (i, j, w) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidEdge(i, j));
            }
            if i == j || w == 0.0 {
                continue;
            }
            list.push(((i.min(j), i.max(j)), w));
        }
        list.sort_by(|a, b| a.0.cmp(&b.0));
        let mut dedup: Vec<((usize, usize), f64)> = Vec::with_capacity(list.len());
        for (key, w) in list {
            match dedup.last() {
                Some(&(prev, pw)) if prev == key => {
                    if pw != w {
                        return Err(Error::DuplicateEdge(key.0, key.1));
                    }
                }
                _ => dedup.push((key, w)),
            }
        }
        let pattern = SparsityPattern::new(n, dedup.iter().map(|&(e, _)| e))?;
        Self::new(Arc::new(pattern), dedup.into_iter().map(|(_, w)| w).collect())
    }

    /// Reads the strict upper triangle of a dense symmetric matrix.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let scale = a.amax().max(1.0);
        for i in 0..n {
            for j in i + 1..n {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Self::from_triplets(
            n,
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, a[(i, j)])),
        )
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern
            .edge_index(i, j)
            .map_or(0.0, |e| self.weights[e])
    }

    /// Vertex degrees `d = W·1`.
    pub fn degrees(&self) -> Vec<f64> {
        degrees(&self.pattern, &self.weights)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        to_dense(&self.pattern, &self.weights)
    }

    /// The weights viewed as a signed pattern matrix.
    pub fn as_pattern_matrix(&self) -> PatternMatrix {
        PatternMatrix {
            pattern: Arc::clone(&self.pattern),
            values: self.weights.clone(),
        }
    }

    /// `W + eps * E` as a pattern matrix (entries may be negative).
    pub fn perturbed(&self, eps: f64, direction: &PatternMatrix) -> PatternMatrix {
        debug_assert_eq!(direction.values.len(), self.weights.len());
        PatternMatrix {
            pattern: Arc::clone(&self.pattern),
            values: self
                .weights
                .iter()
                .zip(&direction.values)
                .map(|(w, e)| w + eps * e)
                .collect(),
        }
    }
}

impl OnPattern for WeightMatrix {
    fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }
    fn values(&self) -> &[f64] {
        &self.weights
    }
}

/// Dense symmetric matrix (Laplacians and their unstructured perturbations).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric(DMatrix<f64>);

impl DenseSymmetric {
    /// Wraps a square matrix, checking symmetry to `1e-12` relative to its largest entry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in i + 1..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(m))
    }

    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn inner(&self, other: &DenseSymmetric) -> Result<f64> {
        frobenius_inner(&self.0, &other.0)
    }
}

/// `trace(AᵀB)` for two dense matrices of the same shape.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows() * a.ncols(),
            got: b.nrows() * b.ncols(),
        });
    }
    Ok(a.dot(b))
}

pub(crate) fn edge_dot(a: &[f64], b: &[f64]) -> f64 {
    2.0 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub(crate) fn degrees(pattern: &SparsityPattern, values: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; pattern.n()];
    for (&(i, j), &v) in pattern.edges().iter().zip(values) {
        d[i] += v;
        d[j] += v;
    }
    d
}

fn to_dense(pattern: &SparsityPattern, values: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(pattern.n(), pattern.n());
    for (&(i, j), &v) in pattern.edges().iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// Graph Laplacian `L(M) = diag(M·1) − M`.
pub fn laplacian<M: OnPattern + ?Sized>(m: &M) -> DenseSymmetric {
    laplacian_of(m.pattern(), m.values())
}

pub(crate) fn laplacian_of(pattern: &SparsityPattern, values: &[f64]) -> DenseSymmetric {
    let n = pattern.n();
    let mut l = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pattern.edges().iter().zip(values) {
        l[(i, j)] -= v;
        l[(j, i)] -= v;
        l[(i, i)] += v;
        l[(j, j)] += v;
    }
    DenseSymmetric(l)
}

/// `‖L(M)‖_F` without forming the dense Laplacian.
pub fn laplacian_norm<M: OnPattern + ?Sized>(m: &M) -> f64 {
    laplacian_norm_of(m.pattern(), m.values())
}

pub(crate) fn laplacian_norm_of(pattern: &SparsityPattern, values: &[f64]) -> f64 {
    let d = degrees(pattern, values);
    (d.iter().map(|x| x * x).sum::<f64>() + edge_dot(values, values)).sqrt()
}

/// Pattern-aware product `y = L(M) x` in `O(n + |E|)`.
pub fn laplacian_matvec<M: OnPattern + ?Sized>(m: &M, x: &DVector<f64>) -> Result<DVector<f64>> {
    let pattern = m.pattern();
    if x.len() != pattern.n() {
        return Err(Error::DimensionMismatch { expected: pattern.n(), got: x.len() });
    }
    let mut y = DVector::zeros(pattern.n());
    for (&(i, j), &v) in pattern.edges().iter().zip(m.values()) {
        let diff = v * (x[i] - x[j]);
        y[i] += diff;
        y[j] -= diff;
    }
    Ok(y)
}

/// Orthogonal projection of a square matrix onto symmetric matrices with the
/// given pattern: `(a_ij + a_ji)/2` on edges, zero elsewhere.
pub fn project_pattern(pattern: &Arc<SparsityPattern>, a: &DMatrix<f64>) -> Result<PatternMatrix> {
    check_square(pattern, a)?;
    let values = pattern
        .edges()
        .iter()
        .map(|&(i, j)| 0.5 * (a[(i, j)] + a[(j, i)]))
        .collect();
    Ok(PatternMatrix { pattern: Arc::clone(pattern), values })
}

/// Adjoint of the Laplacian map: `L*(V) = P_E(diagvec(V) 1ᵀ − V)`.
pub fn laplacian_adjoint(pattern: &Arc<SparsityPattern>, v: &DMatrix<f64>) -> Result<PatternMatrix> {
    check_square(pattern, v)?;
    let values = pattern
        .edges()
        .iter()
        .map(|&(i, j)| 0.5 * (v[(i, i)] + v[(j, j)] - v[(i, j)] - v[(j, i)]))
        .collect();
    Ok(PatternMatrix { pattern: Arc::clone(pattern), values })
}

/// `L*(L(M)) = P_E(d 1ᵀ) + M` with `d = M·1`, computed edgewise.
pub fn adjoint_of_laplacian<M: OnPattern + ?Sized>(m: &M) -> PatternMatrix {
    let pattern = m.pattern();
    let d = degrees(pattern, m.values());
    let values = pattern
        .edges()
        .iter()
        .zip(m.values())
        .map(|(&(i, j), &v)| 0.5 * (d[i] + d[j]) + v)
        .collect();
    PatternMatrix { pattern: Arc::clone(pattern), values }
}

/// `L*(sym(x yᵀ))`, edgewise `(x_i − x_j)(y_i − y_j)/2`. With `x = y` this is `L*(x xᵀ)`.
pub fn adjoint_outer(pattern: &Arc<SparsityPattern>, x: &DVector<f64>, y: &DVector<f64>) -> PatternMatrix {
    let values = pattern
        .edges()
        .iter()
        .map(|&(i, j)| 0.5 * (x[i] - x[j]) * (y[i] - y[j]))
        .collect();
    PatternMatrix { pattern: Arc::clone(pattern), values }
}

fn check_square(pattern: &SparsityPattern, a: &DMatrix<f64>) -> Result<()> {
    let n = pattern.n();
    if a.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pattern(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Arc<SparsityPattern> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.gen::<f64>() < density)
            .collect();
        Arc::new(SparsityPattern::new(n, edges).unwrap())
    }

    fn random_values(rng: &mut ChaCha8Rng, p: &Arc<SparsityPattern>) -> PatternMatrix {
        let v = (0..p.num_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PatternMatrix::from_values(Arc::clone(p), v).unwrap()
    }

    fn random_dense(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn pattern_rejects_loops_and_duplicates() {
        assert_eq!(SparsityPattern::new(3, [(1, 1)]), Err(Error::InvalidEdge(1, 1)));
        assert_eq!(SparsityPattern::new(3, [(0, 3)]), Err(Error::InvalidEdge(0, 3)));
        assert_eq!(SparsityPattern::new(3, [(0, 1), (1, 0)]), Err(Error::DuplicateEdge(0, 1)));
        let p = SparsityPattern::new(4, [(3, 1), (0, 2)]).unwrap();
        assert_eq!(p.edges(), &[(0, 2), (1, 3)]);
        assert_eq!(p.edge_index(3, 1), Some(1));
    }

    #[test]
    fn triplets_drop_diagonal_and_zeros() {
        let w = WeightMatrix::from_triplets(3, [(0, 0, 5.0), (0, 1, 2.0), (1, 0, 2.0), (1, 2, 0.0)]).unwrap();
        assert_eq!(w.pattern().edges(), &[(0, 1)]);
        assert!(WeightMatrix::from_triplets(3, [(0, 1, 2.0), (1, 0, 3.0)]).is_err());
        assert!(matches!(
            WeightMatrix::from_triplets(2, [(0, 1, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn laplacian_of_k2_and_zero() {
        let w = WeightMatrix::from_triplets(2, [(0, 1, 3.0)]).unwrap();
        let l = laplacian(&w);
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[3.0, -3.0, -3.0, 3.0]));
        let z = PatternMatrix::zeros(Arc::new(SparsityPattern::complete(4)));
        assert_eq!(laplacian(&z).matrix(), &DMatrix::zeros(4, 4));
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_pattern(&mut rng, 9, 0.5);
            let m = random_values(&mut rng, &p);
            let l = laplacian(&m);
            let ones = DVector::from_element(9, 1.0);
            let r = l.matrix() * ones;
            assert!(r.amax() <= 1e-12 * l.frobenius_norm().max(1.0));
            assert!((laplacian_norm(&m) - l.frobenius_norm()).abs() < 1e-12);
            let x = DVector::from_fn(9, |_, _| rng.gen_range(-1.0..1.0));
            let y = laplacian_matvec(&m, &x).unwrap();
            assert!((y - l.matrix() * x).amax() < 1e-12);
        }
    }

    #[test]
    fn projection_of_conforming_and_antisymmetric_inputs() {
        let n = 5;
        let p = Arc::new(SparsityPattern::complete(n));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_dense(&mut rng, n);
        let sym = &a + a.transpose();
        let mut expected = sym.clone();
        expected.fill_diagonal(0.0);
        assert!((project_pattern(&p, &sym).unwrap().to_dense() - expected).amax() < 1e-15);
        let anti = &a - a.transpose();
        assert!(project_pattern(&p, &anti).unwrap().norm() < 1e-15);
        assert!(project_pattern(&p, &DMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn projection_is_adjoint_to_inclusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pattern(&mut rng, 4, 0.6);
        let a = random_dense(&mut rng, 4);
        let pa = project_pattern(&p, &a).unwrap();
        for _ in 0..100 {
            let w = random_values(&mut rng, &p);
            let lhs = pa.dot(&w).unwrap();
            let rhs = frobenius_inner(&a, &w.to_dense()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..100 {
            let n = 2 + trial % 7;
            let p = random_pattern(&mut rng, n, 0.5);
            let v = random_dense(&mut rng, n);
            let w = random_values(&mut rng, &p);
            let lhs = laplacian_adjoint(&p, &v).unwrap().dot(&w).unwrap();
            let lw = laplacian(&w);
            let rhs = frobenius_inner(&v, lw.matrix()).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * v.norm() * lw.frobenius_norm() + 1e-15,
                "{lhs} vs {rhs}"
            );
        }
        let p = Arc::new(SparsityPattern::complete(3));
        assert_eq!(laplacian_adjoint(&p, &DMatrix::zeros(3, 3)).unwrap().norm(), 0.0);
    }

    #[test]
    fn adjoint_of_laplacian_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let p = random_pattern(&mut rng, 7, 0.5);
            let w = random_values(&mut rng, &p);
            let via_dense = laplacian_adjoint(&p, laplacian(&w).matrix()).unwrap();
            let d = DVector::from_vec(degrees(&p, w.values()));
            let d1t = &d * DVector::from_element(7, 1.0).transpose();
            let mut closed = project_pattern(&p, &d1t).unwrap();
            closed.axpy(1.0, &w);
            let fast = adjoint_of_laplacian(&w);
            for ((a, b), c) in via_dense.values().iter().zip(closed.values()).zip(fast.values()) {
                assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
            }
            // ⟨L(E), L(E)⟩ = ⟨L*(L(E)), E⟩
            let le = laplacian(&w);
            let lhs = le.inner(&le).unwrap();
            let rhs = fast.dot(&w).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs));
        }
    }

    #[test]
    fn adjoint_outer_matches_dense_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_pattern(&mut rng, 6, 0.7);
        let x = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let xy = &x * y.transpose();
        let sym = (&xy + xy.transpose()) * 0.5;
        let dense = laplacian_adjoint(&p, &sym).unwrap();
        let fast = adjoint_outer(&p, &x, &y);
        for (a, b) in dense.values().iter().zip(fast.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pattern_inner_product_matches_dense_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_pattern(&mut rng, 8, 0.4);
        let a = random_values(&mut rng, &p);
        let b = random_values(&mut rng, &p);
        let dense = frobenius_inner(&a.to_dense(), &b.to_dense()).unwrap();
        assert!((a.dot(&b).unwrap() - dense).abs() < 1e-13);
        assert!((a.dot(&a).unwrap() - a.norm().powi(2)).abs() < 1e-13);
        let other = Arc::new(SparsityPattern::complete(8));
        assert_eq!(a.dot(&PatternMatrix::zeros(other)), Err(Error::PatternMismatch));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_contractive(seed in 0u64..10_000, n in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_pattern(&mut rng, n, 0.5);
            let a = random_dense(&mut rng, n);
            let pa = project_pattern(&p, &a).unwrap();
            let ppa = project_pattern(&p, &pa.to_dense()).unwrap();
            prop_assert!(pa.norm() <= a.norm() + 1e-12);
            for (x, y) in pa.values().iter().zip(ppa.values()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
