//! Unnormalized spectral clustering: rows of the eigenvector matrix of `L(W)`
//! grouped by k-means.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{coalescence_tol, eig_symmetric};
use crate::error::{Error, Result};
use crate::experiments::rng_for;
use crate::graph::{laplacian, WeightMatrix};

/// Rows `r_1 … r_n` of `X = [x_1 | … | x_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub rows: Vec<Vec<f64>>,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Cluster labels in `0..k`, numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Sum of squared distances of the points to their centroids.
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { restarts: 20, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterOptions {
    /// Use the eigenvectors of the `k` smallest eigenvalues that are not zero
    /// (up to the coalescence tolerance) instead of the `k` smallest overall.
    pub skip_zero: bool,
    pub kmeans: KMeansConfig,
}

/// Eigenvectors of the `k` smallest eigenvalues of `L(W)`, row by row.
pub fn spectral_embed(w: &WeightMatrix, k: usize) -> Result<Embedding> {
    spectral_embed_with(w, k, false)
}

pub fn spectral_embed_with(w: &WeightMatrix, k: usize, skip_zero: bool) -> Result<Embedding> {
    let n = w.n();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let eig = eig_symmetric(&laplacian(w))?;
    let first = if skip_zero {
        let top = eig.values[n - 1];
        eig.values.iter().take_while(|&&v| v.abs() <= coalescence_tol(top)).count()
    } else {
        0
    };
    if first + k > n {
        return Err(Error::KOutOfRange { k, n: n - first });
    }
    let rows = (0..n)
        .map(|i| (first..first + k).map(|j| eig.vectors[(i, j)]).collect())
        .collect();
    Ok(Embedding { rows })
}

/// k-means with default settings.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_with(points, k, seed, &KMeansConfig::default())
}

/// Best of `config.restarts` runs of k-means++ seeding followed by Lloyd
/// iterations. Restart `r` draws from stream `r` of the seeded generator; ties in
/// inertia go to the lower restart index.
pub fn kmeans_with(points: &[Vec<f64>], k: usize, seed: u64, config: &KMeansConfig) -> Result<ClusterAssignment> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to cluster".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::KOutOfRange { k, n: points.len() });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let runs: Vec<(Vec<usize>, f64)> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let centroids = kmeans_pp(points, k, &mut rng_for(seed, r as u64));
            lloyd(points, centroids, config.max_iter)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = i;
        }
    }
    let (labels, inertia) = runs.into_iter().nth(best).expect("at least one restart");
    Ok(ClusterAssignment { labels: relabel(&labels), k, inertia })
}

/// Embedding followed by k-means on the rows.
pub fn spectral_cluster(w: &WeightMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    spectral_cluster_with(w, k, seed, &ClusterOptions::default())
}

pub fn spectral_cluster_with(w: &WeightMatrix, k: usize, seed: u64, options: &ClusterOptions) -> Result<ClusterAssignment> {
    let emb = spectral_embed_with(w, k, options.skip_zero)?;
    kmeans_with(&emb.rows, k, seed, &options.kmeans)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, lowest index on ties.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = dist2(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            // all points sit on chosen centers
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, f64) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..max_iter {
        update_centroids(points, &mut labels, &mut centroids, k, dim);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    update_centroids(points, &mut labels, &mut centroids, k, dim);
    let inertia = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centroids[l])).sum();
    (labels, inertia)
}

/// Centroid update. An empty cluster takes over the point farthest from its centroid.
fn update_centroids(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>], k: usize, dim: usize) {
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(labels.iter()) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = dist2(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        // k ≤ #points, so some cluster has two members
        let Some(i) = far else { return };
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::reduced_chain_model;
    use proptest::prelude::*;

    fn two_triangles_and_edge() -> WeightMatrix {
        WeightMatrix::from_triplets(
            8,
            [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 3.0), (6, 7, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn separated_pairs_split() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        let a = kmeans(&pts, 2, 7).unwrap();
        assert_eq!(a.labels, vec![0, 0, 1, 1]);
        // the other balanced split costs 200
        assert!((a.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_cluster_inertia_is_total_scatter() {
        let pts: Vec<Vec<f64>> = [1.0, 2.0, 4.0, 9.0].iter().map(|&x| vec![x]).collect();
        let a = kmeans(&pts, 1, 0).unwrap();
        assert_eq!(a.labels, vec![0; 4]);
        // mean 4: 9 + 4 + 0 + 25
        assert!((a.inertia - 38.0).abs() < 1e-12);
    }

    #[test]
    fn k_equal_n_gives_singletons() {
        let w = two_triangles_and_edge();
        let a = spectral_cluster(&w, 8, 3).unwrap();
        assert_eq!(a.labels, (0..8).collect::<Vec<_>>());
        assert!(a.inertia.abs() < 1e-20);
    }

    #[test]
    fn components_are_recovered() {
        let w = two_triangles_and_edge();
        for seed in 0..10 {
            let a = spectral_cluster(&w, 3, seed).unwrap();
            assert_eq!(a.labels, vec![0, 0, 0, 1, 1, 1, 2, 2]);
        }
    }

    #[test]
    fn embedding_is_constant_on_components() {
        let w = two_triangles_and_edge();
        let e = spectral_embed(&w, 3).unwrap();
        for block in [0..3, 3..6, 6..8] {
            let r0 = &e.rows[block.start];
            for i in block {
                assert!(dist2(&e.rows[i], r0) < 1e-20);
            }
        }
    }

    #[test]
    fn k1_embedding_is_constant_vector() {
        let w = WeightMatrix::from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let e = spectral_embed(&w, 1).unwrap();
        for r in &e.rows {
            assert!((r[0].abs() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn k2_embedding_pattern() {
        let w = WeightMatrix::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        let e = spectral_embed(&w, 2).unwrap();
        let h = 0.5f64.sqrt();
        assert!((e.rows[0][0].abs() - h).abs() < 1e-12 && (e.rows[1][0] - e.rows[0][0]).abs() < 1e-12);
        assert!((e.rows[0][1] + e.rows[1][1]).abs() < 1e-12 && (e.rows[0][1].abs() - h).abs() < 1e-12);
    }

    #[test]
    fn skip_zero_drops_kernel() {
        let w = two_triangles_and_edge();
        let e = spectral_embed_with(&w, 2, true).unwrap();
        let eig = eig_symmetric(&laplacian(&w)).unwrap();
        // columns are x_4, x_5
        for i in 0..8 {
            assert!((e.rows[i][0] - eig.vectors[(i, 3)]).abs() < 1e-12);
        }
        assert!(spectral_embed_with(&w, 6, true).is_err());
    }

    #[test]
    fn chain_at_small_coupling_gives_pairs() {
        let w = reduced_chain_model(8, 2.0, 100.0).unwrap();
        let a = spectral_cluster(&w, 8, 1).unwrap();
        let want: Vec<usize> = (0..16).map(|i| i / 2).collect();
        assert_eq!(a.labels, want);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans(&[], 1, 0).is_err());
        assert!(kmeans(&[vec![1.0]], 2, 0).is_err());
        assert!(kmeans(&[vec![1.0], vec![1.0, 2.0]], 1, 0).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = vec![vec![1.0]; 5];
        let a = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(a.sizes().iter().filter(|&&s| s > 0).count(), 3);
    }

    proptest! {
        #[test]
        fn deterministic_and_total(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..40),
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            prop_assume!(k <= pts.len());
            let a = kmeans(&pts, k, seed).unwrap();
            let b = kmeans(&pts, k, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.labels.iter().all(|&l| l < k));
            prop_assert!(a.sizes().iter().all(|&s| s > 0));
            prop_assert!(a.inertia >= 0.0);
        }

        #[test]
        fn lloyd_never_increases_inertia(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..30),
            seed in 0u64..1000,
        ) {
            let k = 3;
            let c0 = kmeans_pp(&pts, k, &mut rng_for(seed, 0));
            let mut prev = f64::INFINITY;
            for it in 0..8 {
                let (_, inertia) = lloyd(&pts, c0.clone(), it);
                prop_assert!(inertia <= prev + 1e-9);
                prev = inertia;
            }
        }
    }
}
