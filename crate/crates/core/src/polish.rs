//! Gauss–Newton correction onto the coalescence set.
//!
//! Near a point where `λ_k` and `λ_{k+1}` of `L(V)` almost meet, the pair becomes
//! a double eigenvalue once the 2×2 block `[x, y]ᵀ L(V + Δ) [x, y]` is a multiple of
//! the identity. To first order in `Δ` that is two linear conditions
//!
//! ```text
//! gap + ⟨a, Δ⟩ = 0,   a_e = (y_i − y_j)² − (x_i − x_j)²
//!        ⟨b, Δ⟩ = 0,   b_e = (x_i − x_j)(y_i − y_j)
//! ```
//!
//! (edgewise sums). We take the correction of least `‖L(Δ)‖_F`, restricted to the
//! edges whose weight is positive, and iterate. The result is an admissible matrix
//! with a coalesced pair, hence a certified upper bound for the distance.

use crate::error::Result;
use crate::graph::{degrees, laplacian_norm_of, OnPattern, PatternMatrix, SparsityPattern, WeightMatrix};
use crate::inner::eigen_pair;

/// Outcome of a successful polish.
#[derive(Debug, Clone, PartialEq)]
pub struct Polished {
    /// Nonnegative perturbed weights with coalesced pair.
    pub w_star: PatternMatrix,
    /// `‖L(W*) − L(W)‖_F`.
    pub eps: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Settings for [`polish`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolishConfig {
    pub max_iter: usize,
    /// Target `λ_{k+1} − λ_k ≤ gap_rtol · max(1, |λ_{k+1}|)`.
    pub gap_rtol: f64,
    pub cg_rtol: f64,
    pub cg_max_iter: usize,
}

impl Default for PolishConfig {
    fn default() -> Self {
        Self {
            max_iter: 40,
            gap_rtol: 1e-11,
            cg_rtol: 1e-12,
            cg_max_iter: 500,
        }
    }
}

/// Corrects `v` (typically `W + εE`) until the `k`th pair coalesces.
///
/// Entries of `v` at or below zero are clamped to zero and held there. Returns
/// `None` when the iteration does not reach the target gap.
pub fn polish(w: &WeightMatrix, k: usize, v: &PatternMatrix, config: &PolishConfig) -> Result<Option<Polished>> {
    let pattern = w.pattern().clone();
    let mut cur: Vec<f64> = v.values().iter().map(|x| x.max(0.0)).collect();
    let mut free: Vec<bool> = cur.iter().map(|x| *x > 0.0).collect();
    let mut best_gap = f64::INFINITY;
    for it in 0..=config.max_iter {
        let m = PatternMatrix::from_values(pattern.clone(), cur.clone())?;
        let pair = eigen_pair(&m, k)?;
        let gap = pair.gap();
        if gap <= config.gap_rtol * pair.lambda_k1.abs().max(1.0) {
            let diff: Vec<f64> = cur.iter().zip(w.weights()).map(|(a, b)| a - b).collect();
            return Ok(Some(Polished {
                eps: laplacian_norm_of(&pattern, &diff),
                w_star: m,
                gap,
                iterations: it,
            }));
        }
        // give up when the gap stops shrinking
        if it == config.max_iter || (it > 3 && gap > 0.5 * best_gap) {
            return Ok(None);
        }
        best_gap = best_gap.min(gap);
        let (x, y) = (&pair.x_k, &pair.x_k1);
        let mut a = vec![0.0; cur.len()];
        let mut b = vec![0.0; cur.len()];
        for (e, &(i, j)) in pattern.edges().iter().enumerate() {
            if free[e] {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                a[e] = dy * dy - dx * dx;
                b[e] = dx * dy;
            }
        }
        let za = solve_normal(&pattern, &free, &a, config);
        let zb = solve_normal(&pattern, &free, &b, config);
        let (aa, ab, bb) = (dot(&a, &za), dot(&a, &zb), dot(&b, &zb));
        let det = aa * bb - ab * ab;
        let (alpha, beta) = if det > 1e-12 * aa * bb && bb > 0.0 {
            (-gap * bb / det, gap * ab / det)
        } else if aa > 0.0 {
            (-gap / aa, 0.0)
        } else {
            return Ok(None);
        };
        for e in 0..cur.len() {
            if free[e] {
                cur[e] += alpha * za[e] + beta * zb[e];
                if cur[e] <= 0.0 {
                    cur[e] = 0.0;
                    free[e] = false;
                }
            }
        }
    }
    Ok(None)
}

/// Moves a coalesced admissible matrix towards the nearest one to `w`.
///
/// Each step minimizes `‖L(V' − W)‖_F` subject to the two coalescence conditions
/// linearized at the current `V`, over the edges not held at zero. A held edge is
/// freed again when its multiplier says the distance would drop by raising it.
/// The proposal is polished back onto the coalescence set and accepted only if
/// the distance decreases, halving the step otherwise. Returns `None` if `start`
/// itself cannot be polished.
pub fn refine(w: &WeightMatrix, k: usize, start: &PatternMatrix, config: &PolishConfig) -> Result<Option<Polished>> {
    let pattern = w.pattern().clone();
    let weights = w.weights();
    let Some(mut best) = polish(w, k, start, config)? else {
        return Ok(None);
    };
    let scale = laplacian_norm_of(&pattern, best.w_star.values()).max(1.0);
    let mut released = vec![false; weights.len()];
    let mut iterations = best.iterations;
    let mut stalled = 0;
    for _ in 0..config.max_iter {
        let cur = best.w_star.values().to_vec();
        let free: Vec<bool> = cur.iter().zip(&released).map(|(v, &r)| *v > 0.0 || r).collect();
        let pair = eigen_pair(&best.w_star, k)?;
        let gap = pair.gap();
        let (x, y) = (&pair.x_k, &pair.x_k1);
        let mut a = vec![0.0; cur.len()];
        let mut b = vec![0.0; cur.len()];
        for (e, &(i, j)) in pattern.edges().iter().enumerate() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            a[e] = dy * dy - dx * dx;
            b[e] = dx * dy;
        }
        let d: Vec<f64> = cur.iter().zip(weights).map(|(v, w)| v - w).collect();
        // held part of the new difference is fixed at −w
        let f: Vec<f64> = d.iter().zip(&free).map(|(v, &fr)| if fr { 0.0 } else { *v }).collect();
        let hf = apply_h(&pattern, &f);
        let rhs: Vec<f64> = hf.iter().zip(&free).map(|(v, &fr)| if fr { -v } else { 0.0 }).collect();
        let x0 = solve_normal(&pattern, &free, &rhs, config);
        let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(&free).map(|(a, &fr)| if fr { *a } else { 0.0 }).collect() };
        let (pa, pb) = (mask(&a), mask(&b));
        let za = solve_normal(&pattern, &free, &pa, config);
        let zb = solve_normal(&pattern, &free, &pb, config);
        let base: Vec<f64> = x0.iter().zip(&f).map(|(p, q)| p + q).collect();
        let ra = dot(&a, &d) - gap - dot(&a, &base);
        let rb = dot(&b, &d) - dot(&b, &base);
        let (g11, g12, g22) = (dot(&pa, &za), dot(&pa, &zb), dot(&pb, &zb));
        let det = g11 * g22 - g12 * g12;
        // the two conditions can be dependent on the free edges (pair split across clusters)
        let (la, lb) = if det > 1e-10 * g11 * g22 && g22 > 0.0 {
            ((g22 * ra - g12 * rb) / det, (g11 * rb - g12 * ra) / det)
        } else if g11 > 0.0 {
            (ra / g11, 0.0)
        } else {
            break;
        };
        let next: Vec<f64> = (0..cur.len())
            .map(|e| base[e] + la * za[e] + lb * zb[e])
            .collect();
        let grad = apply_h(&pattern, &next);
        let mut changed = false;
        for e in 0..cur.len() {
            let r = !free[e] && grad[e] - la * a[e] - lb * b[e] < -1e-10 * scale;
            changed |= r != released[e];
            released[e] = r;
        }
        let proposal: Vec<f64> = (0..cur.len())
            .map(|e| if free[e] { weights[e] + next[e] } else { cur[e] })
            .collect();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let cand: Vec<f64> = cur.iter().zip(&proposal).map(|(c, p)| (c + t * (p - c)).max(0.0)).collect();
            let v = PatternMatrix::from_values(pattern.clone(), cand)?;
            if let Some(p) = polish(w, k, &v, config)? {
                iterations += p.iterations + 1;
                if p.eps < best.eps {
                    let gain = best.eps - p.eps;
                    best = p;
                    accepted = gain > 1e-13 * scale;
                    break;
                }
            }
            t *= 0.5;
        }
        // a freed edge gets one more try; releases that never pay off would cycle
        stalled = if accepted { 0 } else { stalled + 1 };
        if stalled > 1 || (stalled == 1 && !changed) {
            break;
        }
    }
    best.iterations = iterations;
    Ok(Some(best))
}

/// `2 L*L` in edge coordinates, so that `‖L(v)‖² = ⟨v, apply_h(v)⟩`.
fn apply_h(pattern: &SparsityPattern, v: &[f64]) -> Vec<f64> {
    let d = degrees(pattern, v);
    pattern.edges().iter().zip(v).map(|(&(i, j), &ve)| d[i] + d[j] + 2.0 * ve).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `P L*L P z = r` on the free edges by conjugate gradients, where the
/// operator is taken in edge coordinates (`⟨u, L*L v⟩` with the plain edge dot).
fn solve_normal(pattern: &SparsityPattern, free: &[bool], r: &[f64], config: &PolishConfig) -> Vec<f64> {
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut h = apply_h(pattern, v);
        h.iter_mut().zip(free).filter(|(_, f)| !**f).for_each(|(x, _)| *x = 0.0);
        h
    };
    let mut z = vec![0.0; r.len()];
    let mut res: Vec<f64> = r.to_vec();
    let mut p = res.clone();
    let mut rr = dot(&res, &res);
    let stop = config.cg_rtol * config.cg_rtol * rr;
    for _ in 0..config.cg_max_iter {
        if rr <= stop || rr == 0.0 {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..z.len() {
            z[i] += alpha * p[i];
            res[i] -= alpha * ap[i];
        }
        let rr_new = dot(&res, &res);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = res[i] + beta * p[i];
        }
        rr = rr_new;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::laplacian;
    use crate::inner::eigen_pair;

    #[test]
    fn path_polishes_onto_a_disconnection() {
        let w = WeightMatrix::from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        // close to W* = (0, 1.25)
        let v = PatternMatrix::from_values(w.pattern().clone(), vec![0.01, 1.24]).unwrap();
        let p = polish(&w, 1, &v, &PolishConfig::default()).unwrap().unwrap();
        assert!(p.gap <= 1e-11);
        assert!(p.w_star.values().iter().all(|x| *x >= 0.0));
        let d = laplacian(&p.w_star).matrix() - laplacian(&w).matrix();
        assert!((d.norm() - p.eps).abs() < 1e-12);
        assert!(p.eps >= 15f64.sqrt() / 2.0 - 1e-12);
    }

    #[test]
    fn nearly_coalesced_interior_point() {
        // 4-cycle with a chord: pull λ_2, λ_3 together from a small gap
        let w = WeightMatrix::from_triplets(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0), (0, 2, 0.05)]).unwrap();
        let pair = eigen_pair(&w, 2).unwrap();
        assert!(pair.gap() > 0.0 && pair.gap() < 0.2);
        let p = polish(&w, 2, &w.as_pattern_matrix(), &PolishConfig::default()).unwrap().unwrap();
        let after = eigen_pair(&p.w_star, 2).unwrap();
        assert!(after.gap() <= 1e-10);
        assert!(p.eps < 0.2);
        assert_eq!(p.w_star.pattern().as_ref(), w.pattern().as_ref());
    }
}
