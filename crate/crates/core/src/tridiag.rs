//! Selected eigenpairs of a dense symmetric matrix: Householder reduction to
//! tridiagonal form, Sturm-sequence bisection for the wanted eigenvalues and
//! inverse iteration for their vectors.
//!
//! The flow only ever needs two neighbouring eigenpairs, so this is much cheaper
//! than a full decomposition once the matrix is past a few dozen rows.

use nalgebra::{DMatrix, DVector};

/// Householder reduction `A = Q T Qᵀ`, with the reflectors kept for back-transformation.
pub(crate) struct Tridiagonal {
    n: usize,
    diag: Vec<f64>,
    off: Vec<f64>,
    /// Column-major `n × n`; reflector `k` lives in rows `k+1..n` of column `k`.
    reflectors: Vec<f64>,
    betas: Vec<f64>,
}

impl Tridiagonal {
    pub(crate) fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        // only the lower triangle is read and updated
        let mut m: Vec<f64> = a.as_slice().to_vec();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        let mut betas = vec![0.0; n.saturating_sub(1)];
        let mut p = vec![0.0; n];
        for k in 0..n.saturating_sub(1) {
            let s = k + 1;
            let len = n - s;
            let col = k * n;
            let alpha0 = m[col + s];
            let sigma: f64 = m[col + s + 1..col + n].iter().map(|x| x * x).sum();
            let (beta, alpha) = if sigma == 0.0 {
                (0.0, alpha0)
            } else {
                let mu = (alpha0 * alpha0 + sigma).sqrt();
                let alpha = if alpha0 <= 0.0 { mu } else { -mu };
                let v0 = alpha0 - alpha;
                for x in &mut m[col + s + 1..col + n] {
                    *x /= v0;
                }
                (-v0 / alpha, alpha)
            };
            m[col + s] = 1.0;
            diag[k] = m[col + k];
            off[k] = alpha;
            betas[k] = beta;
            if beta != 0.0 {
                let v: Vec<f64> = m[col + s..col + n].to_vec();
                // p = A v over the trailing block, reading the lower triangle only
                p[..len].iter_mut().for_each(|x| *x = 0.0);
                for jj in 0..len {
                    let c = (s + jj) * n + s;
                    let colj = &m[c + jj + 1..c + len];
                    let vj = v[jj];
                    axpy(&mut p[jj + 1..len], vj, colj);
                    p[jj] += m[c + jj] * vj + dot(colj, &v[jj + 1..]);
                }
                let pv: f64 = p[..len].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * beta;
                let half = 0.5 * beta * pv;
                for (pi, &vi) in p[..len].iter_mut().zip(&v) {
                    *pi = beta * *pi - half * vi;
                }
                // A ← A − v pᵀ − p vᵀ on the lower triangle
                for jj in 0..len {
                    let (vj, pj) = (v[jj], p[jj]);
                    let c = (s + jj) * n + s;
                    let col = &mut m[c + jj..c + len];
                    axpy(col, -pj, &v[jj..]);
                    axpy(col, -vj, &p[jj..len]);
                }
            }
        }
        if n > 0 {
            diag[n - 1] = m[(n - 1) * n + n - 1];
        }
        Self { n, diag, off, reflectors: m, betas }
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64, pivmin: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.n {
            let e2 = if i > 0 { self.off[i - 1] * self.off[i - 1] } else { 0.0 };
            q = self.diag[i] - x - e2 / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < self.n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Eigenvalues `lo..=hi` (0-based) by bisection, given `[a, b]` holding all of
    /// them. Indices share an interval until a midpoint separates them.
    fn eigenvalues(&self, lo: usize, hi: usize, a: f64, b: f64, pivmin: f64, abstol: f64, out: &mut Vec<f64>) {
        let (mut a, mut b) = (a, b);
        for _ in 0..256 {
            let mid = 0.5 * (a + b);
            if b - a <= abstol + 2.0 * f64::EPSILON * a.abs().max(b.abs()) || mid <= a || mid >= b {
                break;
            }
            let c = self.count_below(mid, pivmin);
            if c <= lo {
                a = mid;
            } else if c > hi {
                b = mid;
            } else {
                self.eigenvalues(lo, c - 1, a, mid, pivmin, abstol, out);
                self.eigenvalues(c, hi, mid, b, pivmin, abstol, out);
                return;
            }
        }
        out.extend(std::iter::repeat(0.5 * (a + b)).take(hi - lo + 1));
    }

    /// Applies `Q` to a vector given in the tridiagonal basis.
    fn back_transform(&self, z: &mut [f64]) {
        let n = self.n;
        for k in (0..n.saturating_sub(1)).rev() {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.reflectors[k * n + k + 1..k * n + n];
            let dot: f64 = v.iter().zip(&z[k + 1..]).map(|(a, b)| a * b).sum();
            let f = beta * dot;
            for (zi, vi) in z[k + 1..].iter_mut().zip(v) {
                *zi -= f * vi;
            }
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    let x = &x[..y.len()];
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let b = &b[..a.len()];
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// LU factors of `T − σI` with partial pivoting (row `i` may swap with `i+1`).
struct ShiftedLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swap: Vec<bool>,
}

impl ShiftedLu {
    fn new(t: &Tridiagonal, sigma: f64, tiny: f64) -> Self {
        let n = t.n;
        let mut d: Vec<f64> = t.diag.iter().map(|x| x - sigma).collect();
        let mut up: Vec<f64> = t.off.clone();
        let mut up2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swap = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            let sub = t.off[i];
            if d[i].abs() >= sub.abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let m = sub / d[i];
                mult[i] = m;
                d[i + 1] -= m * up[i];
            } else {
                // row i+1 becomes the pivot row
                swap[i] = true;
                let m = d[i] / sub;
                mult[i] = m;
                let old_up = up[i];
                d[i] = sub;
                up[i] = d[i + 1];
                up2[i] = if i + 1 < n - 1 { t.off[i + 1] } else { 0.0 };
                d[i + 1] = old_up - m * up[i];
                if i + 1 < n - 1 {
                    up[i + 1] = -m * up2[i];
                }
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self { u0: d, u1: up, u2: up2, mult, swap }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.mult[i] * b[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= self.u1[i] * b[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * b[i + 2];
            }
            b[i] = s / self.u0[i];
            // only the direction matters; keep the growth from tiny pivots finite
            if b[i].abs() > 1e150 {
                b.iter_mut().for_each(|x| *x *= 1e-150);
            }
        }
    }
}

/// Eigenpairs `lo..=hi` (0-based, ascending) of a symmetric matrix.
pub(crate) fn eig_range(a: &DMatrix<f64>, lo: usize, hi: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let n = a.nrows();
    let t = Tridiagonal::new(a);
    let (glo, ghi) = t.gershgorin();
    let norm = glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE * norm.max(1.0);
    let width = (ghi - glo).max(norm * f64::EPSILON);
    let (glo, ghi) = (glo - 2.0 * f64::EPSILON * width - pivmin, ghi + 2.0 * f64::EPSILON * width + pivmin);
    let mut values = Vec::with_capacity(hi - lo + 1);
    t.eigenvalues(lo, hi, glo, ghi, pivmin, f64::EPSILON * norm, &mut values);
    let tiny = f64::EPSILON * norm;
    let cluster = 1e-3 * norm;
    let mut tri_vectors: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    for (idx, &lambda) in values.iter().enumerate() {
        let lu = ShiftedLu::new(&t, lambda, tiny);
        let mut z: Vec<f64> = (0..n).map(|i| start_component(i, lo + idx)).collect();
        let neighbours: Vec<usize> = (0..idx).filter(|&j| (values[j] - lambda).abs() <= cluster).collect();
        for _ in 0..4 {
            for &j in &neighbours {
                let prev: &Vec<f64> = &tri_vectors[j];
                let d: f64 = prev.iter().zip(&z).map(|(a, b)| a * b).sum();
                z.iter_mut().zip(prev).for_each(|(zi, pi)| *zi -= d * pi);
            }
            let nrm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            z.iter_mut().for_each(|x| *x /= nrm);
            lu.solve(&mut z);
        }
        for &j in &neighbours {
            let prev: &Vec<f64> = &tri_vectors[j];
            let d: f64 = prev.iter().zip(&z).map(|(a, b)| a * b).sum();
            z.iter_mut().zip(prev).for_each(|(zi, pi)| *zi -= d * pi);
        }
        let nrm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        z.iter_mut().for_each(|x| *x /= nrm);
        tri_vectors.push(z);
    }
    let vectors = tri_vectors
        .into_iter()
        .map(|mut z| {
            t.back_transform(&mut z);
            DVector::from_vec(z)
        })
        .collect();
    (values, vectors)
}

/// Deterministic, well-spread starting vector for inverse iteration.
fn start_component(i: usize, which: usize) -> f64 {
    let x = ((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (which as u64 + 7).wrapping_mul(0xBF58_476D_1CE4_E5B9)) >> 11;
    0.5 + (x as f64) / (1u64 << 53) as f64
}
