//! Inner iteration: minimize `F_{ε,c}(E) = λ_{k+1} − λ_k + c Q_ε(E)` over
//! pattern directions `E` with `‖L(E)‖_F = 1`, at fixed `ε` and `c`.
//!
//! Gradients are rescaled by `1/ε`, so `d/dt F_{ε,c}(E(t)) = ε ⟨G_{ε,c}(E), Ė⟩`.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::eigen::{check_k, coalescence_tol, normalize_sign};
use crate::tridiag::eig_range;
use crate::error::{Error, Result};
use crate::graph::{
    adjoint_of_laplacian, edge_dot, laplacian, laplacian_norm, OnPattern, PatternMatrix, WeightMatrix,
};

/// `λ_k`, `λ_{k+1}` and their eigenvectors for one Laplacian (1-based `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub k: usize,
    pub lambda_k: f64,
    pub lambda_k1: f64,
    pub x_k: DVector<f64>,
    pub x_k1: DVector<f64>,
}

impl EigenPair {
    pub fn gap(&self) -> f64 {
        self.lambda_k1 - self.lambda_k
    }

    pub fn coalescence_tol(&self) -> f64 {
        coalescence_tol(self.lambda_k1)
    }

    pub fn is_coalesced(&self) -> bool {
        self.gap() <= self.coalescence_tol()
    }
}

/// Eigen data of `L(M)` needed by the flow.
pub fn eigen_pair<M: OnPattern + ?Sized>(m: &M, k: usize) -> Result<EigenPair> {
    check_k(k, m.pattern().n())?;
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let l = laplacian(m);
    let (values, mut vectors) = eig_range(l.matrix(), k - 1, k);
    vectors.iter_mut().for_each(normalize_sign);
    let x_k1 = vectors.pop().expect("two vectors");
    let x_k = vectors.pop().expect("two vectors");
    Ok(EigenPair { k, lambda_k: values[0], lambda_k1: values[1], x_k, x_k1 })
}

/// Step control and stopping rules for the inner flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    /// Stop when one accepted step changes `F` by at most `tol` relative.
    pub tol: f64,
    pub h0: f64,
    /// A step that must shrink below this size to decrease `F` ends the run.
    pub h_min: f64,
    pub max_steps: usize,
    /// Pair counts as coalesced when `λ_{k+1} − λ_k ≤ coalescence_rtol · max(1, |λ_{k+1}|)`.
    pub coalescence_rtol: f64,
    /// Stop when `‖Ė‖ ≤ stationarity_tol · ‖G_{ε,c}‖`.
    pub stationarity_tol: f64,
    /// Accepted steps in a row before `h` doubles.
    pub growth_streak: usize,
    pub step_rule: StepRule,
    pub record_trace: bool,
}

/// How the next trial step length is proposed. Either way a step is only
/// accepted if `F` does not increase, halving `h` until it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Double `h` after `growth_streak` accepted steps in a row.
    Doubling,
    /// Propose `⟨s, s⟩ / ⟨s, y⟩` from the last step `s` and direction change `y`.
    BarzilaiBorwein,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            h0: 0.1,
            h_min: 1e-8,
            max_steps: 500,
            coalescence_rtol: 1e-8,
            stationarity_tol: 1e-6,
            growth_streak: 5,
            step_rule: StepRule::BarzilaiBorwein,
            record_trace: false,
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.h0, self.h_min, self.coalescence_rtol, self.stationarity_tol];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.max_steps == 0 {
            return Err(Error::InvalidInput("inner config values must be positive".into()));
        }
        if self.h_min >= self.h0 {
            return Err(Error::InvalidInput("h_min must be below h0".into()));
        }
        Ok(())
    }

    fn coalesced(&self, pair: &EigenPair) -> bool {
        pair.gap() <= self.coalescence_rtol * pair.lambda_k1.abs().max(1.0)
    }
}

/// Why the inner flow stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    /// The pair coalesced; `F_ε` is below the coalescence threshold.
    Coalesced,
    /// Relative change or stationarity test met.
    Converged,
    /// No decrease possible with `h ≥ h_min`.
    Stalled,
    MaxStepsExceeded,
}

/// One accepted step of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub h: f64,
    pub f: f64,
    pub kappa: f64,
    pub min_entry: f64,
    pub norm: f64,
}

/// Writes trace rows as CSV with header `step,h,F,kappa,min_entry,norm`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,h,F,kappa,min_entry,norm")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step, r.h, r.f, r.kappa, r.min_entry, r.norm
        )?;
    }
    Ok(())
}

/// State of the flow at fixed `ε` and `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub e: PatternMatrix,
    pub eps: f64,
    pub c: f64,
    /// `F_{ε,c}(E)`.
    pub f_value: f64,
    /// `F_ε(E) = λ_{k+1} − λ_k` without the penalty.
    pub gap: f64,
    /// `Q_ε(E)`.
    pub penalty: f64,
    pub kappa: f64,
    /// `⟨G_{ε,c}(E), E⟩`, the derivative of the optimal value in `ε`.
    pub fprime: f64,
    /// `G_{ε,c}(E)`; zero when the pair is coalesced.
    pub gradient: PatternMatrix,
    pub pair: EigenPair,
    pub min_entry: f64,
    pub steps: usize,
    pub status: InnerStatus,
    /// Set by [`free_flow_rescale`] when the free flow could not reach unit norm.
    pub norm_not_reached: bool,
    pub trace: Vec<TraceRow>,
}

impl InnerState {
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.min_entry >= -tol
    }

    pub fn is_coalesced(&self) -> bool {
        self.status == InnerStatus::Coalesced
    }

    /// `W + εE`.
    pub fn perturbed(&self, w: &WeightMatrix) -> PatternMatrix {
        w.perturbed(self.eps, &self.e)
    }
}

struct Point {
    e: PatternMatrix,
    pair: EigenPair,
    gap: f64,
    penalty: f64,
    f: f64,
    min_entry: f64,
}

fn evaluate(w: &WeightMatrix, k: usize, eps: f64, c: f64, e: PatternMatrix) -> Result<Point> {
    let m = w.perturbed(eps, &e);
    let pair = eigen_pair(&m, k)?;
    let penalty = negative_sq_sum(m.values());
    let gap = pair.gap();
    Ok(Point {
        e,
        gap,
        penalty,
        f: gap + c * penalty,
        min_entry: m.min_value(),
        pair,
    })
}

fn negative_sq_sum(values: &[f64]) -> f64 {
    values.iter().map(|v| v.min(0.0).powi(2)).sum()
}

fn check_pattern(w: &WeightMatrix, e: &PatternMatrix) -> Result<()> {
    if e.values().len() != w.weights().len() || e.pattern().as_ref() != w.pattern().as_ref() {
        return Err(Error::PatternMismatch);
    }
    Ok(())
}

/// `G_{ε,c}` from eigen data: `L*(x_{k+1}x_{k+1}ᵀ − x_k x_kᵀ) + c (W + εE)_−`.
fn gradient_from(w: &WeightMatrix, eps: f64, c: f64, e: &PatternMatrix, pair: &EigenPair) -> PatternMatrix {
    let (x, y) = (&pair.x_k, &pair.x_k1);
    let values = w
        .pattern()
        .edges()
        .iter()
        .zip(w.weights().iter().zip(e.values()))
        .map(|(&(i, j), (&wij, &eij))| {
            let dy = y[i] - y[j];
            let dx = x[i] - x[j];
            0.5 * (dy * dy - dx * dx) + c * (wij + eps * eij).min(0.0)
        })
        .collect();
    PatternMatrix::from_values(e.pattern().clone(), values).expect("gradient shares the pattern")
}

/// `F_ε(E) = λ_{k+1}(L(W + εE)) − λ_k(L(W + εE))`.
pub fn functional_f(w: &WeightMatrix, k: usize, eps: f64, e: &PatternMatrix) -> Result<f64> {
    check_pattern(w, e)?;
    Ok(eigen_pair(&w.perturbed(eps, e), k)?.gap())
}

/// `Q_ε(E) = ½ Σ_{(i,j)} min(w_ij + ε e_ij, 0)²` over both symmetric entries of every edge.
pub fn penalty_q(w: &WeightMatrix, eps: f64, e: &PatternMatrix) -> Result<f64> {
    check_pattern(w, e)?;
    Ok(negative_sq_sum(w.perturbed(eps, e).values()))
}

/// Rescaled gradient `G_ε(E) = L*(x_{k+1}x_{k+1}ᵀ − x_k x_kᵀ)` of `F_ε`.
pub fn gradient_g(w: &WeightMatrix, k: usize, eps: f64, e: &PatternMatrix) -> Result<PatternMatrix> {
    penalized_gradient(w, k, eps, 0.0, e)
}

/// `G_{ε,c}(E) = G_ε(E) + c (W + εE)_−`, with `(·)_−` the entrywise `min(·, 0)`.
///
/// This is the descent direction of `F_ε + c Q_ε`: a negative entry of
/// `W + εE` lowers the gradient on its edge so the flow pushes it back up.
pub fn penalized_gradient(w: &WeightMatrix, k: usize, eps: f64, c: f64, e: &PatternMatrix) -> Result<PatternMatrix> {
    check_pattern(w, e)?;
    let pair = eigen_pair(&w.perturbed(eps, e), k)?;
    if pair.is_coalesced() {
        return Err(Error::CoalescedPair { k, gap: pair.gap() });
    }
    Ok(gradient_from(w, eps, c, e, &pair))
}

/// Lagrange multiplier `κ = ⟨G, L*(L(E))⟩ / ‖L*(L(E))‖²` of the norm constraint.
pub fn multiplier_kappa(g: &PatternMatrix, e: &PatternMatrix) -> Result<f64> {
    let m = adjoint_of_laplacian(e);
    let mm = m.dot(&m)?;
    if mm.sqrt() < 1e-14 {
        return Err(Error::DegenerateConstraint(mm.sqrt()));
    }
    Ok(g.dot(&m)? / mm)
}

/// Constrained direction `Ė = −G + κ L*(L(E))` and `κ`.
fn constrained_direction(g: &PatternMatrix, e: &PatternMatrix) -> Result<(PatternMatrix, f64)> {
    let m = adjoint_of_laplacian(e);
    let mm = edge_dot(m.values(), m.values());
    if mm.sqrt() < 1e-14 {
        return Err(Error::DegenerateConstraint(mm.sqrt()));
    }
    let kappa = edge_dot(g.values(), m.values()) / mm;
    let mut d = g.scaled(-1.0);
    d.axpy(kappa, &m);
    Ok((d, kappa))
}

fn normalized(mut e: PatternMatrix) -> Result<PatternMatrix> {
    let nrm = laplacian_norm(&e);
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(Error::DegenerateConstraint(nrm));
    }
    for v in e.values_mut() {
        *v /= nrm;
    }
    Ok(e)
}

#[allow(clippy::too_many_arguments)]
fn finish(w: &WeightMatrix, eps: f64, c: f64, p: Point, steps: usize, status: InnerStatus, trace: Vec<TraceRow>, config: &InnerConfig) -> Result<InnerState> {
    let coalesced = config.coalesced(&p.pair);
    let (gradient, kappa, fprime) = if coalesced {
        (PatternMatrix::zeros(p.e.pattern().clone()), 0.0, 0.0)
    } else {
        let g = gradient_from(w, eps, c, &p.e, &p.pair);
        let (_, kappa) = constrained_direction(&g, &p.e)?;
        let fprime = g.dot(&p.e)?;
        (g, kappa, fprime)
    };
    Ok(InnerState {
        e: p.e,
        eps,
        c,
        f_value: p.f,
        gap: p.gap,
        penalty: p.penalty,
        kappa,
        fprime,
        gradient,
        pair: p.pair,
        min_entry: p.min_entry,
        steps,
        status: if coalesced { InnerStatus::Coalesced } else { status },
        norm_not_reached: false,
        trace,
    })
}

/// Evaluates the flow state at `(ε, c, E)` without taking any step.
/// `E` is renormalized to `‖L(E)‖_F = 1`.
pub fn inner_state_at(w: &WeightMatrix, k: usize, eps: f64, c: f64, e: PatternMatrix, config: &InnerConfig) -> Result<InnerState> {
    check_pattern(w, &e)?;
    let p = evaluate(w, k, eps, c, normalized(e)?)?;
    finish(w, eps, c, p, 0, InnerStatus::Converged, Vec::new(), config)
}

/// One projected explicit Euler step of length `h`, renormalized to the unit sphere.
/// The step is taken regardless of whether `F` decreases.
pub fn euler_step(w: &WeightMatrix, k: usize, state: &InnerState, h: f64, config: &InnerConfig) -> Result<InnerState> {
    if state.is_coalesced() {
        return Err(Error::CoalescedPair { k, gap: state.gap });
    }
    let (d, _) = constrained_direction(&state.gradient, &state.e)?;
    let mut e = state.e.clone();
    e.axpy(h, &d);
    let p = evaluate(w, k, state.eps, state.c, normalized(e)?)?;
    finish(w, state.eps, state.c, p, state.steps + 1, InnerStatus::Converged, Vec::new(), config)
}

/// Integrates the norm-constrained flow from `e0` until a stopping rule fires.
///
/// Accepted steps never increase `F_{ε,c}`. A step is also capped by the
/// linear prediction of the time needed to reach `F = 0`, which keeps the
/// iterate from jumping across the coalescence point.
pub fn inner_minimize(
    w: &WeightMatrix,
    k: usize,
    eps: f64,
    c: f64,
    e0: &PatternMatrix,
    config: &InnerConfig,
) -> Result<InnerState> {
    config.validate()?;
    check_pattern(w, e0)?;
    let start = evaluate(w, k, eps, c, normalized(e0.clone())?)?;
    run_flow(w, k, eps, c, start, config.h0, config)
}

fn run_flow(w: &WeightMatrix, k: usize, eps: f64, c: f64, mut cur: Point, h_start: f64, config: &InnerConfig) -> Result<InnerState> {
    let mut trace = Vec::new();
    let mut h = h_start;
    let mut streak = 0;
    let mut steps = 0;
    let mut prev: Option<(PatternMatrix, PatternMatrix)> = None;
    let status = loop {
        if config.coalesced(&cur.pair) {
            break InnerStatus::Coalesced;
        }
        if steps >= config.max_steps {
            break InnerStatus::MaxStepsExceeded;
        }
        let g = gradient_from(w, eps, c, &cur.e, &cur.pair);
        let (d, kappa) = constrained_direction(&g, &cur.e)?;
        let dd = edge_dot(d.values(), d.values());
        let gg = edge_dot(g.values(), g.values());
        if dd.sqrt() <= config.stationarity_tol * gg.sqrt() {
            break InnerStatus::Converged;
        }
        if config.step_rule == StepRule::BarzilaiBorwein {
            if let Some((pe, pd)) = &prev {
                let sv: Vec<f64> = cur.e.values().iter().zip(pe.values()).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = pd.values().iter().zip(d.values()).map(|(a, b)| a - b).collect();
                let sy = edge_dot(&sv, &yv);
                if sy > 0.0 {
                    h = (edge_dot(&sv, &sv) / sy).max(config.h_min);
                }
            }
        }
        let cap = cur.f / (eps * dd);
        let mut h_try = h.min(cap);
        let next = loop {
            let mut e = cur.e.clone();
            e.axpy(h_try, &d);
            let trial = evaluate(w, k, eps, c, normalized(e)?)?;
            if trial.f <= cur.f {
                break Some(trial);
            }
            h_try *= 0.5;
            h = h.min(h_try);
            streak = 0;
            if h_try < config.h_min {
                break None;
            }
        };
        let Some(next) = next else {
            break InnerStatus::Stalled;
        };
        steps += 1;
        streak += 1;
        if streak >= config.growth_streak {
            h *= 2.0;
            streak = 0;
        }
        let rel = (next.f - cur.f).abs() / next.f.abs().max(f64::MIN_POSITIVE);
        if config.record_trace {
            trace.push(TraceRow {
                step: steps,
                h: h_try,
                f: next.f,
                kappa,
                min_entry: next.min_entry,
                norm: laplacian_norm(&next.e),
            });
        }
        prev = Some((std::mem::replace(&mut cur, next).e, d));
        if rel <= config.tol && !config.coalesced(&cur.pair) {
            break InnerStatus::Converged;
        }
    };
    finish(w, eps, c, cur, steps, status, trace, config)
}

/// Moves a converged state at `ε0` to `ε1 > ε0`.
///
/// Starts from `(ε0/ε1) E_{ε0}`, which has `‖L(E)‖ = ε0/ε1 < 1`, integrates the
/// unconstrained flow `Ė = −G_{ε1,c}(E)` until the norm reaches one, then runs the
/// constrained flow. If the pair coalesces before unit norm, `W + ε1 E` is scaled
/// about `W` to land exactly on the sphere while keeping the coalescence.
pub fn free_flow_rescale(
    prev: &InnerState,
    eps1: f64,
    w: &WeightMatrix,
    k: usize,
    c: f64,
    config: &InnerConfig,
) -> Result<InnerState> {
    config.validate()?;
    let eps0 = prev.eps;
    if !(eps1 >= eps0) {
        return Err(Error::InvalidInput(format!("free flow needs eps1 >= eps0, got {eps1} < {eps0}")));
    }
    let mut cur = evaluate(w, k, eps1, c, prev.e.scaled(eps0 / eps1))?;
    let mut h = config.h0;
    let mut steps = 0;
    let mut reached = (laplacian_norm(&cur.e) - 1.0).abs() <= 1e-12;
    while !reached && steps < config.max_steps {
        if config.coalesced(&cur.pair) {
            let e = rescale_coalesced(w, eps1, &cur.e)?;
            let p = evaluate(w, k, eps1, c, e)?;
            return finish(w, eps1, c, p, steps, InnerStatus::Coalesced, Vec::new(), config);
        }
        let g = gradient_from(w, eps1, c, &cur.e, &cur.pair);
        let gg = edge_dot(g.values(), g.values());
        let cap = cur.f / (eps1 * gg);
        let mut h_try = h.min(cap);
        let accepted = loop {
            // largest admissible step: stop exactly on the unit sphere
            let t_hit = sphere_hit(&cur.e, &g, h_try);
            let t = t_hit.unwrap_or(h_try);
            let mut e = cur.e.clone();
            e.axpy(-t, &g);
            if t_hit.is_some() {
                e = normalized(e)?;
            }
            let trial = evaluate(w, k, eps1, c, e)?;
            if trial.f <= cur.f {
                break Some((trial, t_hit.is_some()));
            }
            h_try *= 0.5;
            h = h.min(h_try);
            if h_try < config.h_min {
                break None;
            }
        };
        let Some((trial, hit)) = accepted else { break };
        steps += 1;
        cur = trial;
        reached = hit;
    }
    let norm_not_reached = !reached;
    if norm_not_reached {
        let e = normalized(cur.e)?;
        cur = evaluate(w, k, eps1, c, e)?;
    }
    let mut st = run_flow(w, k, eps1, c, cur, config.h0, config)?;
    st.steps += steps;
    st.norm_not_reached = norm_not_reached;
    Ok(st)
}

/// Smallest `t ∈ (0, h]` with `‖L(E − tG)‖ = 1`, if any.
fn sphere_hit(e: &PatternMatrix, g: &PatternMatrix, h: f64) -> Option<f64> {
    // ‖L(E − tG)‖² = ‖L(E)‖² − 2t⟨L*L(E), G⟩ + t²‖L(G)‖²
    let me = adjoint_of_laplacian(e);
    let a = laplacian_norm(g).powi(2);
    let b = -2.0 * edge_dot(me.values(), g.values());
    let c0 = laplacian_norm(e).powi(2) - 1.0;
    smallest_positive_root(a, b, c0).filter(|&t| t <= h)
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a.abs() < f64::MIN_POSITIVE {
        return (b != 0.0).then(|| -c / b).filter(|t| *t > 0.0);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { f64::NAN }];
    roots.sort_by(|x, y| x.total_cmp(y));
    roots.into_iter().find(|t| *t > 0.0)
}

/// Given a coalesced `W + εE`, returns `E'` with `‖L(E')‖ = 1` and
/// `W + εE' = s (W + εE)` for some `s > 0`, so the coalescence is kept.
fn rescale_coalesced(w: &WeightMatrix, eps: f64, e: &PatternMatrix) -> Result<PatternMatrix> {
    let a = w.perturbed(eps, e);
    let la = laplacian(&a);
    let lw = laplacian(w);
    let aa = la.inner(&la)?;
    let ab = la.inner(&lw)?;
    let bb = lw.inner(&lw)?;
    // ‖s L(A) − L(W)‖² = ε²
    let disc = ab * ab - aa * (bb - eps * eps);
    if aa <= 0.0 || disc < 0.0 {
        return normalized(e.clone());
    }
    let sq = disc.sqrt();
    let roots = [(ab - sq) / aa, (ab + sq) / aa];
    let s = roots
        .into_iter()
        .filter(|s| *s > 0.0)
        .min_by(|x, y| (x - 1.0).abs().total_cmp(&(y - 1.0).abs()));
    let Some(s) = s else {
        return normalized(e.clone());
    };
    let values = a
        .values()
        .iter()
        .zip(w.weights())
        .map(|(av, wv)| (s * av - wv) / eps)
        .collect();
    PatternMatrix::from_values(e.pattern().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparsityPattern;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn path3() -> WeightMatrix {
        WeightMatrix::from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> WeightMatrix {
        loop {
            let trip: Vec<_> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect::<Vec<_>>()
                .into_iter()
                .filter_map(|(i, j)| (rng.gen::<f64>() < 0.7).then(|| (i, j, rng.gen_range(0.5..2.0))))
                .collect();
            if let Ok(w) = WeightMatrix::from_triplets(n, trip) {
                if w.pattern().num_edges() >= n {
                    return w;
                }
            }
        }
    }

    fn random_direction(rng: &mut ChaCha8Rng, w: &WeightMatrix) -> PatternMatrix {
        let v = (0..w.weights().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalized(PatternMatrix::from_values(w.pattern().clone(), v).unwrap()).unwrap()
    }

    #[test]
    fn zero_direction_gives_the_gap() {
        let w = path3();
        let e = PatternMatrix::zeros(w.pattern().clone());
        assert!((functional_f(&w, 1, 0.3, &e).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn reducing_an_edge_lowers_f_on_the_path() {
        let w = path3();
        let e = PatternMatrix::from_values(w.pattern().clone(), vec![-1.0, 0.0]).unwrap();
        let mut last = 1.0;
        for eps in [0.01, 0.05, 0.1] {
            let f = functional_f(&w, 1, eps, &e).unwrap();
            assert!(f < last);
            last = f;
        }
    }

    #[test]
    fn penalty_examples() {
        let w = WeightMatrix::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        let e = PatternMatrix::from_values(w.pattern().clone(), vec![-1.5]).unwrap();
        assert!((penalty_q(&w, 1.0, &e).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(penalty_q(&w, 0.5, &e).unwrap(), 0.0);
        // active residual 1 − 1.5 t: Q(t) = (1.5 t − 1)² for t > 2/3
        for t in [1.0, 1.5, 2.0, 3.0] {
            let q = penalty_q(&w, t, &e).unwrap();
            assert!((q - (1.5 * t - 1.0f64).powi(2)).abs() < 1e-13);
        }
    }

    #[test]
    fn penalized_gradient_matches_formula() {
        let w = path3();
        let e = PatternMatrix::from_values(w.pattern().clone(), vec![-1.3, 0.2]).unwrap();
        let g0 = gradient_g(&w, 1, 1.0, &e).unwrap();
        let g0c = penalized_gradient(&w, 1, 1.0, 0.0, &e).unwrap();
        assert_eq!(g0, g0c);
        let g10 = penalized_gradient(&w, 1, 1.0, 10.0, &e).unwrap();
        // w + εe = −0.3 on the first edge
        assert!((g10.values()[0] - g0.values()[0] + 3.0).abs() < 1e-12);
        assert!((g10.values()[1] - g0.values()[1]).abs() < 1e-15);
        let e_pos = PatternMatrix::from_values(w.pattern().clone(), vec![-0.5, 0.2]).unwrap();
        assert_eq!(
            penalized_gradient(&w, 1, 1.0, 10.0, &e_pos).unwrap(),
            gradient_g(&w, 1, 1.0, &e_pos).unwrap()
        );
    }

    #[test]
    fn gradient_undefined_at_coalescence() {
        let w = WeightMatrix::from_triplets(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let e = PatternMatrix::zeros(w.pattern().clone());
        assert!(matches!(gradient_g(&w, 1, 1.0, &e), Err(Error::CoalescedPair { .. })));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 20 {
            let n = rng.gen_range(3..9);
            let w = random_graph(&mut rng, n);
            let k = rng.gen_range(1..n);
            let e = random_direction(&mut rng, &w);
            let eps = 0.2;
            let pair = eigen_pair(&w.perturbed(eps, &e), k).unwrap();
            if pair.gap() < 1e-2 {
                continue;
            }
            let d = random_direction(&mut rng, &w);
            let g = gradient_g(&w, k, eps, &e).unwrap();
            let delta = 1e-6;
            let mut ep = e.clone();
            ep.axpy(delta, &d);
            let mut em = e.clone();
            em.axpy(-delta, &d);
            let fd = (functional_f(&w, k, eps, &ep).unwrap() - functional_f(&w, k, eps, &em).unwrap()) / (2.0 * delta);
            let an = eps * g.dot(&d).unwrap();
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
            checked += 1;
        }
    }

    #[test]
    fn gradient_is_nonzero_off_coalescence() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..30 {
            let n = rng.gen_range(3..9);
            let w = random_graph(&mut rng, n);
            let k = rng.gen_range(1..n);
            let e = PatternMatrix::zeros(w.pattern().clone());
            if let Ok(g) = gradient_g(&w, k, 1.0, &e) {
                assert!(g.norm() > 0.0);
            }
        }
    }

    #[test]
    fn kappa_limits() {
        let w = path3();
        let e = normalized(PatternMatrix::from_values(w.pattern().clone(), vec![1.0, 0.0]).unwrap()).unwrap();
        let m = adjoint_of_laplacian(&e);
        assert!((multiplier_kappa(&m, &e).unwrap() - 1.0).abs() < 1e-14);
        // M = (1.5, 0.5)/‖·‖ up to scale; (1, −3) is orthogonal to it
        let orth = PatternMatrix::from_values(w.pattern().clone(), vec![m.values()[1], -m.values()[0]]).unwrap();
        assert!(multiplier_kappa(&orth, &e).unwrap().abs() < 1e-14);
        let zero = PatternMatrix::zeros(w.pattern().clone());
        assert!(matches!(multiplier_kappa(&zero, &zero), Err(Error::DegenerateConstraint(_))));
    }

    #[test]
    fn inner_flow_is_monotone_and_stays_on_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = InnerConfig { record_trace: true, ..InnerConfig::default() };
        for _ in 0..5 {
            let n = rng.gen_range(4..9);
            let w = random_graph(&mut rng, n);
            let k = rng.gen_range(1..n);
            let e0 = random_direction(&mut rng, &w);
            let st = inner_minimize(&w, k, 0.3, 0.0, &e0, &cfg).unwrap();
            let mut last = f64::INFINITY;
            for row in &st.trace {
                assert!(row.f <= last);
                assert!((row.norm - 1.0).abs() <= 1e-10);
                last = row.f;
            }
            assert!((laplacian_norm(&st.e) - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn inner_converges_to_stationary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let w = random_graph(&mut rng, 6);
        let cfg = InnerConfig { tol: 1e-15, stationarity_tol: 1e-8, max_steps: 100_000, ..InnerConfig::default() };
        let e0 = random_direction(&mut rng, &w);
        let st = inner_minimize(&w, 2, 0.2, 0.0, &e0, &cfg).unwrap();
        assert_eq!(st.status, InnerStatus::Converged);
        let m = adjoint_of_laplacian(&st.e);
        let mut r = st.gradient.clone();
        r.axpy(-st.kappa, &m);
        assert!(r.norm() <= 1e-6 * st.gradient.norm());
        assert!((st.fprime - st.kappa).abs() <= 1e-6 * st.kappa.abs());
        // a stationary state does not move under an Euler step
        let next = euler_step(&w, 2, &st, 1e-3, &cfg).unwrap();
        let mut diff = next.e.clone();
        diff.axpy(-1.0, &st.e);
        assert!(diff.norm() < 1e-9);
    }

    // To first order F_ε(E) = F_0 + ε⟨G_0, E⟩, whose minimizer on the sphere
    // solves L*(L(E)) ∝ −G_0.
    #[test]
    fn tiny_eps_matches_first_order_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let w = random_graph(&mut rng, 6);
        let k = 2;
        let m = w.weights().len();
        let zero = PatternMatrix::zeros(w.pattern().clone());
        let g0 = gradient_g(&w, k, 0.0, &zero).unwrap();
        let mut op = nalgebra::DMatrix::zeros(m, m);
        for j in 0..m {
            let mut unit = zero.clone();
            unit.values_mut()[j] = 1.0;
            let col = adjoint_of_laplacian(&unit);
            for i in 0..m {
                op[(i, j)] = col.values()[i];
            }
        }
        let rhs = nalgebra::DVector::from_iterator(m, g0.values().iter().map(|v| -v));
        let sol = op.lu().solve(&rhs).unwrap();
        let e_star = normalized(PatternMatrix::from_values(w.pattern().clone(), sol.iter().copied().collect()).unwrap()).unwrap();
        let gap0 = eigen_pair(&w, k).unwrap().gap();
        let cfg = InnerConfig { tol: 1e-15, stationarity_tol: 1e-7, max_steps: 100_000, ..InnerConfig::default() };
        let st = inner_minimize(&w, k, 1e-4, 0.0, &random_direction(&mut rng, &w), &cfg).unwrap();
        assert!((st.gap - gap0).abs() < 1e-3 * gap0);
        let mut diff = st.e.clone();
        diff.axpy(-1.0, &e_star);
        assert!(laplacian_norm(&diff) < 1e-2, "{} {:?} {}", laplacian_norm(&diff), st.status, st.steps);
    }

    #[test]
    fn k2_has_a_single_direction() {
        let w = WeightMatrix::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        // ‖L(E)‖ = 2|e|, so the sphere is {±1/2}; F = 2(1 + 0.5 e) is smallest at e = −1/2
        let e0 = PatternMatrix::from_values(w.pattern().clone(), vec![-0.3]).unwrap();
        let st = inner_minimize(&w, 1, 0.5, 0.0, &e0, &InnerConfig::default()).unwrap();
        assert!((st.e.values()[0] + 0.5).abs() < 1e-12);
        assert!((st.gap - 1.5).abs() < 1e-12);
    }

    #[test]
    fn inner_reaches_coalescence_beyond_the_threshold() {
        let w = path3();
        let e0 = PatternMatrix::from_values(w.pattern().clone(), vec![-1.0, -0.2]).unwrap();
        let st = inner_minimize(&w, 1, 2.5, 0.0, &e0, &InnerConfig::default()).unwrap();
        assert_eq!(st.status, InnerStatus::Coalesced);
        assert!(st.gap <= 1e-8);
    }

    #[test]
    fn free_flow_with_equal_eps_is_a_no_op_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let w = random_graph(&mut rng, 6);
        let cfg = InnerConfig::default();
        let st = inner_minimize(&w, 2, 0.2, 0.0, &random_direction(&mut rng, &w), &cfg).unwrap();
        let again = free_flow_rescale(&st, 0.2, &w, 2, 0.0, &cfg).unwrap();
        assert!(!again.norm_not_reached);
        assert!(again.f_value <= st.f_value);
    }

    #[test]
    fn free_flow_handoff_beats_naive_renormalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let w = random_graph(&mut rng, 7);
        let k = 3;
        let cfg = InnerConfig::default();
        let st = inner_minimize(&w, k, 0.3, 0.0, &random_direction(&mut rng, &w), &cfg).unwrap();
        assert!(st.kappa < 0.0);
        // the free flow grows the norm at t = 0: d/dt ‖L(E)‖² = −2⟨G, L*L(E)⟩ > 0
        let scaled = st.e.scaled(0.3 / 0.32);
        let g = gradient_g(&w, k, 0.32, &scaled).unwrap();
        assert!(edge_dot(g.values(), adjoint_of_laplacian(&scaled).values()) < 0.0);
        let handoff = free_flow_rescale(&st, 0.32, &w, k, 0.0, &cfg).unwrap();
        let naive = inner_state_at(&w, k, 0.32, 0.0, st.e.clone(), &cfg).unwrap();
        assert!(!handoff.norm_not_reached);
        assert!(handoff.f_value <= naive.f_value + 1e-12);
    }

    #[test]
    fn coalesced_rescale_keeps_unit_norm() {
        let w = path3();
        // W + εE has the first edge removed: coalesced but off the sphere
        let eps = 2.0;
        let e = PatternMatrix::from_values(w.pattern().clone(), vec![-1.0 / eps, 0.1]).unwrap();
        let e2 = rescale_coalesced(&w, eps, &e).unwrap();
        assert!((laplacian_norm(&e2) - 1.0).abs() < 1e-12);
        let f = functional_f(&w, 1, eps, &e2).unwrap();
        assert!(f < 1e-12);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let rows = [TraceRow { step: 1, h: 0.1, f: 1.0, kappa: -1.0, min_entry: 0.5, norm: 1.0 }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,h,F,kappa,min_entry,norm\n1,"));
    }

    #[test]
    fn pattern_mismatch_is_reported() {
        let w = path3();
        let other = PatternMatrix::zeros(Arc::new(SparsityPattern::complete(3)));
        assert_eq!(functional_f(&w, 1, 1.0, &other), Err(Error::PatternMismatch));
    }
}
