//! Outer iteration: find the smallest `ε` at which the minimized gap `f(ε)` vanishes.
//!
//! `f` is evaluated by the inner flow. Newton steps use `f′(ε) = ⟨G_{ε,c}, E⟩` at the
//! inner minimizer, safeguarded by a bracket `[ε_lb, ε_ub]`. Upper bounds come either
//! from a coalesced inner solve or from [`crate::polish::polish`], which turns a nearly
//! coalesced iterate into an admissible matrix with an exactly coalesced pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eigen::{check_k, eig_symmetric, GapReport};
use crate::error::{Error, Result};
use crate::graph::{laplacian, laplacian_norm, laplacian_norm_of, OnPattern, PatternMatrix, WeightMatrix};
use crate::inner::{
    eigen_pair, free_flow_rescale, gradient_g, inner_minimize, InnerConfig, InnerState, InnerStatus,
};
use crate::polish::{polish, refine, PolishConfig};

/// Settings for Newton–bisection and the penalty ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterConfig {
    pub m_max: usize,
    /// `f(ε)` counts as zero below `tol_f · max(1, |λ_{k+1}|)`.
    pub tol_f: f64,
    /// Stop once `ε_ub − ε_lb ≤ tol_eps · max(1, ε_ub)`.
    pub tol_eps: f64,
    pub eps_lb0: f64,
    /// Known upper bound, if any; otherwise one is searched for.
    pub eps_ub0: Option<f64>,
    /// Penalty values `c_0 = 0 < c_1 < …`.
    pub c_schedule: Vec<f64>,
    pub seed: u64,
    /// Extra random starting directions tried at the first inner solve.
    pub restarts: usize,
    /// Give up when `ε` would exceed `ceiling_factor · ‖L(W)‖_F`.
    pub ceiling_factor: f64,
    /// Entries of `W + εE` above `−neg_tol · max(1, max w)` count as nonnegative.
    pub neg_tol: f64,
    pub fprime_floor: f64,
    /// Try the coalescence correction when the inner gap drops below this fraction of the initial gap.
    pub polish_ratio: f64,
    /// Also stop the penalty ramp once the refined candidate of a stage is a
    /// local extremizer, i.e. its certificate is at most this value. `None`
    /// keeps ramping until the flow minimizer itself is nonnegative.
    pub refined_accept: Option<f64>,
    pub inner: InnerConfig,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            m_max: 50,
            tol_f: 1e-8,
            tol_eps: 1e-6,
            eps_lb0: 0.0,
            eps_ub0: None,
            c_schedule: vec![0.0, 10.0, 100.0, 1000.0],
            seed: 0,
            restarts: 1,
            ceiling_factor: 64.0,
            neg_tol: 1e-10,
            fprime_floor: 1e-12,
            polish_ratio: 0.25,
            refined_accept: Some(1e-6),
            inner: InnerConfig::default(),
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.m_max == 0 {
            return bad("m_max must be positive");
        }
        if !(self.tol_f > 0.0 && self.tol_eps > 0.0 && self.fprime_floor > 0.0 && self.ceiling_factor > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.refined_accept.is_some_and(|t| !(t > 0.0)) {
            return bad("refined_accept must be positive");
        }
        if !(self.eps_lb0 >= 0.0) {
            return bad("eps_lb0 must be nonnegative");
        }
        if let Some(ub) = self.eps_ub0 {
            if !(ub > self.eps_lb0) {
                return bad("eps_ub0 must exceed eps_lb0");
            }
        }
        match self.c_schedule.first() {
            Some(&c) if c == 0.0 => {}
            _ => return bad("c_schedule must start at 0"),
        }
        if self.c_schedule.windows(2).any(|p| !(p[1] > p[0])) {
            return bad("c_schedule must be strictly increasing");
        }
        Ok(())
    }

    fn coalesced(&self, f: f64, lambda: f64) -> bool {
        f <= self.tol_f * lambda.abs().max(1.0)
    }
}

/// What the outer loop did after one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterAction {
    Newton,
    /// Newton step limited to doubling because no upper bound is known yet.
    Capped,
    /// Iterate fell outside the bracket, replaced by the midpoint.
    Midpoint,
    /// `f(ε) = 0`: `ε` became the new upper bound.
    Bisection,
    Done,
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterTraceRow {
    pub c: f64,
    pub eps: f64,
    pub f: f64,
    pub fprime: f64,
    pub kappa: f64,
    pub inner_steps: usize,
    pub inner_status: InnerStatus,
    pub eps_lb: f64,
    pub eps_ub: f64,
    pub action: OuterAction,
}

/// Best admissible coalesced matrix found so far.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperCandidate {
    pub eps: f64,
    pub w_star: PatternMatrix,
    pub gap: f64,
    pub polished: bool,
    /// Smallest entry of the unclamped flow iterate this candidate came from.
    pub flow_min_entry: f64,
}

/// Result of Newton–bisection at one penalty value.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub c: f64,
    pub eps_lb: f64,
    pub eps_ub: f64,
    pub upper: Option<UpperCandidate>,
    /// Inner minimizer at the largest `ε` with `f(ε) > 0`.
    pub lb_state: Option<InnerState>,
    pub trace: Vec<OuterTraceRow>,
    pub converged: bool,
}

/// Computed structured distance to ambiguity and its extremizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SdaResult {
    pub k: usize,
    /// `‖L(W*) − L(W)‖_F`, an upper bound for `δ_k(W)`.
    pub epsilon_star: f64,
    /// `(W* − W)/ε*`; zero when `ε* = 0`.
    pub e_star: PatternMatrix,
    /// `W + ε*E*`.
    pub w_star: PatternMatrix,
    pub certificate_residual: f64,
    /// `λ_{k+1} − λ_k` of `L(W*)`.
    pub terminal_gap: f64,
    pub bracket: [f64; 2],
    pub trace: Vec<OuterTraceRow>,
    pub c_used: f64,
    pub restarts: usize,
    /// Unperturbed gap data; `scaled_gap` is a lower bound for `ε*`.
    pub gap: GapReport,
    /// Every entry of `W*` is at least `−neg_tol`.
    pub feasible: bool,
    /// The flow reached a nonnegative minimizer for some penalty value.
    pub penalty_satisfied: bool,
    pub converged: bool,
}

impl SdaResult {
    /// `W*` as a weight matrix; fails if the result is infeasible.
    pub fn w_star_weights(&self) -> Result<WeightMatrix> {
        if !self.feasible {
            return Err(Error::PenaltyScheduleExhausted { min_weight: self.w_star.min_value() });
        }
        let values = self.w_star.values().iter().map(|v| v.max(0.0)).collect();
        WeightMatrix::new(self.w_star.pattern().clone(), values)
    }

    /// Turns an infeasible result into [`Error::PenaltyScheduleExhausted`].
    pub fn into_feasible(self) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(Error::PenaltyScheduleExhausted { min_weight: self.w_star.min_value() })
        }
    }
}

/// Serializable summary of an [`SdaResult`]. Edge lists are `[i, j, value]`
/// with 0-based vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdaReport {
    pub k: usize,
    pub n: usize,
    pub epsilon_star: f64,
    pub gap: GapReport,
    pub certificate_residual: f64,
    pub terminal_gap: f64,
    pub bracket: [f64; 2],
    pub c_used: f64,
    pub restarts: usize,
    pub feasible: bool,
    pub penalty_satisfied: bool,
    pub converged: bool,
    pub w_star: Vec<(usize, usize, f64)>,
    pub e_star: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<OuterTraceRow>>,
}

fn edge_list(m: &PatternMatrix) -> Vec<(usize, usize, f64)> {
    m.pattern().edges().iter().zip(m.values()).map(|(&(i, j), &v)| (i, j, v)).collect()
}

impl SdaResult {
    pub fn report(&self, with_trace: bool) -> SdaReport {
        SdaReport {
            k: self.k,
            n: self.w_star.pattern().n(),
            epsilon_star: self.epsilon_star,
            gap: self.gap,
            certificate_residual: self.certificate_residual,
            terminal_gap: self.terminal_gap,
            bracket: self.bracket,
            c_used: self.c_used,
            restarts: self.restarts,
            feasible: self.feasible,
            penalty_satisfied: self.penalty_satisfied,
            converged: self.converged,
            w_star: edge_list(&self.w_star),
            e_star: edge_list(&self.e_star),
            trace: with_trace.then(|| self.trace.clone()),
        }
    }
}

/// `|⟨L(W*) − L(W), L(W*)⟩| / ‖L(W*)‖²`; vanishes at extremizers because scaling
/// `W*` keeps its pair coalesced. A `W*` that is zero up to rounding (as for `K2`)
/// satisfies the condition trivially and gives 0.
pub fn certificate<A: OnPattern + ?Sized, B: OnPattern + ?Sized>(w: &A, w_star: &B) -> f64 {
    let ls = laplacian(w_star);
    let l = laplacian(w);
    let d = ls.matrix() - l.matrix();
    let nn = ls.matrix().norm_squared();
    if nn.sqrt() <= 64.0 * f64::EPSILON * l.matrix().norm() {
        return 0.0;
    }
    d.dot(ls.matrix()).abs() / nn
}

/// Starting point: `ε0 = gap/√2` and `E0 = −G_0/‖L(G_0)‖` with `G_0` the gradient at `E = 0`.
/// An already coalesced pair gives `(0, 0)`.
pub fn initial_guess(w: &WeightMatrix, k: usize) -> Result<(f64, PatternMatrix)> {
    check_k(k, w.n())?;
    let zero = PatternMatrix::zeros(w.pattern().clone());
    let pair = eigen_pair(w, k)?;
    if pair.is_coalesced() {
        return Ok((0.0, zero));
    }
    let g0 = gradient_g(w, k, 0.0, &zero)?;
    let nrm = laplacian_norm(&g0);
    if nrm == 0.0 {
        return Err(Error::DegenerateConstraint(0.0));
    }
    Ok((pair.gap() / std::f64::consts::SQRT_2, g0.scaled(-1.0 / nrm)))
}

/// `f_c(ε)`, `f_c′(ε)` and the inner minimizer, warm-started from `warm` when it
/// lies at a smaller `ε`, otherwise from the initial guess direction.
pub fn f_and_derivative(
    w: &WeightMatrix,
    k: usize,
    eps: f64,
    c: f64,
    warm: Option<&InnerState>,
    config: &OuterConfig,
) -> Result<(f64, f64, InnerState)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let st = match warm {
        Some(prev) if prev.eps <= eps => free_flow_rescale(prev, eps, w, k, c, &config.inner)?,
        _ => {
            let (_, e0) = initial_guess(w, k)?;
            if e0.values().iter().all(|v| *v == 0.0) {
                return Err(Error::CoalescedPair { k, gap: 0.0 });
            }
            inner_minimize(w, k, eps, c, &e0, &config.inner)?
        }
    };
    Ok((st.f_value, st.fprime, st))
}

struct Solver<'a> {
    w: &'a WeightMatrix,
    k: usize,
    config: &'a OuterConfig,
    gap0: f64,
    max_w: f64,
    rng: ChaCha8Rng,
    restarts_used: usize,
}

impl<'a> Solver<'a> {
    fn new(w: &'a WeightMatrix, k: usize, config: &'a OuterConfig, gap0: f64) -> Self {
        Self {
            w,
            k,
            config,
            gap0,
            max_w: w.weights().iter().copied().fold(0.0, f64::max),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            restarts_used: 0,
        }
    }

    fn neg_threshold(&self) -> f64 {
        -self.config.neg_tol * self.max_w.max(1.0)
    }

    fn random_direction(&mut self) -> PatternMatrix {
        let values = (0..self.w.weights().len())
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect();
        PatternMatrix::from_values(self.w.pattern().clone(), values).expect("same pattern")
    }

    /// Inner solve at `eps`: free flow from `warm` if possible, else from `e0`
    /// plus the configured random restarts, keeping the lowest `F`.
    fn solve(&mut self, eps: f64, c: f64, warm: Option<&InnerState>, e0: &PatternMatrix) -> Result<InnerState> {
        let inner = &self.config.inner;
        if let Some(prev) = warm {
            if prev.eps <= eps {
                return free_flow_rescale(prev, eps, self.w, self.k, c, inner);
            }
        }
        let mut best = inner_minimize(self.w, self.k, eps, c, e0, inner)?;
        if self.restarts_used == 0 {
            for _ in 0..self.config.restarts {
                let dir = self.random_direction();
                if laplacian_norm(&dir) == 0.0 {
                    continue;
                }
                let st = inner_minimize(self.w, self.k, eps, c, &dir, inner)?;
                if st.f_value < best.f_value {
                    best = st;
                }
            }
            self.restarts_used = self.config.restarts;
        }
        Ok(best)
    }

    /// Admissible coalesced matrix near the state, if one can be built.
    fn upper_from(&self, st: &InnerState) -> Result<Option<UpperCandidate>> {
        let v = st.perturbed(self.w);
        let pol = PolishConfig::default();
        if st.is_coalesced() && st.min_entry >= 0.0 {
            let diff: Vec<f64> = v.values().iter().zip(self.w.weights()).map(|(a, b)| a - b).collect();
            return Ok(Some(UpperCandidate {
                eps: laplacian_norm_of(self.w.pattern(), &diff),
                gap: st.gap,
                w_star: v,
                polished: false,
                flow_min_entry: st.min_entry,
            }));
        }
        if !self.config.polish_ratio.is_finite() || st.gap > self.config.polish_ratio * self.gap0 {
            return Ok(None);
        }
        Ok(polish(self.w, self.k, &v, &pol)?.map(|p| UpperCandidate {
            eps: p.eps,
            w_star: p.w_star,
            gap: p.gap,
            polished: true,
            flow_min_entry: st.min_entry,
        }))
    }

    fn newton_bisection(&mut self, c: f64, eps_start: f64, e0: &PatternMatrix, warm: Option<InnerState>) -> Result<NewtonOutcome> {
        let cfg = self.config;
        let ceiling = cfg.ceiling_factor * laplacian_norm(self.w);
        let mut lb = cfg.eps_lb0;
        let mut ub = cfg.eps_ub0.unwrap_or(f64::INFINITY);
        let mut upper: Option<UpperCandidate> = None;
        let mut lb_state = warm;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut eps = eps_start;
        if !(eps > lb && eps < ub) {
            eps = if ub.is_finite() { 0.5 * (lb + ub) } else { lb.max(f64::MIN_POSITIVE) * 2.0 };
        }
        for _ in 0..cfg.m_max {
            let warm_ref = lb_state.as_ref().filter(|s| s.eps <= eps);
            let st = self.solve(eps, c, warm_ref, e0)?;
            let lam = st.pair.lambda_k1;
            let mut next;
            let mut action;
            let mut newton_landed = false;
            if st.is_coalesced() || cfg.coalesced(st.f_value, lam) {
                if let Some(cand) = self.upper_from(&st)? {
                    if cand.eps < upper.as_ref().map_or(f64::INFINITY, |u| u.eps) {
                        upper = Some(cand);
                    }
                }
                ub = ub.min(eps);
                next = 0.5 * (lb + ub);
                action = OuterAction::Bisection;
            } else {
                // a flow that ran out of steps still decreased F from above, so a
                // positive value with negative slope is kept as a lower bound
                let regular = st.status != InnerStatus::Coalesced && st.fprime < 0.0 && st.f_value > 0.0;
                if regular && eps > lb {
                    lb = eps;
                }
                if let Some(cand) = self.upper_from(&st)? {
                    if cand.eps < upper.as_ref().map_or(f64::INFINITY, |u| u.eps) {
                        ub = ub.min(cand.eps);
                        upper = Some(cand);
                    }
                }
                let slope = st.fprime.abs().max(cfg.fprime_floor);
                next = eps + st.f_value / slope;
                action = OuterAction::Newton;
                if !ub.is_finite() && next > 2.0 * eps {
                    next = 2.0 * eps;
                    action = OuterAction::Capped;
                }
                if ub.is_finite() && regular && (next - ub).abs() <= cfg.tol_eps * ub.max(1.0) {
                    newton_landed = true;
                }
                if ub.is_finite() && !(next > lb && next < ub) {
                    next = 0.5 * (lb + ub);
                    action = OuterAction::Midpoint;
                }
                if regular {
                    lb_state = Some(st.clone());
                }
            }
            let width_tol = cfg.tol_eps * ub.max(1.0);
            // a Newton prediction from below that lands on the upper bound closes the bracket
            let done = ub.is_finite() && upper.is_some() && (ub - lb <= width_tol || newton_landed);
            trace.push(OuterTraceRow {
                c,
                eps,
                f: st.f_value,
                fprime: st.fprime,
                kappa: st.kappa,
                inner_steps: st.steps,
                inner_status: st.status,
                eps_lb: lb,
                eps_ub: ub,
                action: if done { OuterAction::Done } else { action },
            });
            if done {
                converged = true;
                break;
            }
            if next > ceiling {
                return Err(Error::NoUpperBound(ceiling));
            }
            // a Newton increment below resolution without an upper bound: step just past it
            let resolution = 0.5 * cfg.tol_eps * eps.max(1.0);
            if (next - eps).abs() < resolution && !ub.is_finite() {
                next = eps + resolution;
            }
            if next == eps {
                break;
            }
            eps = next;
        }
        Ok(NewtonOutcome { c, eps_lb: lb, eps_ub: ub, upper, lb_state, trace, converged })
    }
}

/// Newton–bisection at a fixed penalty `c`, started from [`initial_guess`].
pub fn newton_bisection(w: &WeightMatrix, k: usize, c: f64, config: &OuterConfig) -> Result<NewtonOutcome> {
    config.validate()?;
    let gap = crate::eigen::GapReport::from_eigen(&eig_symmetric(&laplacian(w))?, k)?;
    let (eps0, e0) = initial_guess(w, k)?;
    if eps0 == 0.0 {
        return Err(Error::CoalescedPair { k, gap: gap.gap });
    }
    Solver::new(w, k, config, gap.gap).newton_bisection(c, eps0, &e0, None)
}

/// Structured distance to ambiguity `δ_k(W)` (as an upper bound) with its extremizer.
///
/// Runs Newton–bisection for each penalty value in turn and stops at the first
/// one whose flow minimizer satisfies `W + εE ≥ 0`.
pub fn compute_sda(w: &WeightMatrix, k: usize, config: &OuterConfig) -> Result<SdaResult> {
    config.validate()?;
    check_k(k, w.n())?;
    let eig = eig_symmetric(&laplacian(w))?;
    let gap = GapReport::from_eigen(&eig, k)?;
    let zero = PatternMatrix::zeros(w.pattern().clone());
    if gap.is_coalesced() {
        return Ok(SdaResult {
            k,
            epsilon_star: 0.0,
            e_star: zero,
            w_star: w.as_pattern_matrix(),
            certificate_residual: 0.0,
            terminal_gap: gap.gap,
            bracket: [0.0, 0.0],
            trace: Vec::new(),
            c_used: 0.0,
            restarts: 0,
            gap,
            feasible: true,
            penalty_satisfied: true,
            converged: true,
        });
    }
    let (eps0, e0) = initial_guess(w, k)?;
    let mut solver = Solver::new(w, k, config, gap.gap);
    let mut trace = Vec::new();
    let mut warm: Option<InnerState> = None;
    // (stage outcome, refined admissible matrix and its distance)
    let mut best: Option<(NewtonOutcome, PatternMatrix, f64)> = None;
    let mut accepted = false;
    let refine_config = PolishConfig { max_iter: 200, ..PolishConfig::default() };
    for &c in &config.c_schedule {
        let start = warm.as_ref().map_or(eps0, |s| s.eps);
        let out = solver.newton_bisection(c, start, &e0, warm.clone())?;
        trace.extend(out.trace.iter().copied());
        warm = out.lb_state.clone().or(warm);
        let Some(upper) = &out.upper else { continue };
        let nonneg = upper.flow_min_entry >= solver.neg_threshold();
        let mut w_star = upper.w_star.clone();
        let mut eps = upper.eps;
        // the flow point below the bracket is often closer to the extremizer than the upper one
        let starts = std::iter::once(upper.w_star.clone()).chain(out.lb_state.as_ref().map(|s| s.perturbed(w)));
        for s in starts {
            if let Some(p) = refine(w, k, &s, &refine_config)? {
                if p.eps < eps {
                    (w_star, eps) = (p.w_star, p.eps);
                }
            }
        }
        let extremal = config.refined_accept.is_some_and(|tol| certificate(w, &w_star) <= tol);
        if best.as_ref().map_or(true, |b| eps < b.2) {
            best = Some((out, w_star, eps));
        }
        if nonneg || extremal {
            accepted = nonneg;
            break;
        }
    }
    let Some((out, w_star, _)) = best else {
        return Err(Error::NoUpperBound(config.ceiling_factor * laplacian_norm(w)));
    };
    let diff: Vec<f64> = w_star.values().iter().zip(w.weights()).map(|(a, b)| a - b).collect();
    let epsilon_star = laplacian_norm_of(w.pattern(), &diff);
    let e_star = if epsilon_star > 0.0 {
        PatternMatrix::from_values(w.pattern().clone(), diff.iter().map(|d| d / epsilon_star).collect())?
    } else {
        zero
    };
    let terminal_gap = eigen_pair(&w_star, k)?.gap();
    Ok(SdaResult {
        k,
        epsilon_star,
        e_star,
        certificate_residual: certificate(w, &w_star),
        terminal_gap,
        bracket: [out.eps_lb, out.eps_ub],
        trace,
        c_used: out.c,
        restarts: config.restarts,
        gap,
        feasible: w_star.min_value() >= solver.neg_threshold(),
        penalty_satisfied: accepted,
        converged: out.converged,
        w_star,
    })
}

/// One row of a `k` sweep. `delta` is `None` when the solver failed for this `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub gap: f64,
    pub scaled_gap: f64,
    pub delta: Option<f64>,
    pub error: Option<String>,
}

/// Per-`k` gaps and distances with their maximizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub k_opt_gap: Option<usize>,
    pub k_opt_delta: Option<usize>,
}

/// Index of the largest value, earliest on ties.
pub(crate) fn argmax_first(items: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in items {
        if v.is_nan() {
            continue;
        }
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Gaps and SDA for `k = k_min..=k_max`, with `k_opt` for both indicators.
pub fn k_opt_sweep(w: &WeightMatrix, k_min: usize, k_max: usize, config: &OuterConfig) -> Result<SweepTable> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidInput(format!("empty k range {k_min}..={k_max}")));
    }
    check_k(k_max, w.n())?;
    let eig = eig_symmetric(&laplacian(w))?;
    let mut rows = Vec::new();
    for k in k_min..=k_max {
        let g = GapReport::from_eigen(&eig, k)?;
        let (delta, error) = match compute_sda(w, k, config) {
            Ok(r) if r.feasible => (Some(r.epsilon_star), None),
            Ok(r) => (None, Some(Error::PenaltyScheduleExhausted { min_weight: r.w_star.min_value() }.to_string())),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(SweepRow { k, gap: g.gap, scaled_gap: g.scaled_gap, delta, error });
    }
    Ok(SweepTable {
        k_opt_gap: argmax_first(rows.iter().map(|r| (r.k, r.gap))),
        k_opt_delta: argmax_first(rows.iter().filter_map(|r| r.delta.map(|d| (r.k, d)))),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> WeightMatrix {
        WeightMatrix::from_triplets(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn k2_distance_is_twice_the_weight() {
        let w = WeightMatrix::from_triplets(2, [(0, 1, 1.0)]).unwrap();
        let r = compute_sda(&w, 1, &OuterConfig::default()).unwrap();
        assert!((r.epsilon_star - 2.0).abs() < 1e-6, "{}", r.epsilon_star);
        assert!(r.feasible && r.converged);
        assert!(r.terminal_gap <= 1e-8);
        assert_eq!(certificate(&w, &r.w_star), 0.0);
        let tiny = WeightMatrix::from_triplets(2, [(0, 1, 1e-3)]).unwrap();
        assert!(certificate(&w, &tiny) > 0.9);
    }

    #[test]
    fn k2_newton_is_exact_on_linear_f() {
        let w = WeightMatrix::from_triplets(2, [(0, 1, 3.0)]).unwrap();
        let out = newton_bisection(&w, 1, 0.0, &OuterConfig::default()).unwrap();
        // f(ε) = 6 − ε from ε0 = 6/√2; a single Newton step lands on 6
        assert_eq!(out.trace[0].action, OuterAction::Newton);
        assert!((out.trace[1].eps - 6.0).abs() < 1e-12);
    }

    #[test]
    fn path_distance_matches_closed_form() {
        let r = compute_sda(&path3(), 1, &OuterConfig::default()).unwrap();
        assert!((r.epsilon_star - 15f64.sqrt() / 2.0).abs() < 1e-6, "{}", r.epsilon_star);
        assert!(r.certificate_residual <= 1e-6);
        assert!(r.epsilon_star + 1e-8 >= r.gap.scaled_gap);
    }

    #[test]
    fn initial_guess_on_path() {
        let (eps0, e0) = initial_guess(&path3(), 1).unwrap();
        assert!((eps0 - 1.0 / 2f64.sqrt()).abs() < 1e-13);
        assert!((laplacian_norm(&e0) - 1.0).abs() < 1e-13);
        let w = WeightMatrix::from_triplets(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let (eps0, e0) = initial_guess(&w, 1).unwrap();
        assert_eq!(eps0, 0.0);
        assert_eq!(e0.norm(), 0.0);
        let r = compute_sda(&w, 1, &OuterConfig::default()).unwrap();
        assert_eq!(r.epsilon_star, 0.0);
    }

    #[test]
    fn certificate_negative_control() {
        let w = path3();
        assert_eq!(certificate(&w, &w), 0.0);
        let r = compute_sda(&w, 1, &OuterConfig::default()).unwrap();
        let bent = r.w_star.scaled(1.1);
        assert!(certificate(&w, &bent) >= 1e-2);
    }

    #[test]
    fn config_validation() {
        let mut c = OuterConfig::default();
        c.c_schedule = vec![1.0, 10.0];
        assert!(c.validate().is_err());
        c.c_schedule = vec![0.0, 10.0, 5.0];
        assert!(c.validate().is_err());
        c = OuterConfig { eps_ub0: Some(0.0), ..OuterConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn midpoint_fallback_on_huge_step() {
        // a giant floor on |f′| shrinks every Newton step; a huge one is forced with a tiny slope
        let cfg = OuterConfig { fprime_floor: 1e-12, eps_ub0: Some(3.0), ..OuterConfig::default() };
        let w = path3();
        let gap = GapReport::from_eigen(&eig_symmetric(&laplacian(&w)).unwrap(), 1).unwrap();
        let (_, e0) = initial_guess(&w, 1).unwrap();
        let mut s = Solver::new(&w, 1, &cfg, gap.gap);
        let out = s.newton_bisection(0.0, 0.2, &e0, None).unwrap();
        assert!(out.converged);
        for row in &out.trace {
            assert!(row.eps_lb < row.eps_ub || row.action == OuterAction::Done);
        }
        let small = OuterConfig { fprime_floor: 1e6, ..cfg.clone() };
        let mut s = Solver::new(&w, 1, &small, gap.gap);
        let _ = s.newton_bisection(0.0, 0.2, &e0, None).unwrap();
    }

    #[test]
    fn argmax_prefers_smaller_k_on_ties() {
        assert_eq!(argmax_first([(4, 1.0), (5, 2.0), (6, 2.0)]), Some(5));
        assert_eq!(argmax_first(std::iter::empty()), None);
    }

    #[test]
    fn sweep_on_disconnected_graph_skips_existing_coalescence() {
        // two triangles joined weakly, plus a third isolated triangle: λ_1 = 0 twice
        let mut t = vec![];
        for b in 0..3 {
            let o = 3 * b;
            t.extend([(o, o + 1, 1.0), (o + 1, o + 2, 1.0), (o, o + 2, 1.0)]);
        }
        t.push((2, 3, 0.1));
        let w = WeightMatrix::from_triplets(9, t).unwrap();
        let table = k_opt_sweep(&w, 1, 3, &OuterConfig::default()).unwrap();
        assert_eq!(table.rows[0].delta, Some(0.0));
        assert_ne!(table.k_opt_delta, Some(1));
        assert!(k_opt_sweep(&w, 3, 2, &OuterConfig::default()).is_err());
    }
}
