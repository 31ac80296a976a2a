//! Dynamic programming on a [`TruncatedMdp`]: discounted value iteration,
//! relative value iteration, policy evaluation / improvement / iteration and
//! stationary distributions.
//!
//! Every solve is single threaded and deterministic.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{Action, State, TruncatedMdp};
use crate::policies::{Policy, PolicyTable};

/// Default reference state for relative solves.
pub const DEFAULT_REFERENCE: State = State::idle(0);

/// Relative slack under which `Transmit` wins a tie against `Wait`.
pub const TIE_TOL: f64 = 1e-7;

/// Largest linear system solved by dense LU.
pub const DENSE_LIMIT: usize = 2000;

/// Target for the per-equation residual of policy evaluation.
pub const EVAL_TOL: f64 = 1e-10;

const DAMPING: f64 = 0.9;
const MAX_EVAL_SWEEPS: usize = 5_000_000;

/// Output of a value-based solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Relative values `h` (average cost) or discounted values `V`.
    pub values: Vec<f64>,
    /// Average cost; `None` for discounted solves.
    pub theta: Option<f64>,
    /// Greedy policy with respect to `values`.
    pub policy: PolicyTable,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub theta: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub n_states: usize,
    pub delta_max: u32,
    pub t_max_trunc: u32,
}

impl SolveResult {
    pub fn summary(&self) -> SolveSummary {
        let cfg = self.policy.config();
        SolveSummary {
            theta: self.theta,
            iterations: self.iterations,
            residual: self.residual,
            n_states: self.values.len(),
            delta_max: cfg.delta_max,
            t_max_trunc: cfg.t_max_trunc,
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.summary())?;
        Ok(())
    }
}

fn q_values(mdp: &TruncatedMdp, s: usize, values: &[f64], gamma: f64) -> (f64, f64) {
    let c = mdp.costs()[s];
    (
        c + gamma * mdp.expect(s, Action::Wait, values),
        c + gamma * mdp.expect(s, Action::Transmit, values),
    )
}

fn pick(q_wait: f64, q_tx: f64) -> (Action, f64) {
    if q_tx <= q_wait + TIE_TOL * q_wait.abs().max(1.0) {
        (Action::Transmit, q_tx)
    } else {
        (Action::Wait, q_wait)
    }
}

/// Greedy policy `argmin_a C(s) + Σ P(s'|s,a) V(s')`, ties going to `Transmit`.
pub fn policy_improvement(mdp: &TruncatedMdp, values: &[f64]) -> Result<PolicyTable> {
    if values.len() != mdp.n_states() {
        return Err(Error::InvalidParameter(format!(
            "value vector has {} entries, mdp has {} states",
            values.len(),
            mdp.n_states()
        )));
    }
    let actions = (0..mdp.n_states())
        .map(|s| {
            let (w, t) = q_values(mdp, s, values, 1.0);
            pick(w, t).0
        })
        .collect();
    PolicyTable::new(mdp.config(), actions)
}

/// Value iteration for the `γ`-discounted problem, started from zero and
/// stopped when the max-abs change is at most `tol`.
pub fn discounted_vi(mdp: &TruncatedMdp, gamma: f64, tol: f64, max_iter: usize) -> Result<SolveResult> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < gamma < 1, got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        residual = 0.0;
        for s in 0..n {
            let (w, t) = q_values(mdp, s, &v, gamma);
            next[s] = w.min(t);
            residual = f64::max(residual, (next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            let actions = (0..n)
                .map(|s| {
                    let (w, t) = q_values(mdp, s, &v, gamma);
                    pick(w, t).0
                })
                .collect();
            return Ok(SolveResult {
                values: v,
                theta: None,
                policy: PolicyTable::new(mdp.config(), actions)?,
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// `max_s |V_ν(s) - V_{ν-1}(s)| <= ε`
    MaxAbs,
    /// `max_s d(s) - min_s d(s) <= ε` with `d = V_ν - V_{ν-1}`
    Span,
}

#[derive(Debug, Clone, Copy)]
pub struct RviOptions {
    pub eps: f64,
    pub reference: State,
    pub max_iter: usize,
    pub stop: StopRule,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self { eps: 1e-9, reference: DEFAULT_REFERENCE, max_iter: 1_000_000, stop: StopRule::MaxAbs }
    }
}

/// Relative value iteration. `theta` is `Q(s_ref)` at the last sweep.
pub fn rvi(mdp: &TruncatedMdp, opts: &RviOptions) -> Result<SolveResult> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let r = mdp.require_index(&opts.reference)?;
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        for (s, qs) in q.iter_mut().enumerate() {
            let (w, t) = q_values(mdp, s, &v, 1.0);
            *qs = w.min(t);
        }
        let theta = q[r];
        let (mut max_abs, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..n {
            let nv = q[s] - theta;
            let d = nv - v[s];
            max_abs = max_abs.max(d.abs());
            lo = lo.min(d);
            hi = hi.max(d);
            v[s] = nv;
        }
        residual = match opts.stop {
            StopRule::MaxAbs => max_abs,
            StopRule::Span => hi - lo,
        };
        if residual <= opts.eps {
            let policy = policy_improvement(mdp, &v)?;
            return Ok(SolveResult { values: v, theta: Some(theta), policy, iterations: iter, residual });
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual })
}

/// Relative values and average cost of a fixed policy.
#[derive(Debug, Clone)]
pub struct PolicyValue {
    pub values: Vec<f64>,
    pub theta: f64,
    /// Largest absolute residual of `V(s) + θ = C(s) + Σ P V`.
    pub residual: f64,
}

fn table_for(mdp: &TruncatedMdp, policy: &Policy) -> PolicyTable {
    match policy {
        Policy::Table(t) if t.config() == mdp.config() => t.clone(),
        other => other.materialize(mdp.config()),
    }
}

/// States reachable from `start` under `actions`, as a membership mask.
fn forward_reach(mdp: &TruncatedMdp, actions: &[Action], start: usize) -> Vec<bool> {
    let mut seen = vec![false; mdp.n_states()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(s) = queue.pop_front() {
        let (cols, _) = mdp.row(s, actions[s]);
        for &c in cols {
            let c = c as usize;
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    seen
}

/// Fail unless every state can reach `reference`, which makes the class of
/// `reference` the only closed class.
fn check_unichain(mdp: &TruncatedMdp, actions: &[Action], reference: usize) -> Result<()> {
    let n = mdp.n_states();
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (s, &a) in actions.iter().enumerate() {
        for &c in mdp.row(s, a).0 {
            preds[c as usize].push(s as u32);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([reference]);
    seen[reference] = true;
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if !seen[p as usize] {
                seen[p as usize] = true;
                queue.push_back(p as usize);
            }
        }
    }
    let unreaching = seen.iter().filter(|x| !**x).count();
    if unreaching > 0 {
        return Err(Error::Multichain { reference: mdp.state(reference), unreaching });
    }
    Ok(())
}

fn eval_residual(mdp: &TruncatedMdp, actions: &[Action], values: &[f64], theta: f64) -> f64 {
    (0..mdp.n_states())
        .map(|s| (values[s] + theta - mdp.costs()[s] - mdp.expect(s, actions[s], values)).abs())
        .fold(0.0, f64::max)
}

/// Dense solve of the evaluation equations on `members` (closed under the
/// policy), pinning `V(reference) = 0`. Returns values on `members` and `θ`.
fn dense_eval(
    mdp: &TruncatedMdp,
    actions: &[Action],
    members: &[usize],
    reference: usize,
    rhs: Option<&[f64]>,
) -> Result<(Vec<f64>, f64)> {
    let m = members.len();
    let mut local = vec![usize::MAX; mdp.n_states()];
    for (k, &s) in members.iter().enumerate() {
        local[s] = k;
    }
    let r = local[reference];
    // Column r carries θ in place of the pinned V(reference).
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &s) in members.iter().enumerate() {
        b[k] = rhs.map_or(mdp.costs()[s], |v| v[k]);
        if k != r {
            a[(k, k)] += 1.0;
        }
        a[(k, r)] = 1.0;
        let (cols, probs) = mdp.row(s, actions[s]);
        for (&c, &p) in cols.iter().zip(probs) {
            let j = local[c as usize];
            if j != r {
                a[(k, j)] -= p;
            }
        }
    }
    let x = a.lu().solve(&b).ok_or(Error::Singular)?;
    let theta = x[r];
    let mut vals = x.as_slice().to_vec();
    vals[r] = 0.0;
    Ok((vals, theta))
}

/// Solve `V(s) + θ = C(s) + Σ_{s'} P^ψ(s'|s) V(s')` with `V(s_ref) = 0`.
///
/// Small systems use dense LU. Otherwise the closed class of `s_ref` is
/// solved densely when it is small and the transient states by Gauss-Seidel;
/// failing that, damped relative iteration with `P' = τP + (1-τ)I` runs until
/// every equation's residual is below [`EVAL_TOL`].
pub fn policy_evaluation(mdp: &TruncatedMdp, policy: &Policy, reference: State) -> Result<PolicyValue> {
    let table = table_for(mdp, policy);
    let actions = table.actions();
    let r = mdp.require_index(&reference)?;
    check_unichain(mdp, actions, r)?;
    let n = mdp.n_states();

    let (mut values, mut theta) = if n <= DENSE_LIMIT {
        let all: Vec<usize> = (0..n).collect();
        dense_eval(mdp, actions, &all, r, None)?
    } else {
        let closed = forward_reach(mdp, actions, r);
        let members: Vec<usize> = (0..n).filter(|&s| closed[s]).collect();
        if members.len() <= DENSE_LIMIT {
            let (local, theta) = dense_eval(mdp, actions, &members, r, None)?;
            let mut values = vec![0.0; n];
            for (k, &s) in members.iter().enumerate() {
                values[s] = local[k];
            }
            let transient: Vec<usize> = (0..n).filter(|&s| !closed[s]).collect();
            gauss_seidel_transient(mdp, actions, &transient, &mut values, theta)?;
            (values, theta)
        } else {
            damped_eval(mdp, actions, r)?
        }
    };
    values[r] = 0.0;

    let mut residual = eval_residual(mdp, actions, &values, theta);
    if residual >= EVAL_TOL && n <= DENSE_LIMIT {
        // One step of iterative refinement recovers digits lost in the LU.
        let all: Vec<usize> = (0..n).collect();
        let defect: Vec<f64> = (0..n)
            .map(|s| mdp.costs()[s] - theta - values[s] + mdp.expect(s, actions[s], &values))
            .collect();
        let (dv, dtheta) = dense_eval(mdp, actions, &all, r, Some(&defect))?;
        values.iter_mut().zip(&dv).for_each(|(v, d)| *v += d);
        values[r] = 0.0;
        theta += dtheta;
        residual = eval_residual(mdp, actions, &values, theta);
    }
    if residual >= EVAL_TOL {
        return Err(Error::NotConverged { iterations: 1, residual });
    }
    Ok(PolicyValue { values, theta, residual })
}

fn gauss_seidel_transient(
    mdp: &TruncatedMdp,
    actions: &[Action],
    transient: &[usize],
    values: &mut [f64],
    theta: f64,
) -> Result<()> {
    if transient.is_empty() {
        return Ok(());
    }
    let mut change = f64::INFINITY;
    for _ in 0..MAX_EVAL_SWEEPS {
        change = 0.0;
        for &s in transient {
            let (cols, probs) = mdp.row(s, actions[s]);
            let mut acc = mdp.costs()[s] - theta;
            let mut stay = 0.0;
            for (&c, &p) in cols.iter().zip(probs) {
                if c as usize == s {
                    stay += p;
                } else {
                    acc += p * values[c as usize];
                }
            }
            let nv = acc / (1.0 - stay);
            change = f64::max(change, (nv - values[s]).abs());
            values[s] = nv;
        }
        if change <= EVAL_TOL * 1e-3 {
            return Ok(());
        }
    }
    Err(Error::NotConverged { iterations: MAX_EVAL_SWEEPS, residual: change })
}

fn damped_eval(mdp: &TruncatedMdp, actions: &[Action], r: usize) -> Result<(Vec<f64>, f64)> {
    let n = mdp.n_states();
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=MAX_EVAL_SWEEPS {
        for s in 0..n {
            next[s] = mdp.costs()[s] + DAMPING * mdp.expect(s, actions[s], &h) + (1.0 - DAMPING) * h[s];
        }
        let theta = next[r];
        for s in 0..n {
            h[s] = next[s] - theta;
        }
        if sweep % 16 == 0 {
            // h solves the damped system; τh solves the original one.
            let v: Vec<f64> = h.iter().map(|x| DAMPING * x).collect();
            residual = eval_residual(mdp, actions, &v, theta);
            if residual < EVAL_TOL {
                return Ok((v, theta));
            }
        }
    }
    Err(Error::NotConverged { iterations: MAX_EVAL_SWEEPS, residual })
}

/// Policy iteration output with the average cost after each evaluation.
#[derive(Debug, Clone)]
pub struct PolicyIterationResult {
    pub result: SolveResult,
    pub theta_history: Vec<f64>,
}

/// Alternate evaluation and improvement from `init` until the policy repeats.
/// `iterations` counts evaluations.
pub fn policy_iteration(mdp: &TruncatedMdp, init: &Policy, max_rounds: usize) -> Result<PolicyIterationResult> {
    let mut current = table_for(mdp, init);
    let mut seen: Vec<Vec<Action>> = Vec::new();
    let mut history = Vec::new();
    for round in 1..=max_rounds {
        let eval = policy_evaluation(mdp, &Policy::Table(current.clone()), DEFAULT_REFERENCE)?;
        history.push(eval.theta);
        let improved = policy_improvement(mdp, &eval.values)?;
        if improved.actions() == current.actions() {
            return Ok(PolicyIterationResult {
                result: SolveResult {
                    values: eval.values,
                    theta: Some(eval.theta),
                    policy: current,
                    iterations: round,
                    residual: eval.residual,
                },
                theta_history: history,
            });
        }
        seen.push(current.actions().to_vec());
        if let Some(pos) = seen.iter().position(|a| a.as_slice() == improved.actions()) {
            return Err(Error::PolicyCycle { rounds: round, period: seen.len() - pos });
        }
        current = improved;
    }
    Err(Error::NotConverged { iterations: max_rounds, residual: f64::NAN })
}

/// Stationary distribution of the chain induced by `policy`, indexed like
/// the mdp states. Fails for multichain policies.
pub fn stationary_distribution(mdp: &TruncatedMdp, policy: &Policy, tol: f64) -> Result<Vec<f64>> {
    stationary_from(mdp, policy, tol, DEFAULT_REFERENCE)
}

pub fn stationary_from(mdp: &TruncatedMdp, policy: &Policy, tol: f64, reference: State) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let table = table_for(mdp, policy);
    let actions = table.actions();
    let r = mdp.require_index(&reference)?;
    check_unichain(mdp, actions, r)?;
    let n = mdp.n_states();
    let closed = forward_reach(mdp, actions, r);
    let members: Vec<usize> = (0..n).filter(|&s| closed[s]).collect();

    let mut pi = vec![0.0; n];
    if members.len() <= DENSE_LIMIT {
        let m = members.len();
        let mut local = vec![usize::MAX; n];
        for (k, &s) in members.iter().enumerate() {
            local[s] = k;
        }
        // Rows of (P - I)^T with the last equation replaced by Σπ = 1.
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (k, &s) in members.iter().enumerate() {
            a[(k, k)] -= 1.0;
            let (cols, probs) = mdp.row(s, actions[s]);
            for (&c, &p) in cols.iter().zip(probs) {
                a[(local[c as usize], k)] += p;
            }
        }
        for k in 0..m {
            a[(m - 1, k)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(m);
        b[m - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or(Error::Singular)?;
        for (k, &s) in members.iter().enumerate() {
            pi[s] = x[k].max(0.0);
        }
    } else {
        pi[r] = 1.0;
        let mut next = vec![0.0; n];
        let mut converged = false;
        for _ in 0..MAX_EVAL_SWEEPS {
            push_forward(mdp, actions, &members, &pi, &mut next);
            // Lazy step removes periodicity.
            let mut diff = 0.0f64;
            for &s in &members {
                diff = diff.max((next[s] - pi[s]).abs());
                next[s] = 0.5 * (next[s] + pi[s]);
            }
            std::mem::swap(&mut pi, &mut next);
            if diff < tol * 1e-2 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged { iterations: MAX_EVAL_SWEEPS, residual: f64::NAN });
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);

    let mut next = vec![0.0; n];
    push_forward(mdp, actions, &members, &pi, &mut next);
    let residual = (0..n).map(|s| (next[s] - pi[s]).abs()).fold(0.0, f64::max);
    if residual >= tol {
        return Err(Error::NotConverged { iterations: 0, residual });
    }
    Ok(pi)
}

fn push_forward(mdp: &TruncatedMdp, actions: &[Action], members: &[usize], pi: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &s in members {
        let (cols, probs) = mdp.row(s, actions[s]);
        for (&c, &p) in cols.iter().zip(probs) {
            out[c as usize] += pi[s] * p;
        }
    }
}

/// `Σ_s π(s) C(s)`
pub fn average_cost(mdp: &TruncatedMdp, pi: &[f64]) -> f64 {
    pi.iter().zip(mdp.costs()).map(|(p, c)| p * c).sum()
}
