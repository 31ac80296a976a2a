//! State space, exact transition kernel and the truncated finite MDP.
//!
//! A state is `(Δ, t, i)`: the AoII level, the number of slots the update in
//! flight has been transmitting (0 when idle) and the channel indicator
//! (`-1` idle, `0` the update in flight equals the receiver's estimate, `1`
//! it differs).
//!
//! Truncated states are indexed lexicographically in `(Δ, t, i)`. Invalid
//! `(t, i)` pairings are not enumerated, so each Δ level holds
//! `1 + 2 * t_max_trunc` states.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DelayModel, PenaltyFunction, SourceModel};
use crate::policies::Policy;

/// Channel indicator `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// `i = -1`
    Idle,
    /// `i = 0`: the update in flight carries the receiver's current estimate.
    Redundant,
    /// `i = 1`: the update in flight differs from the receiver's estimate.
    Informative,
}

impl Channel {
    pub fn indicator(self) -> i8 {
        match self {
            Channel::Idle => -1,
            Channel::Redundant => 0,
            Channel::Informative => 1,
        }
    }

    pub fn from_indicator(i: i8) -> Option<Self> {
        match i {
            -1 => Some(Channel::Idle),
            0 => Some(Channel::Redundant),
            1 => Some(Channel::Informative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub delta: u32,
    pub t: u32,
    pub channel: Channel,
}

impl State {
    /// Checked constructor from the `(Δ, t, i)` triple.
    pub fn new(delta: u32, t: u32, i: i8) -> Result<Self> {
        let s = State {
            delta,
            t,
            channel: Channel::from_indicator(i).ok_or_else(|| {
                Error::InvalidParameter(format!("channel indicator must be -1, 0 or 1, got {i}"))
            })?,
        };
        if s.is_valid() {
            Ok(s)
        } else {
            Err(Error::InvalidState(s))
        }
    }

    pub const fn idle(delta: u32) -> Self {
        State { delta, t: 0, channel: Channel::Idle }
    }

    pub const fn busy(delta: u32, t: u32, channel: Channel) -> Self {
        State { delta, t, channel }
    }

    /// `i = -1` exactly when `t = 0`.
    pub fn is_valid(&self) -> bool {
        (self.channel == Channel::Idle) == (self.t == 0)
    }

    pub fn i(&self) -> i8 {
        self.channel.indicator()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.delta, self.t, self.i())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    /// `a = 0`: stay idle, or let the update in flight continue.
    Wait,
    /// `a = 1`: start a fresh transmission, preempting any update in flight.
    Transmit,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Wait, Action::Transmit];

    pub fn as_u8(self) -> u8 {
        match self {
            Action::Wait => 0,
            Action::Transmit => 1,
        }
    }

    pub fn from_u8(a: u8) -> Option<Self> {
        match a {
            0 => Some(Action::Wait),
            1 => Some(Action::Transmit),
            _ => None,
        }
    }
}

/// Exact one-slot successors of `s` under action `a`, zero-probability
/// entries removed. `Δ' ∈ {0, Δ + 1}` always.
///
/// The slot runs as: the action is applied, the update in flight (fresh or
/// continuing) is delivered with hazard `q_1` or `q_{t+1}`, then the source
/// flips with probability `p`.
pub fn transitions(source: &SourceModel, delay: &DelayModel, s: State, a: Action) -> Result<Vec<(State, f64)>> {
    if !s.is_valid() {
        return Err(Error::InvalidState(s));
    }
    Ok(successors(source.p(), delay, s, a).into_iter().filter(|(_, pr)| *pr > 0.0).collect())
}

/// Four-way successor split. Entries may carry zero probability.
pub(crate) fn successors(p: f64, delay: &DelayModel, s: State, a: Action) -> [(State, f64); 4] {
    // Everything is expressed relative to the current source value X.
    let estimate_correct = s.delta == 0;
    let grown = s.delta + 1;

    let (update_matches_source, age, hazard) = match (a, s.channel) {
        (Action::Wait, Channel::Idle) => {
            // Nothing in flight: only the source moves.
            let (stay, leave) = if estimate_correct { (1.0 - p, p) } else { (p, 1.0 - p) };
            return [
                (State::idle(0), stay),
                (State::idle(grown), leave),
                (State::idle(0), 0.0),
                (State::idle(0), 0.0),
            ];
        }
        (Action::Transmit, _) => (true, 0, delay.q(1)),
        (Action::Wait, ch) => {
            // The update in flight equals X iff (i = 0) agrees with (Δ = 0).
            let redundant = ch == Channel::Redundant;
            (redundant == estimate_correct, s.t, delay.q(s.t + 1))
        }
    };

    // Delivered: the estimate becomes the update; otherwise it stays.
    // Δ' = 0 iff (no flip and estimate == X) or (flip and estimate != X).
    let delivered_zero = if update_matches_source { 1.0 - p } else { p };
    let waiting_zero = if estimate_correct { 1.0 - p } else { p };
    let in_flight = if update_matches_source == estimate_correct {
        Channel::Redundant
    } else {
        Channel::Informative
    };
    let t_next = age + 1;
    [
        (State::idle(0), hazard * delivered_zero),
        (State::idle(grown), hazard * (1.0 - delivered_zero)),
        (State::busy(0, t_next, in_flight), (1.0 - hazard) * waiting_zero),
        (State::busy(grown, t_next, in_flight), (1.0 - hazard) * (1.0 - waiting_zero)),
    ]
}

/// Bounds on `Δ` and `t` for the finite approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub delta_max: u32,
    pub t_max_trunc: u32,
}

/// Geometric tail mass below which in-flight ages are clamped by default.
pub const GEOMETRIC_TAIL: f64 = 1e-9;

impl TruncationConfig {
    pub fn new(delta_max: u32, t_max_trunc: u32) -> Self {
        Self { delta_max, t_max_trunc }
    }

    /// `t_max - 1` for bounded delays; for the geometric family the smallest
    /// `t` with `(1 - p_s)^t < 1e-9`.
    pub fn default_t_max_trunc(delay: &DelayModel) -> u32 {
        match (delay.t_max(), delay.kind()) {
            (Some(t_max), _) => t_max.saturating_sub(1).max(1),
            (None, crate::model::DelayKind::Geometric { ps }) => {
                let mut t = 1u32;
                let mut tail = 1.0 - ps;
                while tail >= GEOMETRIC_TAIL {
                    t += 1;
                    tail *= 1.0 - ps;
                }
                t
            }
            (None, _) => unreachable!("only the geometric family is unbounded"),
        }
    }

    pub fn for_delay(delay: &DelayModel, delta_max: u32) -> Self {
        Self::new(delta_max, Self::default_t_max_trunc(delay))
    }

    pub fn validate_for(&self, delay: &DelayModel) -> Result<()> {
        if self.delta_max == 0 {
            return Err(Error::InvalidParameter("delta_max must be positive".into()));
        }
        if self.t_max_trunc == 0 {
            return Err(Error::InvalidParameter("t_max_trunc must be positive".into()));
        }
        if let Some(t_max) = delay.t_max() {
            let needed = t_max.saturating_sub(1);
            if self.t_max_trunc < needed {
                return Err(Error::TruncationTooSmall { given: self.t_max_trunc, needed });
            }
        }
        Ok(())
    }

    /// Raw grid size `(Δ_max + 1) * 3 * (t_max + 1)` before invalid pairings are removed.
    pub fn raw_grid_size(&self) -> usize {
        (self.delta_max as usize + 1) * 3 * (self.t_max_trunc as usize + 1)
    }

    pub fn states_per_delta(&self) -> usize {
        1 + 2 * self.t_max_trunc as usize
    }

    pub fn n_states(&self) -> usize {
        (self.delta_max as usize + 1) * self.states_per_delta()
    }

    pub fn index(&self, s: &State) -> Option<usize> {
        if !s.is_valid() || s.delta > self.delta_max || s.t > self.t_max_trunc {
            return None;
        }
        let local = match s.channel {
            Channel::Idle => 0,
            ch => 1 + 2 * (s.t as usize - 1) + ch.indicator() as usize,
        };
        Some(s.delta as usize * self.states_per_delta() + local)
    }

    pub fn state(&self, idx: usize) -> State {
        let width = self.states_per_delta();
        let delta = (idx / width) as u32;
        match idx % width {
            0 => State::idle(delta),
            local => {
                let t = ((local - 1) / 2 + 1) as u32;
                let channel = if (local - 1) % 2 == 0 { Channel::Redundant } else { Channel::Informative };
                State::busy(delta, t, channel)
            }
        }
    }

    /// Clamp `Δ` and `t` into range, preserving the channel indicator.
    pub fn clamp(&self, s: State) -> State {
        State {
            delta: s.delta.min(self.delta_max),
            t: s.t.min(self.t_max_trunc),
            channel: s.channel,
        }
    }
}

/// Sparse rows for one action: `offsets[s]..offsets[s + 1]` index `(cols, probs)`.
#[derive(Debug, Clone, Default)]
struct SparseKernel {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    probs: Vec<f64>,
}

/// Finite MDP with out-of-range successor mass folded onto the clamped
/// boundary state.
#[derive(Debug, Clone)]
pub struct TruncatedMdp {
    source: SourceModel,
    delay: DelayModel,
    penalty: PenaltyFunction,
    cfg: TruncationConfig,
    costs: Vec<f64>,
    kernel: [SparseKernel; 2],
}

impl TruncatedMdp {
    pub fn build(source: &SourceModel, delay: &DelayModel, penalty: &PenaltyFunction, cfg: TruncationConfig) -> Result<Self> {
        cfg.validate_for(delay)?;
        let n = cfg.n_states();
        let mut kernel: [SparseKernel; 2] = Default::default();
        let mut costs = Vec::with_capacity(n);
        for k in kernel.iter_mut() {
            k.offsets.reserve(n + 1);
            k.cols.reserve(4 * n);
            k.probs.reserve(4 * n);
            k.offsets.push(0);
        }
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(4);
        for idx in 0..n {
            let s = cfg.state(idx);
            costs.push(penalty.eval(s.delta));
            for a in Action::ALL {
                row.clear();
                for (next, pr) in successors(source.p(), delay, s, a) {
                    if pr <= 0.0 {
                        continue;
                    }
                    let col = cfg.index(&cfg.clamp(next)).expect("clamped state in range") as u32;
                    match row.iter_mut().find(|(c, _)| *c == col) {
                        Some(entry) => entry.1 += pr,
                        None => row.push((col, pr)),
                    }
                }
                row.sort_unstable_by_key(|(c, _)| *c);
                let k = &mut kernel[a.as_u8() as usize];
                for &(c, pr) in &row {
                    k.cols.push(c);
                    k.probs.push(pr);
                }
                k.offsets.push(k.cols.len());
            }
        }
        Ok(Self {
            source: *source,
            delay: delay.clone(),
            penalty: penalty.clone(),
            cfg,
            costs,
            kernel,
        })
    }

    pub fn n_states(&self) -> usize {
        self.costs.len()
    }

    pub fn config(&self) -> TruncationConfig {
        self.cfg
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn delay(&self) -> &DelayModel {
        &self.delay
    }

    pub fn penalty(&self) -> &PenaltyFunction {
        &self.penalty
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn index(&self, s: &State) -> Option<usize> {
        self.cfg.index(s)
    }

    pub fn state(&self, idx: usize) -> State {
        self.cfg.state(idx)
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.n_states()).map(|i| self.cfg.state(i))
    }

    /// Index of `s`, or an error when it is invalid or out of range.
    pub fn require_index(&self, s: &State) -> Result<usize> {
        if !s.is_valid() {
            return Err(Error::InvalidState(*s));
        }
        self.index(s).ok_or(Error::OutOfRange(*s))
    }

    /// Successor indices and probabilities of `(s, a)`.
    pub fn row(&self, s: usize, a: Action) -> (&[u32], &[f64]) {
        let k = &self.kernel[a.as_u8() as usize];
        let (lo, hi) = (k.offsets[s], k.offsets[s + 1]);
        (&k.cols[lo..hi], &k.probs[lo..hi])
    }

    /// `Σ_{s'} P(s' | s, a) v(s')`
    pub fn expect(&self, s: usize, a: Action, values: &[f64]) -> f64 {
        let (cols, probs) = self.row(s, a);
        cols.iter().zip(probs).map(|(&c, &p)| p * values[c as usize]).sum()
    }

    pub fn nnz(&self) -> usize {
        self.kernel.iter().map(|k| k.cols.len()).sum()
    }

    /// Dump every row as CSV: `delta,t,i,a,delta_next,t_next,i_next,prob`.
    pub fn write_kernel_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "t", "i", "a", "delta_next", "t_next", "i_next", "prob"])?;
        for idx in 0..self.n_states() {
            let s = self.state(idx);
            for a in Action::ALL {
                let (cols, probs) = self.row(idx, a);
                for (&c, &pr) in cols.iter().zip(probs) {
                    let n = self.state(c as usize);
                    w.write_record(&[
                        s.delta.to_string(),
                        s.t.to_string(),
                        s.i().to_string(),
                        a.as_u8().to_string(),
                        n.delta.to_string(),
                        n.t.to_string(),
                        n.i().to_string(),
                        format!("{pr:e}"),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Truncated MDP for `(source, delay, penalty)`; a thin alias of
/// [`TruncatedMdp::build`].
pub fn build_truncated(source: &SourceModel, delay: &DelayModel, penalty: &PenaltyFunction, cfg: TruncationConfig) -> Result<TruncatedMdp> {
    TruncatedMdp::build(source, delay, penalty, cfg)
}

/// Closure of `start` under the transitions selected by `policy`.
pub fn reachable_states(mdp: &TruncatedMdp, policy: &Policy, start: State) -> Result<BTreeSet<usize>> {
    let root = mdp.require_index(&start)?;
    let mut seen = vec![false; mdp.n_states()];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(s) = stack.pop() {
        let a = policy.action(&mdp.state(s));
        let (cols, _) = mdp.row(s, a);
        for &c in cols {
            if !seen[c as usize] {
                seen[c as usize] = true;
                stack.push(c as usize);
            }
        }
    }
    Ok(seen.iter().enumerate().filter_map(|(i, &v)| v.then_some(i)).collect())
}
