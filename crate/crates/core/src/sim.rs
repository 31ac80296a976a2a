//! Slotted-time Monte Carlo simulation of source, channel and receiver.
//!
//! Each slot: accrue `f(Δ_k)`, let the transmitter act on `(Δ_k, t, i)`,
//! start a fresh update if it transmits (discarding any in-flight one),
//! resolve delivery with hazard `q_1` (fresh) or `q_{t+1}` (continuing),
//! flip the source with probability `p`, then update `Δ`.
//!
//! Every slot draws exactly two uniforms from a [`ChaCha8Rng`], source flip
//! first and delivery second, whether or not they are needed. Two runs with
//! the same seed therefore see the same randomness slot by slot, and
//! policies that act identically produce identical paths.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, Channel, State, TruncatedMdp, TruncationConfig};
use crate::model::{DelayModel, PenaltyFunction, SourceModel};
use crate::policies::{Policy, PolicyTable};

/// Number of batches used for the batch-means standard error.
pub const BATCHES: usize = 100;

/// Anything that maps the observed state to an action.
pub trait Transmitter {
    fn decide(&mut self, s: &State) -> Action;
}

impl Transmitter for Policy {
    fn decide(&mut self, s: &State) -> Action {
        self.action(s)
    }
}

impl Transmitter for PolicyTable {
    fn decide(&mut self, s: &State) -> Action {
        self.lookup(s)
    }
}

/// Transmits with a fixed probability in every slot, independent of the
/// state. Uses its own generator so the channel randomness is unaffected.
#[derive(Debug, Clone)]
pub struct RandomTransmitter {
    prob: f64,
    rng: ChaCha8Rng,
}

impl RandomTransmitter {
    pub fn new(prob: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidParameter(format!("transmit probability {prob} outside [0, 1]")));
        }
        Ok(Self { prob, rng: ChaCha8Rng::seed_from_u64(seed) })
    }
}

impl Transmitter for RandomTransmitter {
    fn decide(&mut self, _s: &State) -> Action {
        if self.rng.gen::<f64>() < self.prob {
            Action::Transmit
        } else {
            Action::Wait
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub record_trace: bool,
}

impl SimConfig {
    pub fn new(horizon: u64, warmup: u64, seed: u64) -> Result<Self> {
        let cfg = Self { horizon, warmup, seed, record_trace: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon <= self.warmup {
            return Err(Error::InvalidParameter(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon, self.warmup
            )));
        }
        Ok(())
    }
}

/// One slot of a sample path. `t` and `i` describe the channel before the
/// action; `d` is 1 if an update was delivered in this slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    #[serde(rename = "X")]
    pub x: u8,
    #[serde(rename = "Xhat")]
    pub xhat: u8,
    #[serde(rename = "Delta")]
    pub delta: u32,
    pub a: u8,
    pub t: u32,
    pub i: i8,
    pub d: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Time average of `f(Δ_k)` over post-warmup slots.
    pub avg_penalty: f64,
    /// Batch-means standard error; infinite with fewer than `BATCHES` slots.
    pub std_error: f64,
    pub slots: u64,
    pub deliveries: u64,
    pub preemptions: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl SimResult {
    /// Combine independent runs: slot-weighted mean, pooled standard error.
    /// Traces are dropped.
    pub fn merge(results: &[SimResult]) -> Result<SimResult> {
        let slots: u64 = results.iter().map(|r| r.slots).sum();
        if slots == 0 {
            return Err(Error::InvalidParameter("nothing to merge".into()));
        }
        let total = slots as f64;
        let mut avg = 0.0;
        let mut var = 0.0;
        for r in results {
            let w = r.slots as f64 / total;
            avg += w * r.avg_penalty;
            var += w * w * r.std_error * r.std_error;
        }
        Ok(SimResult {
            avg_penalty: avg,
            std_error: var.sqrt(),
            slots,
            deliveries: results.iter().map(|r| r.deliveries).sum(),
            preemptions: results.iter().map(|r| r.preemptions).sum(),
            trace: None,
        })
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Write trace rows as CSV with columns `k,X,Xhat,Delta,a,t,i,d`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["k", "X", "Xhat", "Delta", "a", "t", "i", "d"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Physical system state.
#[derive(Debug, Clone, Copy)]
struct System {
    x: u8,
    xhat: u8,
    delta: u32,
    /// In-flight update value and its age in slots.
    in_flight: Option<(u8, u32)>,
}

impl System {
    fn start() -> Self {
        Self { x: 0, xhat: 0, delta: 0, in_flight: None }
    }

    fn observe(&self) -> State {
        match self.in_flight {
            None => State::idle(self.delta),
            Some((u, t)) => {
                let ch = if u == self.xhat { Channel::Redundant } else { Channel::Informative };
                State::busy(self.delta, t, ch)
            }
        }
    }
}

/// Outcome of one slot.
struct Step {
    before: State,
    action: Action,
    delivered: bool,
    preempted: bool,
}

/// Advance by one slot given the two uniforms (`u_flip`, `u_del`).
fn step<T: Transmitter + ?Sized>(sys: &mut System, p: f64, delay: &DelayModel, tx: &mut T, u_flip: f64, u_del: f64) -> Step {
    let before = sys.observe();
    let action = tx.decide(&before);
    let preempted = action == Action::Transmit && sys.in_flight.is_some();
    if action == Action::Transmit {
        sys.in_flight = Some((sys.x, 0));
    }
    let mut delivered = false;
    if let Some((u, age)) = sys.in_flight {
        if u_del < delay.q(age + 1) {
            sys.xhat = u;
            sys.in_flight = None;
            delivered = true;
        } else {
            sys.in_flight = Some((u, age + 1));
        }
    }
    if u_flip < p {
        sys.x ^= 1;
    }
    sys.delta = if sys.x == sys.xhat { 0 } else { sys.delta + 1 };
    Step { before, action, delivered, preempted }
}

fn draws(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u_flip = rng.gen::<f64>();
    let u_del = rng.gen::<f64>();
    (u_flip, u_del)
}

/// Run one simulation from `(0, 0, -1)` with `X = X̂ = 0`.
pub fn simulate<T: Transmitter + ?Sized>(
    source: &SourceModel,
    delay: &DelayModel,
    f: &PenaltyFunction,
    tx: &mut T,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    let p = source.p();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sys = System::start();

    let measured = cfg.horizon - cfg.warmup;
    let batch_len = measured / BATCHES as u64;
    let mut batch_sums = Vec::with_capacity(BATCHES);
    let mut batch_acc = 0.0;
    let mut batch_fill = 0u64;
    let mut total = 0.0;
    let mut deliveries = 0;
    let mut preemptions = 0;
    let mut trace = cfg.record_trace.then(Vec::new);

    for k in 0..cfg.horizon {
        let cost = f.eval(sys.delta);
        let (x, xhat) = (sys.x, sys.xhat);
        let (u_flip, u_del) = draws(&mut rng);
        let st = step(&mut sys, p, delay, tx, u_flip, u_del);
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRow {
                k,
                x,
                xhat,
                delta: st.before.delta,
                a: st.action.as_u8(),
                t: st.before.t,
                i: st.before.i(),
                d: st.delivered as u8,
            });
        }
        if k < cfg.warmup {
            continue;
        }
        total += cost;
        deliveries += st.delivered as u64;
        preemptions += st.preempted as u64;
        if batch_len > 0 && batch_sums.len() < BATCHES {
            batch_acc += cost;
            batch_fill += 1;
            if batch_fill == batch_len {
                batch_sums.push(batch_acc / batch_len as f64);
                batch_acc = 0.0;
                batch_fill = 0;
            }
        }
    }

    let avg_penalty = total / measured as f64;
    let std_error = if batch_sums.len() == BATCHES {
        let m = batch_sums.iter().sum::<f64>() / BATCHES as f64;
        let var = batch_sums.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / (BATCHES as f64 - 1.0);
        (var / BATCHES as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(SimResult { avg_penalty, std_error, slots: measured, deliveries, preemptions, trace })
}

/// Full per-slot trace of `length` slots.
pub fn sample_path<T: Transmitter + ?Sized>(
    source: &SourceModel,
    delay: &DelayModel,
    f: &PenaltyFunction,
    tx: &mut T,
    length: u64,
    seed: u64,
) -> Result<Vec<TraceRow>> {
    if length == 0 {
        return Ok(Vec::new());
    }
    let cfg = SimConfig::new(length, 0, seed)?.with_trace();
    Ok(simulate(source, delay, f, tx, &cfg)?.trace.unwrap_or_default())
}

/// Empirical next-state law of one `(state, action)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelRow {
    pub state: State,
    pub action: Action,
    pub visits: u64,
    /// Total-variation distance to the truncated kernel row.
    pub tv: f64,
    /// Transitions landing outside the row's support.
    pub off_support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub delta_cap: u32,
    pub rows: Vec<KernelRow>,
}

impl KernelReport {
    /// Largest TV distance among rows visited at least `min_visits` times.
    pub fn max_tv(&self, min_visits: u64) -> f64 {
        self.rows.iter().filter(|r| r.visits >= min_visits).map(|r| r.tv).fold(0.0, f64::max)
    }
}

/// Compare simulated transitions with the kernel of the truncated mdp.
/// Observed states are bucketed with the truncation's clamp at `delta_cap`.
pub fn empirical_kernel_check<T: Transmitter + ?Sized>(
    source: &SourceModel,
    delay: &DelayModel,
    tx: &mut T,
    slots: u64,
    seed: u64,
    delta_cap: u32,
) -> Result<KernelReport> {
    if slots == 0 {
        return Ok(KernelReport { delta_cap, rows: Vec::new() });
    }
    let cfg = TruncationConfig::for_delay(delay, delta_cap);
    let mdp = TruncatedMdp::build(source, delay, &PenaltyFunction::linear(0.0, 0.0)?, cfg)?;
    let p = source.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sys = System::start();

    // Per (state, action): counts aligned with the row's columns, plus misses.
    let mut counts: HashMap<usize, (Vec<u64>, u64)> = HashMap::new();
    for _ in 0..slots {
        let (u_flip, u_del) = draws(&mut rng);
        let st = step(&mut sys, p, delay, tx, u_flip, u_del);
        let s = mdp.require_index(&cfg.clamp(st.before))?;
        let next = mdp.require_index(&cfg.clamp(sys.observe()))? as u32;
        let (cols, _) = mdp.row(s, st.action);
        let entry = counts
            .entry(2 * s + st.action.as_u8() as usize)
            .or_insert_with(|| (vec![0; cols.len()], 0));
        match cols.iter().position(|&c| c == next) {
            Some(j) => entry.0[j] += 1,
            None => entry.1 += 1,
        }
    }

    let mut keys: Vec<usize> = counts.keys().copied().collect();
    keys.sort_unstable();
    let rows = keys
        .into_iter()
        .map(|key| {
            let (hits, off) = &counts[&key];
            let s = key / 2;
            let action = Action::from_u8((key % 2) as u8).expect("key encodes a valid action");
            let (_, probs) = mdp.row(s, action);
            let visits = hits.iter().sum::<u64>() + off;
            let n = visits as f64;
            let gap: f64 = hits.iter().zip(probs).map(|(h, q)| (*h as f64 / n - q).abs()).sum();
            KernelRow { state: mdp.state(s), action, visits, tv: 0.5 * (gap + *off as f64 / n), off_support: *off }
        })
        .collect();
    Ok(KernelReport { delta_cap, rows })
}

/// Draw a transmission time by per-slot hazard trials.
pub fn sample_transmission_time<R: Rng + ?Sized>(delay: &DelayModel, rng: &mut R) -> u32 {
    let mut t = 1;
    loop {
        if rng.gen::<f64>() < delay.q(t) {
            return t;
        }
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SourceModel, DelayModel, PenaltyFunction) {
        (
            SourceModel::new(0.3).unwrap(),
            DelayModel::geometric(0.7).unwrap(),
            PenaltyFunction::linear(1.0, 0.0).unwrap(),
        )
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(10, 10, 0).is_err());
        assert!(SimConfig::new(10, 0, 0).is_ok());
    }

    #[test]
    fn constant_penalty_is_exact() {
        let (src, delay, _) = setup();
        let f = PenaltyFunction::linear(0.0, 2.5).unwrap();
        let cfg = SimConfig::new(20_000, 100, 3).unwrap();
        let r = simulate(&src, &delay, &f, &mut Policy::WeakPreemptive, &cfg).unwrap();
        assert_eq!(r.avg_penalty, 2.5);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.slots, 19_900);
        assert!(r.deliveries <= r.slots);
    }

    #[test]
    fn replay_is_bit_identical() {
        let (src, delay, f) = setup();
        let cfg = SimConfig::new(5_000, 0, 42).unwrap().with_trace();
        let a = simulate(&src, &delay, &f, &mut Policy::StrongPreemptive, &cfg).unwrap();
        let b = simulate(&src, &delay, &f, &mut Policy::StrongPreemptive, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&src, &delay, &f, &mut Policy::StrongPreemptive, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn trace_invariants() {
        let (src, delay, f) = setup();
        let rows = sample_path(&src, &delay, &f, &mut RandomTransmitter::new(0.4, 9).unwrap(), 2_000, 1).unwrap();
        assert_eq!(rows.len(), 2_000);
        for r in &rows {
            assert_eq!(r.delta == 0, r.x == r.xhat);
        }
        for w in rows.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(b.delta == 0 || b.delta == a.delta + 1);
            if a.d == 0 {
                assert_eq!(a.xhat, b.xhat);
            }
        }
        assert!(sample_path(&src, &delay, &f, &mut Policy::StrongPreemptive, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn unit_delay_staircase() {
        let src = SourceModel::new(0.3).unwrap();
        let delay = DelayModel::deterministic(1).unwrap();
        let f = PenaltyFunction::linear(2.0, 0.0).unwrap();
        let rows = sample_path(&src, &delay, &f, &mut Policy::StrongPreemptive, 3_000, 5).unwrap();
        for w in rows.windows(2) {
            let (a, b) = (f.eval(w[0].delta), f.eval(w[1].delta));
            assert!(b == 0.0 || b == a + 2.0);
        }
        assert!(rows.iter().all(|r| r.d == 1 && r.a == 1));
    }

    #[test]
    fn merge_weights_by_slots() {
        let a = SimResult { avg_penalty: 1.0, std_error: 0.1, slots: 100, deliveries: 5, preemptions: 1, trace: None };
        let b = SimResult { avg_penalty: 2.0, std_error: 0.1, slots: 300, deliveries: 7, preemptions: 2, trace: None };
        let m = SimResult::merge(&[a, b]).unwrap();
        assert!((m.avg_penalty - 1.75).abs() < 1e-15);
        assert!((m.std_error - 0.1 * (0.25f64 * 0.25 + 0.75 * 0.75).sqrt()).abs() < 1e-15);
        assert_eq!((m.slots, m.deliveries, m.preemptions), (400, 12, 3));
        assert!(SimResult::merge(&[]).is_err());
    }

    #[test]
    fn kernel_check_small() {
        let (src, delay, _) = setup();
        let rep = empirical_kernel_check(&src, &delay, &mut Policy::StrongPreemptive, 0, 1, 30).unwrap();
        assert!(rep.rows.is_empty());
        let rep = empirical_kernel_check(&src, &delay, &mut Policy::StrongPreemptive, 200_000, 1, 30).unwrap();
        assert!(rep.rows.iter().all(|r| r.off_support == 0));
        assert!(rep.max_tv(10_000) < 0.02);
    }

    #[test]
    fn unit_delay_support() {
        let src = SourceModel::new(0.2).unwrap();
        let delay = DelayModel::deterministic(1).unwrap();
        let rep = empirical_kernel_check(&src, &delay, &mut RandomTransmitter::new(0.5, 2).unwrap(), 100_000, 4, 20).unwrap();
        assert!(!rep.rows.is_empty());
        assert!(rep.rows.iter().all(|r| r.off_support == 0));
    }

    #[test]
    fn random_transmitter_rejects_bad_prob() {
        assert!(RandomTransmitter::new(1.5, 0).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "k,X,Xhat,Delta,a,t,i,d");
        let row = TraceRow { k: 0, x: 1, xhat: 0, delta: 1, a: 1, t: 0, i: -1, d: 0 };
        let mut buf = Vec::new();
        write_trace_csv(&[row], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,X,Xhat,Delta,a,t,i,d\n0,1,0,1,1,0,-1,0\n");
    }
}
