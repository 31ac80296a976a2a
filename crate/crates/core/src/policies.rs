//! Stationary deterministic decision rules.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{reachable_states, Action, Channel, State, TruncatedMdp, TruncationConfig};
use crate::model::DelayModel;

/// Tabulated actions over a truncated enumeration. Lookups outside the table
/// clamp `Δ` and `t` to its bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    cfg: TruncationConfig,
    actions: Vec<Action>,
}

impl PolicyTable {
    pub fn new(cfg: TruncationConfig, actions: Vec<Action>) -> Result<Self> {
        if actions.len() != cfg.n_states() {
            return Err(Error::InvalidParameter(format!(
                "policy table has {} actions for {} states",
                actions.len(),
                cfg.n_states()
            )));
        }
        Ok(Self { cfg, actions })
    }

    pub fn config(&self) -> TruncationConfig {
        self.cfg
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn get(&self, idx: usize) -> Action {
        self.actions[idx]
    }

    pub fn lookup(&self, s: &State) -> Action {
        let idx = self.cfg.index(&self.cfg.clamp(*s)).expect("clamped state is in range");
        self.actions[idx]
    }

    /// Rows `delta,t,i,a` in state-index order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "t", "i", "a"])?;
        for (idx, a) in self.actions.iter().enumerate() {
            let s = self.cfg.state(idx);
            w.write_record(&[s.delta.to_string(), s.t.to_string(), s.i().to_string(), a.as_u8().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`PolicyTable::write_csv`]. Bounds are inferred from the
    /// largest `Δ` and `t` present; every state must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k).ok_or_else(|| Error::Config(format!("policy CSV row has {} fields", rec.len())))
            };
            let parse_err = |e: std::num::ParseIntError| Error::Config(format!("policy CSV: {e}"));
            let delta: u32 = field(0)?.trim().parse().map_err(parse_err)?;
            let t: u32 = field(1)?.trim().parse().map_err(parse_err)?;
            let i: i8 = field(2)?.trim().parse().map_err(parse_err)?;
            let a: u8 = field(3)?.trim().parse().map_err(parse_err)?;
            let action = Action::from_u8(a).ok_or_else(|| Error::Config(format!("policy CSV: action {a}")))?;
            rows.push((State::new(delta, t, i)?, action));
        }
        let delta_max = rows.iter().map(|(s, _)| s.delta).max().unwrap_or(0);
        let t_max_trunc = rows.iter().map(|(s, _)| s.t).max().unwrap_or(0).max(1);
        let cfg = TruncationConfig::new(delta_max, t_max_trunc);
        let mut actions = vec![None; cfg.n_states()];
        for (s, a) in rows {
            let idx = cfg.index(&s).expect("within inferred bounds");
            if actions[idx].replace(a).is_some() {
                return Err(Error::Config(format!("policy CSV lists state {s} twice")));
            }
        }
        let actions = actions
            .into_iter()
            .enumerate()
            .map(|(idx, a)| a.ok_or_else(|| Error::Config(format!("policy CSV is missing state {}", cfg.state(idx)))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cfg, actions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    /// Transmit when idle and preempt whenever busy.
    StrongPreemptive,
    /// Strong preemptive, except keep transmitting at `Δ > 0, i = 1`.
    WeakPreemptive,
    /// Strong preemptive, except keep transmitting at `(Δ, t_max - 1, 1)`, `Δ >= 1`.
    ThresholdPreemptive { t_max: u32 },
    /// Non-preemptive baseline: transmit only when idle with `Δ > 0`.
    LazyThreshold,
    Table(PolicyTable),
}

impl Policy {
    /// Threshold preemptive policy matched to a bounded delay model.
    pub fn threshold_for(delay: &DelayModel) -> Result<Self> {
        let t_max = delay.t_max().ok_or(Error::UnboundedDelay)?;
        Ok(Policy::ThresholdPreemptive { t_max })
    }

    pub fn action(&self, s: &State) -> Action {
        let busy_informative = s.delta > 0 && s.channel == Channel::Informative;
        let wait_if = |cond: bool| if cond { Action::Wait } else { Action::Transmit };
        match self {
            Policy::StrongPreemptive => Action::Transmit,
            Policy::WeakPreemptive => wait_if(busy_informative),
            Policy::ThresholdPreemptive { t_max } => wait_if(busy_informative && s.t + 1 == *t_max),
            Policy::LazyThreshold => {
                if s.channel == Channel::Idle && s.delta > 0 {
                    Action::Transmit
                } else {
                    Action::Wait
                }
            }
            Policy::Table(table) => table.lookup(s),
        }
    }

    /// Tabulate this policy over the enumeration of `cfg`.
    pub fn materialize(&self, cfg: TruncationConfig) -> PolicyTable {
        let actions = (0..cfg.n_states()).map(|i| self.action(&cfg.state(i))).collect();
        PolicyTable { cfg, actions }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::StrongPreemptive => f.write_str("strong-preemptive"),
            Policy::WeakPreemptive => f.write_str("weak-preemptive"),
            Policy::ThresholdPreemptive { t_max } => write!(f, "threshold-preemptive(t_max={t_max})"),
            Policy::LazyThreshold => f.write_str("lazy-threshold"),
            Policy::Table(t) => write!(f, "table({} states)", t.actions.len()),
        }
    }
}

/// Named canonical policies. `threshold-preemptive` needs a bound and is
/// written `threshold-preemptive:<t_max>`.
impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "strong-preemptive" | "strong" | "sp" => Ok(Policy::StrongPreemptive),
            "weak-preemptive" | "weak" | "wp" => Ok(Policy::WeakPreemptive),
            "lazy-threshold" | "lazy" | "threshold" => Ok(Policy::LazyThreshold),
            other => {
                let bound = other
                    .strip_prefix("threshold-preemptive:")
                    .or_else(|| other.strip_prefix("tp:"))
                    .ok_or_else(|| Error::Config(format!("unknown policy name `{other}`")))?;
                let t_max = bound
                    .parse()
                    .map_err(|_| Error::Config(format!("bad threshold bound `{bound}`")))?;
                Ok(Policy::ThresholdPreemptive { t_max })
            }
        }
    }
}

/// Result of comparing two policies on the states one of them visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub equal: bool,
    pub reachable: usize,
    /// States reachable under the first policy where the two disagree.
    pub witnesses: Vec<State>,
}

/// Compare `a` and `b` on every state reachable from `start` under `a`.
pub fn equal_on_reachable(a: &Policy, b: &Policy, mdp: &TruncatedMdp, start: State) -> Result<PolicyComparison> {
    let reach = reachable_states(mdp, a, start)?;
    let witnesses: Vec<State> = reach
        .iter()
        .map(|&i| mdp.state(i))
        .filter(|s| a.action(s) != b.action(s))
        .collect();
    Ok(PolicyComparison { equal: witnesses.is_empty(), reachable: reach.len(), witnesses })
}
