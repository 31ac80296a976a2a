use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TruncatedMdp, TruncationConfig};
use crate::model::{DelayModel, PenaltyFunction, SourceModel};
use crate::solvers::RviOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Geometric,
    Zipf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    P,
    Ps,
    A,
    TMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Relative value iteration.
    Rvi,
    /// Policy iteration started from the strong preemptive policy.
    Pi,
}

/// The name used on the command line, e.g. `t-max`.
pub fn value_name<V: ValueEnum>(v: &V) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    ConditionSweep,
    Perf,
    Solve,
    Simulate,
    Compare,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::ConditionSweep => "condition-sweep",
            CommandKind::Perf => "perf",
            CommandKind::Solve => "solve",
            CommandKind::Simulate => "simulate",
            CommandKind::Compare => "compare",
        })
    }
}

/// Every setting, optional. The same struct is read from the config file
/// (keys spelled like the flags) and from the command line.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and replications.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub delta_max: Option<u32>,
    /// Bound on the in-flight age `t` (defaults depend on the delay model).
    #[arg(long)]
    pub tmax_trunc: Option<u32>,
    /// RVI stopping tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Source flip probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Geometric success probability.
    #[arg(long)]
    pub ps: Option<f64>,
    /// Zipf exponent.
    #[arg(long)]
    pub a: Option<f64>,
    /// Zipf support bound.
    #[arg(long)]
    pub t_max: Option<u32>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Policy name: strong-preemptive, weak-preemptive, threshold-preemptive[:N],
    /// lazy-threshold, random:PROB or rvi.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub trace: Option<bool>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepParam>,
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ps_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub a_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub t_max_grid: Option<Vec<u32>>,
    /// Add a Monte Carlo column to `perf`.
    #[arg(long)]
    pub simulate: Option<bool>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Iteration cap for RVI and policy iteration rounds.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($f:ident),*) => { Overrides { $($f: $hi.$f.or($lo.$f)),* } };
}

impl Overrides {
    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        layer!(
            self, lower, out, seed, workers, delta_max, tmax_trunc, eps, family, p, ps, a, t_max, alpha, beta,
            policy, horizon, warmup, trace, replications, sweep, p_grid, ps_grid, a_grid, t_max_grid, simulate,
            method, max_iter
        )
    }

    pub fn from_file(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// `start, start + step, ..., end` built from integer multiples to keep
/// values like 0.15 exact to the last digit.
pub fn grid(num_lo: u32, num_hi: u32, denom: f64) -> Vec<f64> {
    (num_lo..=num_hi).map(|k| k as f64 / denom).collect()
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: CommandKind,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub delta_max: u32,
    pub tmax_trunc: Option<u32>,
    pub eps: f64,
    pub family: Family,
    pub p: f64,
    pub ps: f64,
    pub a: f64,
    pub t_max: u32,
    pub alpha: f64,
    pub beta: f64,
    pub policy: Option<String>,
    pub horizon: u64,
    pub warmup: u64,
    pub trace: bool,
    pub replications: usize,
    pub sweep: SweepParam,
    pub p_grid: Vec<f64>,
    pub ps_grid: Vec<f64>,
    pub a_grid: Vec<f64>,
    pub t_max_grid: Vec<u32>,
    pub simulate: bool,
    pub method: Method,
    pub max_iter: usize,
}

impl Resolved {
    pub fn resolve(command: CommandKind, flags: Overrides, file: Option<Overrides>) -> Result<Resolved> {
        let o = flags.over(file.unwrap_or_default());
        let family = o.family.unwrap_or(Family::Geometric);
        let default_sweep = match family {
            Family::Geometric => SweepParam::P,
            Family::Zipf => SweepParam::TMax,
        };
        let r = Resolved {
            command,
            out: o.out,
            seed: o.seed.unwrap_or(1),
            workers: o.workers.unwrap_or(1),
            delta_max: o.delta_max.unwrap_or(100),
            tmax_trunc: o.tmax_trunc,
            eps: o.eps.unwrap_or(1e-9),
            family,
            p: o.p.unwrap_or(0.3),
            ps: o.ps.unwrap_or(0.7),
            a: o.a.unwrap_or(3.0),
            t_max: o.t_max.unwrap_or(5),
            alpha: o.alpha.unwrap_or(1.0),
            beta: o.beta.unwrap_or(0.0),
            policy: o.policy,
            horizon: o.horizon.unwrap_or(1_000_000),
            warmup: o.warmup.unwrap_or(10_000),
            trace: o.trace.unwrap_or(false),
            replications: o.replications.unwrap_or(1),
            sweep: o.sweep.unwrap_or(default_sweep),
            p_grid: o.p_grid.unwrap_or_else(|| grid(1, 9, 20.0)),
            ps_grid: o.ps_grid.unwrap_or_else(|| grid(1, 9, 10.0)),
            a_grid: o.a_grid.unwrap_or_else(|| grid(0, 20, 4.0)),
            t_max_grid: o.t_max_grid.unwrap_or_else(|| (3..=11).collect()),
            simulate: o.simulate.unwrap_or(false),
            method: o.method.unwrap_or(Method::Rvi),
            max_iter: o.max_iter.unwrap_or(1_000_000),
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.delta_max == 0 {
            return bad("delta-max must be at least 1".into());
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.max_iter == 0 {
            return bad("max-iter must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        for (name, empty) in [
            ("p-grid", self.p_grid.is_empty()),
            ("ps-grid", self.ps_grid.is_empty()),
            ("a-grid", self.a_grid.is_empty()),
            ("t-max-grid", self.t_max_grid.is_empty()),
        ] {
            if empty {
                return bad(format!("{name} is empty"));
            }
        }
        if self.command == CommandKind::Perf {
            let ok = matches!(
                (self.family, self.sweep),
                (Family::Geometric, SweepParam::P | SweepParam::Ps)
                    | (Family::Zipf, SweepParam::P | SweepParam::A | SweepParam::TMax)
            );
            if !ok {
                return bad(format!("cannot sweep {} for the {} family", value_name(&self.sweep), value_name(&self.family)));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Result<SourceModel> {
        SourceModel::new(self.p)
    }

    pub fn delay(&self) -> Result<DelayModel> {
        match self.family {
            Family::Geometric => DelayModel::geometric(self.ps),
            Family::Zipf => DelayModel::zipf(self.a, self.t_max),
        }
    }

    pub fn penalty(&self) -> Result<PenaltyFunction> {
        PenaltyFunction::linear(self.alpha, self.beta)
    }

    pub fn truncation(&self, delay: &DelayModel) -> Result<TruncationConfig> {
        let t = self.tmax_trunc.unwrap_or_else(|| TruncationConfig::default_t_max_trunc(delay));
        let cfg = TruncationConfig::new(self.delta_max, t);
        cfg.validate_for(delay)?;
        Ok(cfg)
    }

    pub fn rvi_options(&self) -> RviOptions {
        RviOptions { eps: self.eps, max_iter: self.max_iter, ..Default::default() }
    }

    pub fn mdp(&self) -> Result<TruncatedMdp> {
        let delay = self.delay()?;
        TruncatedMdp::build(&self.source()?, &delay, &self.penalty()?, self.truncation(&delay)?)
    }

    /// Every resolved parameter plus the tool version, in sorted order.
    pub fn header(&self) -> BTreeMap<String, String> {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut h = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            h.insert(k.to_string(), v);
        };
        put("version", env!("CARGO_PKG_VERSION").to_string());
        put("command", self.command.to_string());
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        put("delta-max", self.delta_max.to_string());
        put("tmax-trunc", self.tmax_trunc.map_or("default".into(), |t| t.to_string()));
        put("eps", self.eps.to_string());
        put("family", value_name(&self.family));
        put("p", self.p.to_string());
        put("ps", self.ps.to_string());
        put("a", self.a.to_string());
        put("t-max", self.t_max.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("policy", self.policy.clone().unwrap_or_else(|| "default".into()));
        put("horizon", self.horizon.to_string());
        put("warmup", self.warmup.to_string());
        put("trace", self.trace.to_string());
        put("replications", self.replications.to_string());
        put("sweep", value_name(&self.sweep));
        put("p-grid", join(&self.p_grid));
        put("ps-grid", join(&self.ps_grid));
        put("a-grid", join(&self.a_grid));
        put("t-max-grid", self.t_max_grid.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","));
        put("simulate", self.simulate.to_string());
        put("method", value_name(&self.method));
        put("max-iter", self.max_iter.to_string());
        h
    }
}
