//! Command bodies. Each returns plain data; writing is done by the caller.
//!
//! CSV columns:
//! - `condition-sweep`: `a,t_max,p,hazard_monotone,Q1,Q2,Q3,satisfied`;
//!   summary `a,verdict,passed,total`.
//! - `perf`: `family,sweep,value,p,ps,a,t_max,theta_optimal,optimal_source,
//!   theta_rvi,rvi_gap,theta_lazy_threshold,theta_simulated,sim_std_error,flagged`.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{value_name, Family, Method, Resolved, SweepParam};
use crate::analytic::{check_condition1, sp_expected_aoii_linear, tp_expected_aoii_linear};
use crate::error::{Error, Result};
use crate::mdp::{TruncatedMdp, TruncationConfig};
use crate::model::{DelayModel, SourceModel};
use crate::policies::{equal_on_reachable, Policy, PolicyComparison};
use crate::sim::{simulate, RandomTransmitter, SimConfig, SimResult, Transmitter};
use crate::solvers::{policy_evaluation, policy_iteration, rvi, SolveResult, DEFAULT_REFERENCE};

/// Tolerance of the closed-form vs RVI cross-check in `perf`.
pub const CROSS_CHECK_TOL: f64 = 1e-3;

/// In-flight age bound used for the lazy baseline under geometric delay.
pub const LAZY_GEOMETRIC_TRUNC: u32 = 40;

/// Offset separating the random transmitter's stream from the channel's.
const TRANSMITTER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub a: f64,
    pub t_max: u32,
    pub p: f64,
    pub hazard_monotone: bool,
    #[serde(rename = "Q1")]
    pub q1: f64,
    #[serde(rename = "Q2")]
    pub q2: f64,
    #[serde(rename = "Q3")]
    pub q3: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub a: f64,
    pub verdict: Verdict,
    pub passed: usize,
    pub total: usize,
}

/// One row per `(a, t_max, p)` in grid order.
pub fn condition_sweep(cfg: &Resolved) -> Result<Vec<ConditionRow>> {
    let mut points = Vec::new();
    for &a in &cfg.a_grid {
        for &t_max in &cfg.t_max_grid {
            for &p in &cfg.p_grid {
                points.push((a, t_max, p));
            }
        }
    }
    pool(cfg.workers)?.install(|| {
        points
            .par_iter()
            .map(|&(a, t_max, p)| {
                let r = check_condition1(&SourceModel::new(p)?, &DelayModel::zipf(a, t_max)?)?;
                Ok(ConditionRow {
                    a,
                    t_max,
                    p,
                    hazard_monotone: r.hazard_monotone,
                    q1: r.big_q1,
                    q2: r.big_q2,
                    q3: r.big_q3,
                    satisfied: r.satisfied,
                })
            })
            .collect()
    })
}

/// Collapse rows to one verdict per exponent, in first-seen order.
pub fn summarize(rows: &[ConditionRow]) -> Vec<ConditionSummary> {
    let mut out: Vec<ConditionSummary> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s.a == r.a) {
            Some(s) => {
                s.total += 1;
                s.passed += r.satisfied as usize;
            }
            None => out.push(ConditionSummary { a: r.a, verdict: Verdict::Mixed, passed: r.satisfied as usize, total: 1 }),
        }
    }
    for s in &mut out {
        s.verdict = match s.passed {
            0 => Verdict::Fail,
            n if n == s.total => Verdict::Pass,
            _ => Verdict::Mixed,
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfRow {
    pub family: String,
    pub sweep: String,
    pub value: f64,
    pub p: f64,
    pub ps: Option<f64>,
    pub a: Option<f64>,
    pub t_max: Option<u32>,
    pub theta_optimal: f64,
    /// `closed-form` when the analytic optimum is certified, else `rvi`.
    pub optimal_source: String,
    pub theta_rvi: f64,
    pub rvi_gap: Option<f64>,
    pub theta_lazy_threshold: f64,
    pub theta_simulated: Option<f64>,
    pub sim_std_error: Option<f64>,
    pub flagged: bool,
}

fn perf_point(base: &Resolved, value: f64) -> Result<PerfRow> {
    let mut cfg = base.clone();
    match cfg.sweep {
        SweepParam::P => cfg.p = value,
        SweepParam::Ps => cfg.ps = value,
        SweepParam::A => cfg.a = value,
        SweepParam::TMax => cfg.t_max = value as u32,
    }
    let source = cfg.source()?;
    let delay = cfg.delay()?;
    let penalty = cfg.penalty()?;
    let q1 = delay.hazard(1)?;

    let (closed, optimal_policy) = match cfg.family {
        Family::Geometric => (Some(sp_expected_aoii_linear(cfg.p, q1, cfg.alpha, cfg.beta)?), Some(Policy::StrongPreemptive)),
        Family::Zipf => {
            if check_condition1(&source, &delay)?.satisfied {
                (Some(tp_expected_aoii_linear(cfg.p, q1, cfg.alpha, cfg.beta)?), Some(Policy::threshold_for(&delay)?))
            } else {
                (None, None)
            }
        }
    };

    let mdp = cfg.mdp()?;
    let solved = rvi(&mdp, &cfg.rvi_options())?;
    let theta_rvi = solved.theta.expect("relative solve has an average cost");

    let lazy_trunc = match cfg.family {
        Family::Geometric => cfg.tmax_trunc.unwrap_or(LAZY_GEOMETRIC_TRUNC),
        Family::Zipf => cfg.truncation(&delay)?.t_max_trunc,
    };
    let lazy_mdp = TruncatedMdp::build(&source, &delay, &penalty, TruncationConfig::new(cfg.delta_max, lazy_trunc))?;
    let theta_lazy = policy_evaluation(&lazy_mdp, &Policy::LazyThreshold, DEFAULT_REFERENCE)?.theta;

    let (theta_simulated, sim_std_error) = if cfg.simulate {
        let mut policy = optimal_policy.clone().unwrap_or(Policy::Table(solved.policy.clone()));
        let sim_cfg = SimConfig::new(cfg.horizon, cfg.warmup, cfg.seed)?;
        let r = simulate(&source, &delay, &penalty, &mut policy, &sim_cfg)?;
        (Some(r.avg_penalty), Some(r.std_error))
    } else {
        (None, None)
    };

    let theta_optimal = closed.unwrap_or(theta_rvi);
    let rvi_gap = closed.map(|c| (c - theta_rvi).abs());
    let flagged = rvi_gap.is_some_and(|g| g > CROSS_CHECK_TOL) || theta_optimal > theta_lazy + 1e-6;
    let (ps, a, t_max) = match cfg.family {
        Family::Geometric => (Some(cfg.ps), None, None),
        Family::Zipf => (None, Some(cfg.a), Some(cfg.t_max)),
    };
    Ok(PerfRow {
        family: value_name(&cfg.family),
        sweep: value_name(&cfg.sweep),
        value,
        p: cfg.p,
        ps,
        a,
        t_max,
        theta_optimal,
        optimal_source: if closed.is_some() { "closed-form" } else { "rvi" }.into(),
        theta_rvi,
        rvi_gap,
        theta_lazy_threshold: theta_lazy,
        theta_simulated,
        sim_std_error,
        flagged,
    })
}

/// Optimal vs lazy-threshold average cost along one swept parameter.
pub fn perf(cfg: &Resolved) -> Result<Vec<PerfRow>> {
    let values: Vec<f64> = match cfg.sweep {
        SweepParam::P => cfg.p_grid.clone(),
        SweepParam::Ps => cfg.ps_grid.clone(),
        SweepParam::A => cfg.a_grid.clone(),
        SweepParam::TMax => cfg.t_max_grid.iter().map(|&t| t as f64).collect(),
    };
    pool(cfg.workers)?.install(|| values.par_iter().map(|&v| perf_point(cfg, v)).collect())
}

/// Solve the configured model with the configured method.
pub fn solve(cfg: &Resolved) -> Result<(TruncatedMdp, SolveResult)> {
    let mdp = cfg.mdp()?;
    let res = match cfg.method {
        Method::Rvi => rvi(&mdp, &cfg.rvi_options())?,
        Method::Pi => policy_iteration(&mdp, &Policy::StrongPreemptive, cfg.max_iter)?.result,
    };
    Ok((mdp, res))
}

/// Canonical policy by name; bare `threshold-preemptive` takes the bound of
/// the configured delay, and `rvi` solves first.
pub fn named_policy(cfg: &Resolved, name: &str) -> Result<Policy> {
    match name.trim() {
        "threshold-preemptive" | "tp" => Policy::threshold_for(&cfg.delay()?),
        "rvi" => Ok(Policy::Table(solve(&Resolved { method: Method::Rvi, ..cfg.clone() })?.1.policy)),
        other => other.parse(),
    }
}

fn default_policy_name(cfg: &Resolved) -> &'static str {
    match cfg.family {
        Family::Geometric => "strong-preemptive",
        Family::Zipf => "threshold-preemptive",
    }
}

fn transmitter(cfg: &Resolved, seed: u64) -> Result<Box<dyn Transmitter + Send>> {
    let name = cfg.policy.clone().unwrap_or_else(|| default_policy_name(cfg).into());
    if let Some(prob) = name.trim().strip_prefix("random:") {
        let prob: f64 = prob.parse().map_err(|_| Error::Config(format!("bad transmit probability `{prob}`")))?;
        return Ok(Box::new(RandomTransmitter::new(prob, seed ^ TRANSMITTER_STREAM)?));
    }
    Ok(Box::new(named_policy(cfg, &name)?))
}

/// `replications` independent runs with seeds `seed, seed + 1, ...`, merged.
/// The trace, if requested, comes from the first run alone.
pub fn simulate_cmd(cfg: &Resolved) -> Result<SimResult> {
    let source = cfg.source()?;
    let delay = cfg.delay()?;
    let penalty = cfg.penalty()?;
    let seeds: Vec<u64> = (0..cfg.replications as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let runs: Vec<SimResult> = pool(cfg.workers)?.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(k, &seed)| {
                let mut sim_cfg = SimConfig::new(cfg.horizon, cfg.warmup, seed)?;
                sim_cfg.record_trace = cfg.trace && k == 0;
                let mut tx = transmitter(cfg, seed)?;
                simulate(&source, &delay, &penalty, tx.as_mut(), &sim_cfg)
            })
            .collect::<Result<_>>()
    })?;
    if runs.len() == 1 {
        return Ok(runs.into_iter().next().expect("one run"));
    }
    let trace = runs[0].trace.clone();
    let mut merged = SimResult::merge(&runs)?;
    merged.trace = trace;
    Ok(merged)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub solver_theta: f64,
    pub canonical: String,
    #[serde(flatten)]
    pub comparison: PolicyComparison,
}

/// RVI's greedy policy against a canonical policy on the RVI-reachable set.
pub fn compare(cfg: &Resolved) -> Result<CompareReport> {
    let (mdp, solved) = solve(&Resolved { method: Method::Rvi, ..cfg.clone() })?;
    let name = cfg.policy.clone().unwrap_or_else(|| default_policy_name(cfg).into());
    let canonical = named_policy(cfg, &name)?;
    let comparison = equal_on_reachable(&Policy::Table(solved.policy.clone()), &canonical, &mdp, DEFAULT_REFERENCE)?;
    Ok(CompareReport {
        solver_theta: solved.theta.expect("relative solve has an average cost"),
        canonical: canonical.name(),
        comparison,
    })
}
