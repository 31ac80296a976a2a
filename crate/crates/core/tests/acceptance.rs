//! End-to-end acceptance checks. Each check prints one PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see them.

use std::time::{Duration, Instant};

use aoii::analytic::{
    check_condition1, sp_expected_aoii, sp_expected_aoii_linear, sp_stationary, tp_expected_aoii_linear,
    wp_expected_aoii_linear,
};
use aoii::cli::commands::{condition_sweep, perf, summarize, Verdict};
use aoii::cli::config::{CommandKind, Family, Overrides, Resolved, SweepParam};
use aoii::mdp::{reachable_states, Action, TruncatedMdp, TruncationConfig};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::policies::{equal_on_reachable, Policy};
use aoii::sim::{empirical_kernel_check, simulate, SimConfig};
use aoii::solvers::{
    average_cost, discounted_vi, policy_evaluation, rvi, stationary_distribution, RviOptions, DEFAULT_REFERENCE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn linear() -> PenaltyFunction {
    PenaltyFunction::linear(1.0, 0.0).unwrap()
}

/// Delay whose first-slot hazard is `q1`.
fn delay_with_q1(q1: f64) -> DelayModel {
    if q1 == 1.0 {
        DelayModel::deterministic(1).unwrap()
    } else {
        DelayModel::geometric(q1).unwrap()
    }
}

fn mdp(p: f64, delay: &DelayModel, delta_max: u32) -> TruncatedMdp {
    TruncatedMdp::build(
        &SourceModel::new(p).unwrap(),
        delay,
        &linear(),
        TruncationConfig::for_delay(delay, delta_max),
    )
    .unwrap()
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn stationary_levels() -> Check {
    let mut worst = 0.0f64;
    for p in [0.1, 0.3, 0.45] {
        for q1 in [0.3, 0.7, 1.0] {
            let m = mdp(p, &delay_with_q1(q1), 200);
            let pi = stationary_distribution(&m, &Policy::StrongPreemptive, 1e-12).map_err(e)?;
            let mut levels = vec![0.0; 201];
            for (s, mass) in pi.iter().enumerate() {
                levels[m.state(s).delta as usize] += mass;
            }
            for (delta, mass) in levels.iter().enumerate().take(200) {
                worst = worst.max((mass - sp_stationary(p, q1, delta as u32).map_err(e)?).abs());
            }
        }
    }
    ensure(worst < 1e-8, || format!("max abs error {worst:e}"))?;
    Ok(format!("max abs error {worst:.1e}"))
}

fn strong_preemptive_value() -> Check {
    let (p, q1) = (0.3, 0.7);
    let closed = sp_expected_aoii_linear(p, q1, 1.0, 0.0).map_err(e)?;
    let printed = 0.3 / (0.58 * 0.88);
    ensure((closed - printed).abs() <= 1e-15, || format!("closed form {closed} vs {printed}"))?;

    let capped = sp_expected_aoii(p, q1, &linear(), 200).map_err(e)?;
    let gap = (capped.value - closed).abs();
    ensure(gap <= capped.tail_bound + 1e-12, || format!("capped sum off by {gap:e}"))?;

    let delay = delay_with_q1(q1);
    let eval = policy_evaluation(&mdp(p, &delay, 300), &Policy::StrongPreemptive, DEFAULT_REFERENCE).map_err(e)?;
    ensure((eval.theta - closed).abs() < 1e-6, || format!("evaluation theta {}", eval.theta))?;

    let cfg = SimConfig::new(1_000_000, 10_000, 2024).map_err(e)?;
    let sim = simulate(&SourceModel::new(p).unwrap(), &delay, &linear(), &mut Policy::StrongPreemptive, &cfg).map_err(e)?;
    let z = (sim.avg_penalty - closed).abs() / sim.std_error;
    ensure(z <= 3.0, || format!("simulation {} +- {} ({z:.2} se)", sim.avg_penalty, sim.std_error))?;
    Ok(format!(
        "theta {closed:.9}; eval gap {:.1e}; sim {:.4} ({z:.2} se)",
        (eval.theta - closed).abs(),
        sim.avg_penalty
    ))
}

fn weak_preemptive_value() -> Check {
    let mut worst = 0.0f64;
    for a in [0.0, 1.0, 3.0] {
        for t_max in [2, 3, 5] {
            let delay = DelayModel::zipf(a, t_max).unwrap();
            for p in [0.1, 0.3, 0.45] {
                let m = mdp(p, &delay, 200);
                let pi = stationary_distribution(&m, &Policy::WeakPreemptive, 1e-12).map_err(e)?;
                let oracle = average_cost(&m, &pi);
                let closed = wp_expected_aoii_linear(&SourceModel::new(p).unwrap(), &delay, 1.0, 0.0).map_err(e)?;
                let rel = (closed - oracle).abs() / oracle;
                ensure(rel < 1e-6, || format!("a={a} t_max={t_max} p={p}: {closed} vs {oracle}"))?;
                worst = worst.max(rel);
            }
        }
    }
    Ok(format!("max relative error {worst:.1e}"))
}

fn geometric_optimality() -> Check {
    let mut worst = 0.0f64;
    for i in 1..=9 {
        for j in 1..=9 {
            let (p, ps) = (i as f64 / 20.0, j as f64 / 10.0);
            let delay = DelayModel::geometric(ps).unwrap();
            let m = mdp(p, &delay, 100);
            let res = rvi(&m, &RviOptions::default()).map_err(e)?;
            let table = Policy::Table(res.policy.clone());
            let reach = reachable_states(&m, &table, DEFAULT_REFERENCE).map_err(e)?;
            if let Some(&s) = reach.iter().find(|&&s| res.policy.get(s) != Action::Transmit) {
                return Err(format!("p={p} ps={ps}: waits at {}", m.state(s)));
            }
            let gap = (res.theta.unwrap() - sp_expected_aoii_linear(p, ps, 1.0, 0.0).map_err(e)?).abs();
            ensure(gap < 1e-3, || format!("p={p} ps={ps}: theta gap {gap:e}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("81 points transmit on reachable states; max theta gap {worst:.1e}"))
}

fn zipf_optimality() -> Check {
    let mut worst = 0.0f64;
    for t_max in [3, 5] {
        let delay = DelayModel::zipf(3.0, t_max).unwrap();
        for i in 1..=9 {
            let p = i as f64 / 20.0;
            let src = SourceModel::new(p).unwrap();
            ensure(check_condition1(&src, &delay).map_err(e)?.satisfied, || format!("condition fails at p={p}"))?;
            let m = mdp(p, &delay, 100);
            let res = rvi(&m, &RviOptions::default()).map_err(e)?;
            let tp = Policy::threshold_for(&delay).map_err(e)?;
            let cmp = equal_on_reachable(&Policy::Table(res.policy.clone()), &tp, &m, DEFAULT_REFERENCE).map_err(e)?;
            ensure(cmp.equal, || format!("t_max={t_max} p={p}: witnesses {:?}", cmp.witnesses))?;
            let closed = tp_expected_aoii_linear(p, delay.hazard(1).unwrap(), 1.0, 0.0).map_err(e)?;
            let gap = (res.theta.unwrap() - closed).abs();
            ensure(gap < 1e-3, || format!("t_max={t_max} p={p}: theta gap {gap:e}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("18 points match the threshold policy; max theta gap {worst:.1e}"))
}

fn condition_table() -> Check {
    let cfg = Resolved::resolve(CommandKind::ConditionSweep, Overrides::default(), None).map_err(e)?;
    let rows = condition_sweep(&cfg).map_err(e)?;
    ensure(rows.len() == 21 * 9 * 9, || format!("{} rows", rows.len()))?;
    for s in summarize(&rows) {
        let want = if s.a <= 2.0 {
            Verdict::Fail
        } else if s.a >= 2.5 {
            Verdict::Pass
        } else {
            Verdict::Mixed
        };
        ensure(s.verdict == want, || format!("a={}: {:?}, expected {want:?}", s.a, s.verdict))?;
    }
    let mixed = rows.iter().filter(|r| r.a == 2.25 && r.satisfied).count();
    Ok(format!("fail for a<=2, pass for a>=2.5, mixed at 2.25 ({mixed}/81)"))
}

fn discounted_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0usize;
    for k in 0..20 {
        let p = rng.gen_range(0.05..0.45);
        let delay = if rng.gen_bool(0.5) {
            DelayModel::geometric(rng.gen_range(0.2..0.9)).unwrap()
        } else {
            DelayModel::zipf(rng.gen_range(0.0..5.0), rng.gen_range(2..8)).unwrap()
        };
        let f = match rng.gen_range(0..3) {
            0 => PenaltyFunction::linear(rng.gen_range(0.5..3.0), rng.gen_range(0.0..1.0)).unwrap(),
            1 => PenaltyFunction::quadratic(rng.gen_range(0.1..1.0)).unwrap(),
            _ => PenaltyFunction::logarithmic(2.0).unwrap(),
        };
        let gamma = if k % 2 == 0 { 0.8 } else { 0.95 };
        let cfg = TruncationConfig::for_delay(&delay, 40);
        let m = TruncatedMdp::build(&SourceModel::new(p).unwrap(), &delay, &f, cfg).unwrap();
        let res = discounted_vi(&m, gamma, 1e-10, 100_000).map_err(e)?;
        for s in 0..m.n_states() {
            let st = m.state(s);
            if st.delta == 0 || st.delta == cfg.delta_max {
                continue;
            }
            let mut up = st;
            up.delta += 1;
            let next = m.index(&up).unwrap();
            ensure(res.values[next] >= res.values[s] - 1e-9, || {
                format!("config {k} ({}, p={p:.3}, gamma={gamma}): V{up} < V{st}", delay.kind())
            })?;
            checked += 1;
        }
    }
    Ok(format!("20 configurations, {checked} adjacent pairs non-decreasing"))
}

fn constant_increment() -> Check {
    let delay = DelayModel::zipf(3.0, 5).unwrap();
    let q1 = delay.hazard(1).unwrap();
    let mut worst = 0.0f64;
    for p in [0.2, 0.35] {
        let m = mdp(p, &delay, 100);
        let tp = Policy::threshold_for(&delay).map_err(e)?;
        let v = policy_evaluation(&m, &tp, DEFAULT_REFERENCE).map_err(e)?;
        let sigma = 1.0 / (q1 + p - 2.0 * q1 * p);
        for delta in 1..=50u32 {
            let lo = m.index(&aoii::mdp::State::idle(delta)).unwrap();
            let hi = m.index(&aoii::mdp::State::idle(delta + 1)).unwrap();
            let d = (v.values[hi] - v.values[lo] - sigma).abs();
            ensure(d < 1e-4, || format!("p={p} delta={delta}: increment off by {d:e}"))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn perf_shapes() -> Check {
    let run = |family, sweep, p: Option<f64>| -> Result<Vec<(f64, f64, f64)>, String> {
        let o = Overrides { family: Some(family), sweep: Some(sweep), p, ..Default::default() };
        let cfg = Resolved::resolve(CommandKind::Perf, o, None).map_err(e)?;
        let rows = perf(&cfg).map_err(e)?;
        if let Some(r) = rows.iter().find(|r| r.flagged) {
            return Err(format!("flagged row at {}={}", r.sweep, r.value));
        }
        Ok(rows.iter().map(|r| (r.value, r.theta_optimal, r.theta_lazy_threshold)).collect())
    };
    let sweeps = [
        ("geometric p", run(Family::Geometric, SweepParam::P, None)?, 1.0),
        ("geometric ps", run(Family::Geometric, SweepParam::Ps, Some(0.35))?, -1.0),
        ("zipf t_max", run(Family::Zipf, SweepParam::TMax, Some(0.35))?, 1.0),
    ];
    for (name, rows, dir) in &sweeps {
        for (v, opt, lazy) in rows {
            ensure(*opt <= lazy + 1e-6, || format!("{name}={v}: optimal {opt} > lazy {lazy}"))?;
        }
        for w in rows.windows(2) {
            ensure(dir * (w[1].1 - w[0].1) >= -1e-6, || format!("{name}: not monotone at {}", w[1].0))?;
        }
    }
    Ok("optimal <= lazy everywhere; increasing in p, decreasing in ps, non-decreasing in t_max".into())
}

fn kernel_fidelity() -> Check {
    let mut out = Vec::new();
    let geo = DelayModel::geometric(0.7).unwrap();
    let zipf = DelayModel::zipf(3.0, 5).unwrap();
    let cases: [(&str, f64, &DelayModel, Policy); 2] = [
        ("strong/geometric", 0.3, &geo, Policy::StrongPreemptive),
        ("threshold/zipf", 0.35, &zipf, Policy::threshold_for(&zipf).unwrap()),
    ];
    for (name, p, delay, mut policy) in cases {
        let rep = empirical_kernel_check(&SourceModel::new(p).unwrap(), delay, &mut policy, 10_000_000, 11, 100)
            .map_err(e)?;
        let tv = rep.max_tv(10_000);
        let rows = rep.rows.iter().filter(|r| r.visits >= 10_000).count();
        ensure(tv < 0.02, || format!("{name}: max TV {tv}"))?;
        ensure(rep.rows.iter().all(|r| r.off_support == 0), || format!("{name}: transition outside kernel support"))?;
        out.push(format!("{name} max TV {tv:.4} over {rows} rows"));
    }
    Ok(out.join("; "))
}

fn main() {
    let checks: [(&str, fn() -> Check, Option<u64>); 10] = [
        ("strong preemptive stationary distribution", stationary_levels, Some(5)),
        ("strong preemptive expected AoII", strong_preemptive_value, Some(30)),
        ("weak preemptive expected AoII", weak_preemptive_value, Some(60)),
        ("strong preemptive optimal under geometric delay", geometric_optimality, Some(120)),
        ("threshold preemptive optimal under zipf delay", zipf_optimality, None),
        ("optimality condition table", condition_table, Some(5)),
        ("discounted values monotone in delta", discounted_monotonicity, None),
        ("constant value increment under threshold policy", constant_increment, None),
        ("performance sweep shapes", perf_shapes, None),
        ("simulator kernel fidelity", kernel_fidelity, None),
    ];
    let mut failed = Vec::new();
    for (k, (name, check, budget)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let over = budget.is_some_and(|b| took > Duration::from_secs(b));
        let verdict = match (&outcome, over) {
            (Ok(_), false) => "PASS",
            _ => "FAIL",
        };
        let detail = match &outcome {
            Ok(d) if over => format!("{d}; over the {}s budget", budget.unwrap()),
            Ok(d) => d.clone(),
            Err(m) => m.clone(),
        };
        println!("{verdict} [{:>2}] {name}: {detail} ({:.2}s)", k + 1, took.as_secs_f64());
        if verdict == "FAIL" {
            failed.push(k + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed checks: {failed:?}");
        std::process::exit(1);
    }
}
