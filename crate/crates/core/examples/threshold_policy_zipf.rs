//! Under Zipf delay satisfying the optimality condition, both relative value
//! iteration and policy iteration land on the threshold preemptive policy.

use aoii::analytic::{check_condition1, tp_expected_aoii_linear};
use aoii::mdp::{TruncatedMdp, TruncationConfig};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::policies::{equal_on_reachable, Policy};
use aoii::solvers::{policy_iteration, rvi, RviOptions, DEFAULT_REFERENCE};

fn main() -> aoii::Result<()> {
    let p = 0.35;
    let src = SourceModel::new(p)?;
    let delay = DelayModel::zipf(3.0, 5)?;
    let report = check_condition1(&src, &delay)?;
    println!("condition: {report:?}");

    let mdp = TruncatedMdp::build(&src, &delay, &PenaltyFunction::linear(1.0, 0.0)?, TruncationConfig::for_delay(&delay, 100))?;
    let tp = Policy::threshold_for(&delay)?;

    let res = rvi(&mdp, &RviOptions::default())?;
    let cmp = equal_on_reachable(&Policy::Table(res.policy.clone()), &tp, &mdp, DEFAULT_REFERENCE)?;
    println!("rvi: equal on {} reachable states: {} (witnesses {:?})", cmp.reachable, cmp.equal, cmp.witnesses);

    let pi = policy_iteration(&mdp, &Policy::LazyThreshold, 100)?;
    println!("policy iteration from lazy-threshold: theta per round {:?}", pi.theta_history);

    let closed = tp_expected_aoii_linear(p, delay.hazard(1)?, 1.0, 0.0)?;
    println!("theta rvi {:.9}  pi {:.9}  closed {closed:.9}", res.theta.unwrap(), pi.result.theta.unwrap());

    // The strong and threshold policies differ only where the chain never goes.
    let sp_vs_tp = equal_on_reachable(&Policy::StrongPreemptive, &tp, &mdp, DEFAULT_REFERENCE)?;
    println!("strong vs threshold on strong's reachable set: equal = {}", sp_vs_tp.equal);
    Ok(())
}
