//! Weak preemptive policy under Zipf delay: closed form against the
//! numeric stationary distribution.

use aoii::analytic::{wp_aggregates, wp_expected_aoii_linear};
use aoii::mdp::{TruncatedMdp, TruncationConfig};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::policies::Policy;
use aoii::solvers::{average_cost, stationary_distribution};

fn main() -> aoii::Result<()> {
    println!("  a  t_max     p   closed        numeric       rel. error");
    for (a, t_max) in [(0.0, 3), (1.0, 5), (3.0, 5)] {
        let delay = DelayModel::zipf(a, t_max)?;
        for p in [0.1, 0.3, 0.45] {
            let src = SourceModel::new(p)?;
            let closed = wp_expected_aoii_linear(&src, &delay, 1.0, 0.0)?;
            let cfg = TruncationConfig::for_delay(&delay, 200);
            let mdp = TruncatedMdp::build(&src, &delay, &PenaltyFunction::linear(1.0, 0.0)?, cfg)?;
            let numeric = average_cost(&mdp, &stationary_distribution(&mdp, &Policy::WeakPreemptive, 1e-12)?);
            println!("{a:>3}  {t_max:>5}  {p:>4}   {closed:.9}   {numeric:.9}   {:.1e}", (closed - numeric).abs() / numeric);
        }
    }
    let agg = wp_aggregates(&SourceModel::new(0.3)?, &DelayModel::zipf(1.0, 5)?)?;
    println!("\naggregates for zipf(1, 5), p = 0.3: {agg:?}");
    Ok(())
}
