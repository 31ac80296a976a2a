//! Monte Carlo estimates for several policies, independent replications
//! merged, compared with closed forms where they exist.

use aoii::analytic::{sp_expected_aoii_linear, wp_expected_aoii_linear};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::policies::Policy;
use aoii::sim::{simulate, SimConfig, SimResult};

fn main() -> aoii::Result<()> {
    let p = 0.3;
    let src = SourceModel::new(p)?;
    let delay = DelayModel::zipf(1.0, 4)?;
    let f = PenaltyFunction::linear(1.0, 0.0)?;
    let q1 = delay.hazard(1)?;

    let cases = [
        (Policy::StrongPreemptive, Some(sp_expected_aoii_linear(p, q1, 1.0, 0.0)?)),
        (Policy::WeakPreemptive, Some(wp_expected_aoii_linear(&src, &delay, 1.0, 0.0)?)),
        (Policy::LazyThreshold, None),
    ];
    for (policy, closed) in cases {
        let runs = (0..4u64)
            .map(|seed| simulate(&src, &delay, &f, &mut policy.clone(), &SimConfig::new(250_000, 5_000, seed)?))
            .collect::<aoii::Result<Vec<_>>>()?;
        let m = SimResult::merge(&runs)?;
        let reference = closed.map_or("-".to_string(), |c| format!("{c:.5}"));
        println!(
            "{:<18} {:.5} +- {:.5}  closed {reference}  deliveries {}  preemptions {}",
            policy.name(),
            m.avg_penalty,
            m.std_error,
            m.deliveries,
            m.preemptions
        );
    }
    Ok(())
}
