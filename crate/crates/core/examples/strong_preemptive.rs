//! Strong preemptive policy: closed-form stationary law and expected AoII,
//! checked against the numeric stationary distribution of the truncated mdp.

use aoii::analytic::{sp_expected_aoii, sp_expected_aoii_linear, sp_stationary};
use aoii::mdp::{TruncatedMdp, TruncationConfig};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::policies::Policy;
use aoii::solvers::{average_cost, stationary_distribution};

fn main() -> aoii::Result<()> {
    let (p, ps) = (0.3, 0.7);
    let delay = DelayModel::geometric(ps)?;
    let f = PenaltyFunction::linear(1.0, 0.0)?;
    let mdp = TruncatedMdp::build(&SourceModel::new(p)?, &delay, &f, TruncationConfig::for_delay(&delay, 200))?;
    let pi = stationary_distribution(&mdp, &Policy::StrongPreemptive, 1e-12)?;

    println!("delta  closed      numeric");
    for delta in 0..6 {
        let numeric: f64 = (0..mdp.n_states()).filter(|&s| mdp.state(s).delta == delta).map(|s| pi[s]).sum();
        println!("{delta:>5}  {:.8}  {numeric:.8}", sp_stationary(p, ps, delta)?);
    }

    let closed = sp_expected_aoii_linear(p, ps, 1.0, 0.0)?;
    let capped = sp_expected_aoii(p, ps, &f, 50)?;
    println!("\nexpected AoII  closed {closed:.10}");
    println!("               capped {:.10} (tail <= {:.1e})", capped.value, capped.tail_bound);
    println!("               numeric {:.10}", average_cost(&mdp, &pi));

    let quad = sp_expected_aoii(p, ps, &PenaltyFunction::quadratic(1.0)?, 200)?;
    println!("quadratic penalty: {:.6} (tail <= {:.1e})", quad.value, quad.tail_bound);
    Ok(())
}
