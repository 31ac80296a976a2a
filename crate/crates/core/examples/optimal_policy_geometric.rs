//! Relative value iteration under geometric delay: the optimal policy
//! transmits in every reachable state and matches the closed form.

use aoii::analytic::sp_expected_aoii_linear;
use aoii::mdp::{reachable_states, Action, TruncatedMdp, TruncationConfig};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::policies::Policy;
use aoii::solvers::{rvi, RviOptions, DEFAULT_REFERENCE};

fn main() -> aoii::Result<()> {
    let (p, ps) = (0.3, 0.7);
    let delay = DelayModel::geometric(ps)?;
    let cfg = TruncationConfig::for_delay(&delay, 100);
    let mdp = TruncatedMdp::build(&SourceModel::new(p)?, &delay, &PenaltyFunction::linear(1.0, 0.0)?, cfg)?;
    println!("{} states, {} nonzeros", mdp.n_states(), mdp.nnz());

    let res = rvi(&mdp, &RviOptions::default())?;
    let reach = reachable_states(&mdp, &Policy::Table(res.policy.clone()), DEFAULT_REFERENCE)?;
    let waits = reach.iter().filter(|&&s| res.policy.get(s) == Action::Wait).count();
    println!("rvi: {} iterations, residual {:.1e}", res.iterations, res.residual);
    println!("reachable states {}, of which wait: {waits}", reach.len());
    println!("theta {:.9}  closed form {:.9}", res.theta.unwrap(), sp_expected_aoii_linear(p, ps, 1.0, 0.0)?);

    res.write_json(std::io::stdout())?;
    println!();
    Ok(())
}
