//! Compare simulated one-step transitions with the mdp kernel.

use aoii::model::{DelayModel, SourceModel};
use aoii::policies::Policy;
use aoii::sim::empirical_kernel_check;

fn main() -> aoii::Result<()> {
    let delay = DelayModel::zipf(3.0, 5)?;
    let mut tp = Policy::threshold_for(&delay)?;
    let rep = empirical_kernel_check(&SourceModel::new(0.35)?, &delay, &mut tp, 2_000_000, 1, 100)?;
    println!("state          action     visits   TV");
    for r in rep.rows.iter().filter(|r| r.visits >= 10_000) {
        println!("{:<14} {:<9?} {:>8}   {:.4}", r.state.to_string(), r.action, r.visits, r.tv);
    }
    println!("max TV over rows with >= 1e4 visits: {:.4}", rep.max_tv(10_000));
    Ok(())
}
