//! Optimal vs non-preemptive (lazy threshold) average AoII as the source
//! gets faster, under geometric and Zipf delay.

use aoii::cli::commands::perf;
use aoii::cli::config::{CommandKind, Family, Overrides, Resolved, SweepParam};

fn main() -> aoii::Result<()> {
    for (family, sweep) in [(Family::Geometric, SweepParam::P), (Family::Zipf, SweepParam::TMax)] {
        let o = Overrides { family: Some(family), sweep: Some(sweep), p: Some(0.35), ..Default::default() };
        let cfg = Resolved::resolve(CommandKind::Perf, o, None)?;
        println!("{family:?}, sweeping {sweep:?}");
        println!("  value   optimal    lazy       gain    source");
        for r in perf(&cfg)? {
            println!(
                "  {:<6}  {:.6}  {:.6}  {:>5.2}%  {}",
                r.value,
                r.theta_optimal,
                r.theta_lazy_threshold,
                100.0 * (1.0 - r.theta_optimal / r.theta_lazy_threshold),
                r.optimal_source
            );
        }
    }
    Ok(())
}
