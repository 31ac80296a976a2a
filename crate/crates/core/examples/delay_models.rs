//! Build the supported delay models and print their pmf and hazards.

use aoii::model::{validate, DelayKind, DelayModel};

fn main() -> aoii::Result<()> {
    let models = [
        DelayModel::geometric(0.7)?,
        DelayModel::zipf(3.0, 5)?,
        DelayModel::explicit(vec![0.2, 0.0, 0.5, 0.3])?,
        DelayModel::deterministic(2)?,
    ];
    for m in &models {
        println!("{}  mean {:.4}", m.kind(), m.mean());
        println!("  t   pmf        hazard");
        for t in 1..=m.t_max().unwrap_or(5) {
            println!("  {t}   {:.6}   {:.6}", m.pmf(t)?, m.hazard(t)?);
        }
    }

    // Malformed specifications are rejected with a report.
    let report = validate(&DelayKind::Explicit { pmf: vec![0.6, 0.6] });
    println!("\n{report}");
    Ok(())
}
