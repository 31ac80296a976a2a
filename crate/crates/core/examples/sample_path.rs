//! A short sample path with random transmission decisions and f(Δ) = 2Δ,
//! written as CSV to stdout for plotting.

use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use aoii::sim::{sample_path, write_trace_csv, RandomTransmitter};

fn main() -> aoii::Result<()> {
    let f = PenaltyFunction::linear(2.0, 0.0)?;
    let mut tx = RandomTransmitter::new(0.3, 17)?;
    let rows = sample_path(&SourceModel::new(0.3)?, &DelayModel::zipf(1.0, 3)?, &f, &mut tx, 30, 4)?;
    write_trace_csv(&rows, std::io::stdout())?;
    let penalties: Vec<f64> = rows.iter().map(|r| f.eval(r.delta)).collect();
    eprintln!("penalty: {penalties:?}");
    Ok(())
}
