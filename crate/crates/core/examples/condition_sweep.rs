//! Where is the threshold preemptive policy provably optimal? Sweeps the
//! Zipf exponent, support bound and source flip probability.

use aoii::analytic::check_condition1;
use aoii::model::{DelayModel, SourceModel};

fn main() -> aoii::Result<()> {
    let ps: Vec<f64> = (1..=9).map(|k| k as f64 / 20.0).collect();
    println!("   a   verdict");
    for k in 0..=20 {
        let a = k as f64 / 4.0;
        let mut pass = 0;
        for t_max in 3..=11 {
            for &p in &ps {
                pass += check_condition1(&SourceModel::new(p)?, &DelayModel::zipf(a, t_max)?)?.satisfied as usize;
            }
        }
        let verdict = match pass {
            0 => "fail".to_string(),
            81 => "pass".to_string(),
            n => format!("mixed ({n}/81)"),
        };
        println!("{a:>4}   {verdict}");
    }

    println!("\na = 2.25 (rows t_max, columns p = 0.05..0.45; v holds, x fails)");
    for t_max in 3..=11 {
        let row: String = ps
            .iter()
            .map(|&p| {
                let ok = check_condition1(&SourceModel::new(p).unwrap(), &DelayModel::zipf(2.25, t_max).unwrap())
                    .unwrap()
                    .satisfied;
                if ok { 'v' } else { 'x' }
            })
            .collect();
        println!("{t_max:>3}  {row}");
    }
    Ok(())
}
