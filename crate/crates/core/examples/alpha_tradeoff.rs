//! Trade average age against the worst case: sweep the weight alpha of the
//! combined objective from pure peak-probability minimization (0) to pure
//! average-age minimization (1).
//!
//! Run with: cargo run --release --example alpha_tradeoff

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    let cfg = presets::two_mode_on_off(0.6, 2, 2, 10, 20);
    let prep = prepare(&cfg)?;
    println!("alpha,avg_age,peak_hit_prob,avg_tx_power,avg_battery");
    for i in 0..=10 {
        let alpha = f64::from(i) / 10.0;
        let (_, m) = solve_with_metrics(
            &prep,
            &RewardSpec::Weighted { alpha },
            &SolverParams::default(),
        )?;
        println!(
            "{alpha},{:.6},{:.6e},{:.4},{:.4}",
            m.avg_age, m.peak_hit_prob, m.avg_tx_power, m.avg_battery
        );
    }
    eprintln!(
        "(raising alpha shifts optimal policies toward lower average age at \
         the cost of a higher peak-age hitting probability)"
    );
    Ok(())
}
