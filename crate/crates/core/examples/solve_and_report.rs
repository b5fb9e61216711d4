//! Solve one instance for the average-age objective and report the
//! optimal policy's steady-state metrics.
//!
//! Run with: cargo run --release --example solve_and_report

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    // Two transmission modes over an on-off harvester with a two-slot
    // recovery window.
    let cfg = presets::two_mode_on_off(0.6, 2, 2, 10, 20);
    let prep = prepare(&cfg)?;
    println!(
        "instance: {} states, {} actions, battery scale {}",
        prep.space.len(),
        prep.space.num_actions(),
        prep.scaled.scale()
    );

    let (solved, metrics) =
        solve_with_metrics(&prep, &RewardSpec::AverageAge, &SolverParams::default())?;
    println!(
        "solved in {} iterations (span {:.2e}), gain {:.9}",
        solved.iterations, solved.span_at_stop, solved.gain
    );
    println!("average age        : {:.6}", metrics.avg_age);
    println!("peak-age hit prob  : {:.3e}", metrics.peak_hit_prob);
    println!("average TX power   : {:.6}", metrics.avg_tx_power);
    println!("average battery    : {:.6}", metrics.avg_battery);

    // A few sample rows of the policy: what the sensor does right after a
    // failed low-power transmission, by battery level.
    println!("\naction after a mode-1 transmission at age 5 (battery in scaled units):");
    for battery in (0..=prep.scaled.b_max()).step_by(4) {
        for harvester in 0..2u8 {
            let s = State {
                age: 5,
                mode: SystemMode::JustTx { mode: 0 },
                harvester,
                battery,
            };
            let action = solved.policy.action(prep.space.encode(&s));
            println!(
                "  battery {battery:>2}, harvester {}: {}",
                if harvester == 0 { "off" } else { "on " },
                match action {
                    Action::Idle => "idle".to_string(),
                    Action::Tx { mode } => format!("transmit mode {}", mode + 1),
                }
            );
        }
    }
    Ok(())
}
