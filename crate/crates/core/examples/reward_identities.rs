//! The two reward equivalences that make the objectives solvable as
//! average-reward MDPs: with the peak reward (-1 at the age cap) the gain
//! equals minus the peak-age hitting probability, and with reward -age the
//! gain equals minus the average age. Both sides are computed through
//! different routes (dynamic programming vs stationary distribution).
//!
//! Run with: cargo run --release --example reward_identities

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    let cfg = presets::two_mode_on_off(0.6, 2, 2, 8, 15);
    let prep = prepare(&cfg)?;
    let params = SolverParams::default();

    let (peak_solved, peak_metrics) = solve_with_metrics(&prep, &RewardSpec::peak(), &params)?;
    println!("peak objective:");
    println!("  gain (value iteration)      = {:.12e}", peak_solved.gain);
    println!(
        "  -peak_hit (chain solve)     = {:.12e}",
        -peak_metrics.peak_hit_prob
    );
    println!(
        "  |difference|                = {:.2e}",
        (peak_solved.gain + peak_metrics.peak_hit_prob).abs()
    );

    let (age_solved, age_metrics) = solve_with_metrics(&prep, &RewardSpec::AverageAge, &params)?;
    println!("average-age objective:");
    println!("  gain (value iteration)      = {:.12}", age_solved.gain);
    println!("  -avg_age (chain solve)      = {:.12}", -age_metrics.avg_age);
    println!(
        "  |difference|                = {:.2e}",
        (age_solved.gain + age_metrics.avg_age).abs()
    );

    // The identities hold for any policy, not just the optimum: evaluate
    // the peak-optimal policy under the age reward.
    let age_rewards = RewardSpec::AverageAge.reward_vector(&prep.space);
    let cross = evaluate_policy(&prep.kernel, &peak_solved.policy, &age_rewards, &params)?
        .require_converged()?;
    let cross_metrics = policy_metrics(&prep, &peak_solved.policy)?;
    println!("peak-optimal policy under the age reward:");
    println!("  gain                        = {:.12}", cross.gain);
    println!("  -avg_age                    = {:.12}", -cross_metrics.avg_age);
    println!(
        "  (the peak-optimal policy pays {:.3} extra slots of average age)",
        cross_metrics.avg_age - age_metrics.avg_age
    );
    Ok(())
}
