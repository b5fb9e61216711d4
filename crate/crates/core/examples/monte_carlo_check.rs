//! Validate the analytical steady-state metrics against a seeded Monte
//! Carlo trajectory of the physical system.
//!
//! Run with: cargo run --release --example monte_carlo_check

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    let cfg = presets::two_mode_on_off(0.6, 2, 2, 8, 20);
    let prep = prepare(&cfg)?;
    let (solved, analytic) =
        solve_with_metrics(&prep, &RewardSpec::AverageAge, &SolverParams::default())?;

    let sim_cfg = SimConfig {
        horizon: 2_000_000,
        burn_in: 10_000,
        seed: 7,
        start: prep.space.decode(prep.space.canonical_start()),
    };
    let empirical = simulate(&prep.scaled, &prep.space, &solved.policy, &sim_cfg)?;

    println!("metric            analytical      simulated (+/- 1 s.e.)");
    let row = |name: &str, truth: f64, est: &sim::Estimate| {
        println!(
            "{name:<16} {truth:>12.6}   {:>12.6} +/- {:.2e}   ({:+.2} s.e.)",
            est.mean,
            est.std_err,
            (est.mean - truth) / est.std_err.max(1e-300)
        );
    };
    row("avg_age", analytic.avg_age, &empirical.avg_age);
    row("peak_hit_prob", analytic.peak_hit_prob, &empirical.peak_hit_prob);
    row("avg_tx_power", analytic.avg_tx_power, &empirical.avg_tx_power);
    row("avg_battery", analytic.avg_battery, &empirical.avg_battery);
    println!(
        "\n{} slots measured after a {}-slot burn-in, seed {}",
        empirical.slots_counted, sim_cfg.burn_in, sim_cfg.seed
    );
    Ok(())
}
