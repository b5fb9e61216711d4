//! Print a short sample path of the system slot by slot: transmissions,
//! errors, harvested energy, and battery recovery inside the post-transmit
//! window.
//!
//! Run with: cargo run --release --example sample_path_trace

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    // Cheap mode 2 / reliable mode 4 over an on-off harvester, two-slot
    // recovery window with misses possible.
    let cfg = SystemConfig {
        b_max: 6,
        a_max: 10,
        modes: vec![
            TxMode {
                power: 2,
                error_prob: 0.4,
            },
            TxMode {
                power: 4,
                error_prob: 1e-3,
            },
        ],
        harvester: HarvesterModel {
            matrix: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            powers: vec![0, 2],
        },
        recovery: RecoveryModel {
            n_rec: 2,
            p_rec: 0.7,
        },
    };
    let prep = prepare(&cfg)?;
    let (solved, _) = solve_with_metrics(&prep, &RewardSpec::AverageAge, &SolverParams::default())?;

    let sim_cfg = SimConfig {
        horizon: 30,
        burn_in: 0,
        seed: 2,
        start: prep.space.decode(prep.space.canonical_start()),
    };
    let events = trace(&prep.scaled, &prep.space, &solved.policy, &sim_cfg)?;

    let scale = f64::from(prep.scaled.scale());
    println!("slot  age  mode  hrv  battery  action      outcome  recovered  harvested");
    for e in &events {
        println!(
            "{:>4}  {:>3}  {:>4}  {:>3}  {:>7.1}  {:<10}  {:<7}  {:>9.1}  {:>9.1}",
            e.slot,
            e.state.age,
            e.state.mode.token(),
            if e.state.harvester == 0 { "off" } else { "on" },
            f64::from(e.state.battery) / scale,
            match e.action {
                Action::Idle => "idle".to_string(),
                Action::Tx { mode } => format!("tx mode {}", mode + 1),
            },
            match e.tx_outcome {
                None => "-",
                Some(sim::TxOutcome::Success) => "ok",
                Some(sim::TxOutcome::Error) => "ERROR",
            },
            f64::from(e.recovered) / scale,
            f64::from(e.harvested) / scale,
        );
    }
    println!(
        "\nrecovery fires only in the {} idle slots after a transmission, \
         each with probability {}; misses forfeit that slot's share",
        cfg.recovery.n_rec, cfg.recovery.p_rec
    );
    Ok(())
}
