//! Cross-check relative value iteration against exhaustive enumeration of
//! every stationary deterministic policy on a desk-scale instance.
//!
//! Run with: cargo run --release --example brute_force_check

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    // Starved single-mode instance over an on-off harvester: small enough
    // that all policies can be evaluated one by one.
    let cfg = SystemConfig {
        b_max: 2,
        a_max: 2,
        modes: vec![TxMode {
            power: 3,
            error_prob: 0.4,
        }],
        harvester: HarvesterModel {
            matrix: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            powers: vec![0, 2],
        },
        recovery: RecoveryModel {
            n_rec: 1,
            p_rec: 0.7,
        },
    };
    let prep = prepare(&cfg)?;
    let rewards = RewardSpec::AverageAge.reward_vector(&prep.space);

    let oracle = policy_enumeration_oracle(&prep.kernel, &rewards, &prep.space)?;
    println!(
        "enumeration: {} policies evaluated, best gain {:.12}",
        oracle.iterations, oracle.gain
    );

    let rvi = relative_value_iteration(&prep.kernel, &rewards, &SolverParams::default())?
        .require_converged()?;
    println!(
        "value iteration: {} sweeps, gain {:.12}",
        rvi.iterations, rvi.gain
    );
    println!("gain difference: {:.2e}", (rvi.gain - oracle.gain).abs());

    let agree = prep
        .space
        .ids()
        .filter(|&id| rvi.policy.action(id) == oracle.policy.action(id))
        .count();
    println!(
        "policies agree on {agree}/{} states (disagreements, if any, sit on \
         transient states where several actions tie)",
        prep.space.len()
    );
    Ok(())
}
