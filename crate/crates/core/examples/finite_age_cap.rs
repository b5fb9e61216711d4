//! Pick the age cap automatically: grow the cap until the average-age
//! optimal policy has negligible probability of ever sitting on it, so the
//! finite model faithfully approximates the uncapped system.
//!
//! Run with: cargo run --release --example finite_age_cap

use aoi_harvest::*;

fn main() -> Result<(), Error> {
    // One lossy mode over an on-off harvester; the cap in a_max is
    // overwritten by the search.
    let base = SystemConfig {
        b_max: 3,
        a_max: 2,
        modes: vec![TxMode {
            power: 1,
            error_prob: 0.4,
        }],
        harvester: HarvesterModel {
            matrix: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            powers: vec![0, 1],
        },
        recovery: RecoveryModel {
            n_rec: 0,
            p_rec: 0.0,
        },
    };
    let params = ApproxParams {
        k0: 2,
        epsilon: 1e-5,
        step: 5,
        ceiling: 200,
        solver: SolverParams::default(),
    };
    let result = find_amax(&base, &params)?;

    println!("K,peak_prob");
    for (k, p) in &result.history {
        println!("{k},{p:.6e}");
    }
    println!(
        "\ncertified cap: {} (peak probability {:.3e} <= epsilon {:.0e})",
        result.a_max_final, result.peak_prob_final, params.epsilon
    );
    println!(
        "note: every cap below the answer was tried and exceeded epsilon, so \
         the returned cap is the smallest admissible one"
    );
    Ok(())
}
