//! Shared helpers for integration tests: randomized instances, random
//! feasible policies, and structural kernel checks.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aoi_harvest::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid instance within the desk-scale bounds (modes <= 3,
/// recovery window <= 3, harvester states <= 3, battery <= 15, age cap
/// <= 12). Harvester rows are strictly positive with a heavy diagonal, so
/// the harvester chain is irreducible and lazy.
pub fn random_instance(rng: &mut ChaCha8Rng) -> SystemConfig {
    let num_modes = rng.gen_range(1..=3);
    let n_rec = rng.gen_range(0..=3);
    let n_h = rng.gen_range(1..=3);
    let b_max = rng.gen_range(0..=15);
    let a_max = rng.gen_range(2..=12);

    let modes: Vec<TxMode> = (0..num_modes)
        .map(|_| TxMode {
            power: rng.gen_range(1..=6),
            error_prob: match rng.gen_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen::<f64>(),
            },
        })
        .collect();

    let matrix: Vec<Vec<f64>> = (0..n_h)
        .map(|i| {
            let raw: Vec<f64> = (0..n_h).map(|_| 0.05 + rng.gen::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|r| 0.5 * r / sum).collect();
            row[i] += 0.5;
            // Tighten the row sum to exactly 1.
            let total: f64 = row.iter().sum();
            row[i] += 1.0 - total;
            row
        })
        .collect();
    let mut powers: Vec<i64> = (0..n_h).map(|_| rng.gen_range(0..=4)).collect();

    // Keep the instance feasible: some mode must be usable at full battery
    // under the best harvester state.
    let min_power = modes.iter().map(|m| m.power).min().unwrap();
    if min_power > b_max + powers.iter().copied().max().unwrap() {
        powers[0] = min_power - b_max;
    }

    SystemConfig {
        b_max,
        a_max,
        modes,
        harvester: HarvesterModel { matrix, powers },
        recovery: RecoveryModel {
            n_rec,
            p_rec: rng.gen::<f64>(),
        },
    }
}

/// Uniformly random feasible action in every state, retried until the
/// induced chain has a unique recurrent class (a random policy on an
/// arbitrary instance can be multichain, which the analysis rejects).
pub fn random_unichain_policy(prep: &Prepared, rng: &mut ChaCha8Rng) -> Policy {
    for _ in 0..200 {
        let actions: Vec<Action> = prep
            .space
            .ids()
            .map(|id| {
                let feasible = feasible_actions(&prep.space.decode(id), &prep.scaled);
                feasible[rng.gen_range(0..feasible.len())]
            })
            .collect();
        let policy = Policy::from_actions(actions);
        let induced = induce_chain(&prep.kernel, &policy).expect("total policy");
        if recurrent_class(&induced, prep.space.canonical_start()).is_ok() {
            return policy;
        }
    }
    panic!("no unichain random policy found in 200 draws");
}

/// Time-average (Cesaro) metrics and chain-side gain of a policy; valid
/// for periodic chains as well.
pub fn cesaro_eval(prep: &Prepared, policy: &Policy, rewards: &[f64]) -> (Metrics, f64) {
    let induced = induce_chain(&prep.kernel, policy).unwrap();
    let class = recurrent_class(&induced, prep.space.canonical_start()).unwrap();
    let dist = chain::cesaro_distribution(&induced, &class).unwrap();
    let m = metrics(&dist, &prep.space, policy, &prep.scaled);
    let gain = average_reward(&dist, rewards);
    (m, gain)
}

/// Verifies every structural invariant of the kernel: rows exist exactly
/// for feasible pairs and sum to one, ages step or reset correctly,
/// batteries stay in range, and the system mode follows the recovery
/// window bookkeeping.
pub fn check_kernel_structure(prep: &Prepared) -> Result<f64, String> {
    let space = &prep.space;
    let cfg = &prep.scaled;
    let kernel = &prep.kernel;
    let mut worst_row_gap = 0.0f64;
    for id in space.ids() {
        let s = space.decode(id);
        let feasible = feasible_actions(&s, cfg);
        for a in 0..space.num_actions() {
            let action = Action::from_index(a);
            let (nexts, probs) = kernel.row(id, action);
            if !feasible.contains(&action) {
                if !nexts.is_empty() {
                    return Err(format!("infeasible ({s}, {action}) has a kernel row"));
                }
                continue;
            }
            if nexts.is_empty() {
                return Err(format!("feasible ({s}, {action}) has no kernel row"));
            }
            let sum: f64 = probs.iter().sum();
            worst_row_gap = worst_row_gap.max((sum - 1.0).abs());
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("row ({s}, {action}) sums to {sum}"));
            }
            let aged = (s.age + 1).min(space.a_max());
            for (&n, &p) in nexts.iter().zip(probs) {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(format!("row ({s}, {action}) has probability {p}"));
                }
                let t = space.decode(StateId(n));
                if t.battery > cfg.b_max() {
                    return Err(format!("battery out of range: {s} -> {t}"));
                }
                match action {
                    Action::Idle => {
                        if t.age != aged {
                            return Err(format!("idle age must increment: {s} -> {t}"));
                        }
                        let window = match s.mode {
                            SystemMode::JustTx { mode } if cfg.n_rec() >= 1 => {
                                Some((mode, 1u8))
                            }
                            SystemMode::PostTx { mode, idle_slots }
                                if (idle_slots as u32) < cfg.n_rec() =>
                            {
                                Some((mode, idle_slots + 1))
                            }
                            _ => None,
                        };
                        match window {
                            Some((m, j)) => {
                                if t.mode
                                    != (SystemMode::PostTx {
                                        mode: m,
                                        idle_slots: j,
                                    })
                                {
                                    return Err(format!("bad window step: {s} -> {t}"));
                                }
                                let base = s.battery + cfg.harvest_power(s.harvester as usize);
                                let no_rec = base.min(cfg.b_max());
                                let rec = (base + cfg.modes()[m as usize].increment)
                                    .min(cfg.b_max());
                                if t.battery != no_rec && t.battery != rec {
                                    return Err(format!("bad idle battery: {s} -> {t}"));
                                }
                            }
                            None => {
                                if t.mode != SystemMode::LongIdle {
                                    return Err(format!(
                                        "idle outside window must go long idle: {s} -> {t}"
                                    ));
                                }
                                let expected = (s.battery
                                    + cfg.harvest_power(s.harvester as usize))
                                .min(cfg.b_max());
                                if t.battery != expected {
                                    return Err(format!("bad idle battery: {s} -> {t}"));
                                }
                            }
                        }
                    }
                    Action::Tx { mode } => {
                        if t.mode != (SystemMode::JustTx { mode }) {
                            return Err(format!("transmit must set just-tx: {s} -> {t}"));
                        }
                        if t.age != 1 && t.age != aged {
                            return Err(format!("bad transmit age: {s} -> {t}"));
                        }
                        let supply = s.battery + cfg.harvest_power(s.harvester as usize);
                        let power = cfg.modes()[mode as usize].power;
                        if supply < power {
                            return Err(format!("transmit row without energy: {s}"));
                        }
                        let expected = (supply - power).min(cfg.b_max());
                        if t.battery != expected {
                            return Err(format!("bad transmit battery: {s} -> {t}"));
                        }
                    }
                }
                // Age 1 appears only as the success branch of a transmit.
                if t.age == 1 && action == Action::Idle {
                    return Err(format!("idle transition reached age 1: {s} -> {t}"));
                }
            }
        }
    }
    Ok(worst_row_gap)
}
