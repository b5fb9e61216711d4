//! Ready-made experiment instances.

use crate::model::{HarvesterModel, RecoveryModel, SystemConfig, TxMode};

/// Two LTE-class transmission modes over an on-off harvester: a cheap
/// unreliable mode (power 3, error 0.4) and an expensive reliable one
/// (power 6, error 1e-3), with symmetric harvester switching probability
/// 0.1. The remaining knobs — recovery window, recovery probability,
/// on-state harvest output, battery capacity, age cap — are not fixed by
/// the mode set and must be supplied.
pub fn two_mode_on_off(
    p_rec: f64,
    n_rec: i64,
    on_harvest: i64,
    b_max: i64,
    a_max: i64,
) -> SystemConfig {
    SystemConfig {
        b_max,
        a_max,
        modes: vec![
            TxMode {
                power: 3,
                error_prob: 0.4,
            },
            TxMode {
                power: 6,
                error_prob: 1e-3,
            },
        ],
        harvester: HarvesterModel {
            matrix: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            powers: vec![0, on_harvest],
        },
        recovery: RecoveryModel { n_rec, p_rec },
    }
}

/// Restricts an instance to a subset of its transmission modes (0-based
/// indices into the original mode list).
pub fn restrict_modes(cfg: &SystemConfig, keep: &[usize]) -> SystemConfig {
    let mut out = cfg.clone();
    out.modes = keep.iter().map(|&i| cfg.modes[i].clone()).collect();
    out
}

/// Disables battery recovery on an instance.
pub fn without_recovery(cfg: &SystemConfig) -> SystemConfig {
    let mut out = cfg.clone();
    out.recovery = RecoveryModel {
        n_rec: 0,
        p_rec: 0.0,
    };
    out
}
