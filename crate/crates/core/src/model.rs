//! Problem instance definition, validation, and energy-unit scaling.
//!
//! Energy quantities in a config file are positive integers in "config
//! units". Battery recovery returns `power / n_rec` units per successful
//! recovery slot, which is fractional whenever `n_rec` does not divide the
//! mode power. To keep every battery level an exact integer, all energies
//! are multiplied by `scale = max(n_rec, 1)` before the state space is
//! built; reported metrics are divided back into config units.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigViolation, Error};

/// A transmission mode: spend `power` energy units in one slot, fail with
/// probability `error_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxMode {
    pub power: i64,
    pub error_prob: f64,
}

/// Finite-state Markov model of the harvester. `matrix[i][j]` is the
/// probability of moving from harvester state `i` to `j` in one slot;
/// `powers[i]` is the energy credited to the battery per slot spent in
/// state `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvesterModel {
    pub matrix: Vec<Vec<f64>>,
    pub powers: Vec<i64>,
}

impl HarvesterModel {
    pub fn num_states(&self) -> usize {
        self.matrix.len()
    }
}

/// Battery recovery window: after a transmission, each of the next `n_rec`
/// idle slots recovers `power / n_rec` units with probability `p_rec`.
/// `n_rec = 0` disables recovery entirely (`p_rec` is then ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryModel {
    pub n_rec: i64,
    pub p_rec: f64,
}

/// A full problem instance in config units. One TOML file holds one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub b_max: i64,
    pub a_max: i64,
    pub modes: Vec<TxMode>,
    pub harvester: HarvesterModel,
    pub recovery: RecoveryModel,
}

/// Proof that a `SystemConfig` passed `validate_config`.
#[derive(Debug, Clone)]
pub struct ValidatedConfig(SystemConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &SystemConfig {
        &self.0
    }

    pub fn into_inner(self) -> SystemConfig {
        self.0
    }
}

const ROW_SUM_TOL: f64 = 1e-12;
// Keeps scaled energies comfortably inside u32 and the state-space math
// inside u64.
const MAX_ENERGY: i64 = 1_000_000_000;

/// Checks every type invariant of the instance and reports all violations
/// at once.
pub fn validate_config(raw: SystemConfig) -> Result<ValidatedConfig, Error> {
    let mut violations = Vec::new();

    if raw.modes.is_empty() {
        violations.push(ConfigViolation::EmptyModeList);
    }
    for (idx, mode) in raw.modes.iter().enumerate() {
        if mode.power < 1 {
            violations.push(ConfigViolation::NegativeQuantity {
                field: format!("modes[{idx}].power"),
                value: mode.power.to_string(),
                requirement: "must be a positive integer",
            });
        }
        if mode.power > MAX_ENERGY {
            violations.push(ConfigViolation::QuantityTooLarge {
                field: format!("modes[{idx}].power"),
                value: mode.power,
                limit: MAX_ENERGY,
            });
        }
        if !(0.0..=1.0).contains(&mode.error_prob) {
            violations.push(ConfigViolation::ProbabilityOutOfRange {
                field: format!("modes[{idx}].error_prob"),
                value: mode.error_prob,
            });
        }
    }

    let n_h = raw.harvester.num_states();
    if n_h == 0 {
        violations.push(ConfigViolation::MalformedHarvester {
            detail: "matrix has no rows".into(),
        });
    }
    if raw.harvester.powers.len() != n_h {
        violations.push(ConfigViolation::MalformedHarvester {
            detail: format!(
                "{} power entries for {} matrix rows",
                raw.harvester.powers.len(),
                n_h
            ),
        });
    }
    for (i, row) in raw.harvester.matrix.iter().enumerate() {
        if row.len() != n_h {
            violations.push(ConfigViolation::MalformedHarvester {
                detail: format!("row {i} has {} entries, expected {n_h}", row.len()),
            });
            continue;
        }
        for (j, &q) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&q) {
                violations.push(ConfigViolation::MatrixEntryOutOfRange {
                    row: i,
                    col: j,
                    value: q,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            violations.push(ConfigViolation::InvalidStochasticMatrix { row: i, sum });
        }
    }
    for (i, &p) in raw.harvester.powers.iter().enumerate() {
        if p < 0 {
            violations.push(ConfigViolation::NegativeQuantity {
                field: format!("harvester.powers[{i}]"),
                value: p.to_string(),
                requirement: "must be nonnegative",
            });
        }
        if p > MAX_ENERGY {
            violations.push(ConfigViolation::QuantityTooLarge {
                field: format!("harvester.powers[{i}]"),
                value: p,
                limit: MAX_ENERGY,
            });
        }
    }

    if raw.recovery.n_rec < 0 {
        violations.push(ConfigViolation::NegativeQuantity {
            field: "recovery.n_rec".into(),
            value: raw.recovery.n_rec.to_string(),
            requirement: "must be nonnegative",
        });
    }
    if raw.recovery.n_rec > 1000 {
        violations.push(ConfigViolation::QuantityTooLarge {
            field: "recovery.n_rec".into(),
            value: raw.recovery.n_rec,
            limit: 1000,
        });
    }
    if raw.recovery.n_rec > 0 && !(0.0..=1.0).contains(&raw.recovery.p_rec) {
        violations.push(ConfigViolation::ProbabilityOutOfRange {
            field: "recovery.p_rec".into(),
            value: raw.recovery.p_rec,
        });
    }

    if raw.b_max < 0 {
        violations.push(ConfigViolation::NegativeQuantity {
            field: "b_max".into(),
            value: raw.b_max.to_string(),
            requirement: "must be nonnegative",
        });
    }
    if raw.b_max > MAX_ENERGY {
        violations.push(ConfigViolation::QuantityTooLarge {
            field: "b_max".into(),
            value: raw.b_max,
            limit: MAX_ENERGY,
        });
    }
    if raw.a_max < 2 {
        violations.push(ConfigViolation::NegativeQuantity {
            field: "a_max".into(),
            value: raw.a_max.to_string(),
            requirement: "must be at least 2",
        });
    }

    // At least one mode must be usable at full battery under the best
    // harvester state, otherwise the sensor can never transmit.
    if !raw.modes.is_empty() && !raw.harvester.powers.is_empty() {
        let needed = raw.modes.iter().map(|m| m.power).min().unwrap();
        let best_harvest = raw.harvester.powers.iter().copied().max().unwrap().max(0);
        let available = raw.b_max.max(0) + best_harvest;
        if needed > available {
            violations.push(ConfigViolation::InfeasibleInstance { needed, available });
        }
    }

    if violations.is_empty() {
        Ok(ValidatedConfig(raw))
    } else {
        Err(Error::InvalidConfig { violations })
    }
}

/// A transmission mode in scaled units. `increment` is the exact integer
/// amount recovered per successful recovery slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMode {
    pub power: u32,
    pub increment: u32,
    pub error_prob: f64,
}

/// The instance with all energies multiplied by `scale = max(n_rec, 1)`.
/// Every battery level, harvest amount, and recovery increment is an exact
/// integer in scaled units.
#[derive(Debug, Clone)]
pub struct ScaledConfig {
    scale: u32,
    b_max: u32,
    a_max: u32,
    modes: Vec<ScaledMode>,
    num_harvesters: usize,
    harvester_matrix: Vec<f64>,
    harvest_powers: Vec<u32>,
    n_rec: u32,
    p_rec: f64,
}

impl ScaledConfig {
    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Battery capacity in scaled units.
    pub fn b_max(&self) -> u32 {
        self.b_max
    }

    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    pub fn modes(&self) -> &[ScaledMode] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn num_harvesters(&self) -> usize {
        self.num_harvesters
    }

    /// Transition probability between harvester states (0-based indices).
    pub fn q(&self, from: usize, to: usize) -> f64 {
        self.harvester_matrix[from * self.num_harvesters + to]
    }

    /// Per-slot harvest in scaled units at harvester state `i` (0-based).
    pub fn harvest_power(&self, i: usize) -> u32 {
        self.harvest_powers[i]
    }

    pub fn n_rec(&self) -> u32 {
        self.n_rec
    }

    pub fn p_rec(&self) -> f64 {
        self.p_rec
    }

    /// Converts a scaled energy quantity back to config units.
    pub fn descale_energy(&self, scaled: f64) -> f64 {
        scaled / self.scale as f64
    }

    /// Reconstructs the original config-unit instance exactly.
    pub fn descale(&self) -> SystemConfig {
        let s = self.scale as i64;
        SystemConfig {
            b_max: self.b_max as i64 / s,
            a_max: self.a_max as i64,
            modes: self
                .modes
                .iter()
                .map(|m| TxMode {
                    power: m.power as i64 / s,
                    error_prob: m.error_prob,
                })
                .collect(),
            harvester: HarvesterModel {
                matrix: (0..self.num_harvesters)
                    .map(|i| (0..self.num_harvesters).map(|j| self.q(i, j)).collect())
                    .collect(),
                powers: self
                    .harvest_powers
                    .iter()
                    .map(|&p| p as i64 / s)
                    .collect(),
            },
            recovery: RecoveryModel {
                n_rec: self.n_rec as i64,
                p_rec: self.p_rec,
            },
        }
    }
}

/// Multiplies every energy quantity by `max(n_rec, 1)` so the per-slot
/// recovery increment `power / n_rec` becomes the exact integer equal to
/// the mode's config-unit power.
pub fn scale_energies(cfg: &ValidatedConfig) -> ScaledConfig {
    let raw = cfg.get();
    let n_rec = raw.recovery.n_rec as u32;
    let scale = n_rec.max(1);
    let s = scale as i64;
    let n_h = raw.harvester.num_states();
    let mut matrix = Vec::with_capacity(n_h * n_h);
    for row in &raw.harvester.matrix {
        matrix.extend_from_slice(row);
    }
    ScaledConfig {
        scale,
        b_max: (raw.b_max * s) as u32,
        a_max: raw.a_max as u32,
        modes: raw
            .modes
            .iter()
            .map(|m| ScaledMode {
                power: (m.power * s) as u32,
                // scaled_power / n_rec == config-unit power, exact.
                increment: if n_rec > 0 { m.power as u32 } else { 0 },
                error_prob: m.error_prob,
            })
            .collect(),
        num_harvesters: n_h,
        harvester_matrix: matrix,
        harvest_powers: raw.harvester.powers.iter().map(|&p| (p * s) as u32).collect(),
        n_rec,
        // Never consulted when n_rec = 0, but kept so descaling is exact.
        p_rec: raw.recovery.p_rec,
    }
}

/// Parses an instance from TOML text.
pub fn config_from_toml(text: &str) -> Result<SystemConfig, Error> {
    toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
}

/// Loads an instance from a TOML file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig, Error> {
    let text = fs::read_to_string(path.as_ref())?;
    config_from_toml(&text)
}

/// Serializes an instance to TOML.
pub fn config_to_toml(cfg: &SystemConfig) -> String {
    toml::to_string(cfg).expect("config serializes to TOML")
}

/// Short deterministic fingerprint of an instance, independent of file
/// formatting. Recorded in CSV output so every row names its input.
pub fn config_fingerprint(cfg: &SystemConfig) -> String {
    // FNV-1a over a canonical rendering.
    let canonical = format!("{cfg:?}");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
