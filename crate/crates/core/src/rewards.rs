//! State rewards whose long-run average equals (up to sign) the metric
//! being minimized: peak-age hitting probability, average age, or an
//! alpha-weighted combination of the two.

use crate::error::Error;
use crate::statespace::StateSpace;

/// Which objective the average-reward MDP encodes.
///
/// Rewards depend only on the state's age, never on the action:
/// - `PeakHit { r_prime }`: `r_prime < 0` at the age cap, 0 elsewhere; the
///   optimal gain is `r_prime` times the peak-age hitting probability.
/// - `AverageAge`: `-age` everywhere; the optimal gain is minus the
///   average age.
/// - `Weighted { alpha }`: `-alpha * age` below the cap and `-a_max` at the
///   cap, trading average performance against the worst case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardSpec {
    PeakHit { r_prime: f64 },
    AverageAge,
    Weighted { alpha: f64 },
}

impl RewardSpec {
    /// Default peak objective: `r_prime = -1` makes the gain directly
    /// readable as minus the peak-age hitting probability.
    pub fn peak() -> Self {
        RewardSpec::PeakHit { r_prime: -1.0 }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            RewardSpec::PeakHit { r_prime } if !r_prime.is_finite() || r_prime >= 0.0 => {
                Err(Error::ConfigParse(format!(
                    "r_prime must be negative, got {r_prime}"
                )))
            }
            RewardSpec::Weighted { alpha } if !(0.0..=1.0).contains(&alpha) => Err(
                Error::ConfigParse(format!("alpha must be in [0, 1], got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    /// Immediate reward of a state with the given age.
    pub fn reward(&self, age: u32, a_max: u32) -> f64 {
        match *self {
            RewardSpec::PeakHit { r_prime } => {
                if age == a_max {
                    r_prime
                } else {
                    0.0
                }
            }
            RewardSpec::AverageAge => -f64::from(age),
            RewardSpec::Weighted { alpha } => {
                if age == a_max {
                    -f64::from(a_max)
                } else {
                    -alpha * f64::from(age)
                }
            }
        }
    }

    /// Reward of every state, indexed by `StateId`.
    pub fn reward_vector(&self, space: &StateSpace) -> Vec<f64> {
        let a_max = space.a_max();
        space
            .ids()
            .map(|id| self.reward(space.decode(id).age, a_max))
            .collect()
    }
}
