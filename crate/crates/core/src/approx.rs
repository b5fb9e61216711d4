//! Iterative search for an age cap large enough that the average-age
//! optimal policy almost never reaches it, certifying the finite state
//! space as a faithful stand-in for the uncapped system.

use crate::chain;
use crate::error::Error;
use crate::model::{scale_energies, validate_config, SystemConfig};
use crate::rewards::RewardSpec;
use crate::solver::{relative_value_iteration, Policy, SolverParams};
use crate::statespace::{build_kernel, enumerate_states};

#[derive(Debug, Clone, Copy)]
pub struct ApproxParams {
    /// Initial age cap to try (at least 2).
    pub k0: u32,
    /// Acceptable peak-hit probability at the cap.
    pub epsilon: f64,
    /// Cap increase per coarse step; a final step-1 refinement pass makes
    /// the answer exact regardless.
    pub step: u32,
    /// Hard ceiling on the cap before giving up.
    pub ceiling: u32,
    pub solver: SolverParams,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            k0: 2,
            epsilon: 1e-6,
            step: 5,
            ceiling: 500,
            solver: SolverParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApproxResult {
    /// Smallest evaluated cap with peak probability at or below epsilon.
    pub a_max_final: u32,
    /// Average-age optimal policy at that cap.
    pub policy: Policy,
    pub peak_prob_final: f64,
    /// Evaluated (cap, peak probability) pairs in ascending cap order; every
    /// entry except the last exceeds epsilon.
    pub history: Vec<(u32, f64)>,
}

/// Grows the age cap until the average-age optimal policy's probability of
/// sitting at the cap drops to `epsilon` or below. The cap in `base.a_max`
/// is ignored; each iteration overwrites it with the candidate value. A
/// `k0` that already satisfies the bound returns immediately.
pub fn find_amax(base: &SystemConfig, params: &ApproxParams) -> Result<ApproxResult, Error> {
    assert!(params.k0 >= 2, "k0 must be at least 2");
    assert!(params.epsilon > 0.0, "epsilon must be positive");
    assert!(params.step >= 1, "step must be at least 1");

    let mut history: Vec<(u32, f64)> = Vec::new();
    let mut k = params.k0;
    let (mut policy, mut peak) = evaluate_cap(base, k, &params.solver)?;
    history.push((k, peak));

    // Coarse scan.
    while peak > params.epsilon {
        let next = k.saturating_add(params.step);
        if next > params.ceiling {
            return Err(Error::Diverged {
                ceiling: params.ceiling,
            });
        }
        k = next;
        let (p, prob) = evaluate_cap(base, k, &params.solver)?;
        policy = p;
        peak = prob;
        history.push((k, peak));
    }

    // Refinement: the answer lies in (last failing cap, k]. Walk up by one
    // from the last cap that exceeded epsilon.
    if params.step > 1 && history.len() >= 2 {
        let (low, _) = history[history.len() - 2];
        let coarse_hit = k;
        let mut refined = low + 1;
        while refined < coarse_hit {
            let (p, prob) = evaluate_cap(base, refined, &params.solver)?;
            history.insert(history.len() - 1, (refined, prob));
            if prob <= params.epsilon {
                policy = p;
                peak = prob;
                k = refined;
                // Drop the superseded coarse entry so the history stays an
                // ascending scan whose only satisfying entry is the last.
                history.pop();
                break;
            }
            refined += 1;
        }
    }

    Ok(ApproxResult {
        a_max_final: k,
        policy,
        peak_prob_final: peak,
        history,
    })
}

/// Solves the average-age objective at cap `k` and reports the optimal
/// policy's probability of sitting at the cap.
pub fn evaluate_cap(
    base: &SystemConfig,
    k: u32,
    solver: &SolverParams,
) -> Result<(Policy, f64), Error> {
    let mut cfg = base.clone();
    cfg.a_max = i64::from(k);
    let scaled = scale_energies(&validate_config(cfg)?);
    let space = enumerate_states(&scaled)?;
    let kernel = build_kernel(&scaled, &space)?;
    let rewards = RewardSpec::AverageAge.reward_vector(&space);
    let solved = relative_value_iteration(&kernel, &rewards, solver)?.require_converged()?;
    let induced = chain::induce_chain(&kernel, &solved.policy)?;
    let class = chain::recurrent_class(&induced, space.canonical_start())?;
    let dist = chain::steady_state(&induced, &class)?;
    let metrics = chain::metrics(&dist, &space, &solved.policy, &scaled);
    Ok((solved.policy, metrics.peak_hit_prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HarvesterModel, RecoveryModel, TxMode};

    fn error_free() -> SystemConfig {
        SystemConfig {
            b_max: 1,
            a_max: 2, // overwritten by the search
            modes: vec![TxMode {
                power: 1,
                error_prob: 0.0,
            }],
            harvester: HarvesterModel {
                matrix: vec![vec![1.0]],
                powers: vec![1],
            },
            recovery: RecoveryModel {
                n_rec: 0,
                p_rec: 0.0,
            },
        }
    }

    fn lossy() -> SystemConfig {
        SystemConfig {
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
        }
    }

    #[test]
    fn satisfied_initial_cap_returns_immediately() {
        let result = find_amax(&error_free(), &ApproxParams::default()).unwrap();
        assert_eq!(result.a_max_final, 2);
        assert_eq!(result.peak_prob_final, 0.0);
        assert_eq!(result.history.len(), 1);
    }

    #[test]
    fn history_entries_before_the_last_exceed_epsilon() {
        let params = ApproxParams {
            epsilon: 1e-4,
            ..ApproxParams::default()
        };
        let result = find_amax(&lossy(), &params).unwrap();
        let (last, rest) = result.history.split_last().unwrap();
        assert_eq!(last.0, result.a_max_final);
        assert!(last.1 <= params.epsilon);
        for (k, p) in rest {
            assert!(*k < result.a_max_final);
            assert!(*p > params.epsilon, "cap {k} already satisfied: {p}");
        }
        // History is an ascending scan.
        for pair in result.history.windows(2) {
            assert!(pair[0].0 < pair[1].0);
        }
    }

    #[test]
    fn step_one_matches_exhaustive_grid_scan() {
        let params = ApproxParams {
            epsilon: 1e-4,
            step: 1,
            ..ApproxParams::default()
        };
        let result = find_amax(&lossy(), &params).unwrap();
        // Independent scan over every cap from k0 upward.
        let mut expected = None;
        for k in 2..=result.a_max_final + 3 {
            let (_, p) = evaluate_cap(&lossy(), k, &params.solver).unwrap();
            if p <= params.epsilon {
                expected = Some(k);
                break;
            }
        }
        assert_eq!(Some(result.a_max_final), expected);
    }

    #[test]
    fn coarse_step_agrees_with_step_one() {
        let fine = find_amax(
            &lossy(),
            &ApproxParams {
                epsilon: 1e-4,
                step: 1,
                ..ApproxParams::default()
            },
        )
        .unwrap();
        let coarse = find_amax(
            &lossy(),
            &ApproxParams {
                epsilon: 1e-4,
                step: 5,
                ..ApproxParams::default()
            },
        )
        .unwrap();
        assert_eq!(fine.a_max_final, coarse.a_max_final);
    }

    #[test]
    fn ceiling_overflow_reports_divergence() {
        // Every transmission fails: the cap is always hit with probability 1.
        let mut cfg = lossy();
        cfg.modes[0].error_prob = 1.0;
        let params = ApproxParams {
            ceiling: 12,
            ..ApproxParams::default()
        };
        match find_amax(&cfg, &params) {
            Err(Error::Diverged { ceiling: 12 }) => {}
            other => panic!("expected Diverged, got {other:?}"),
        }
    }
}
