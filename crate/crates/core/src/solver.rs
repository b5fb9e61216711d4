//! Average-reward solvers: relative value iteration for optimal policies,
//! the same iteration restricted to a fixed policy for evaluation, and an
//! exhaustive policy-enumeration oracle for desk-scale verification.

use std::io::{BufRead, Write};

use crate::chain;
use crate::error::Error;
use crate::statespace::{Action, StateId, StateSpace, TransitionKernel};

/// A stationary deterministic policy: one action per state id. Every state
/// keeps idle feasible, so the map is total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<Action>,
}

impl Policy {
    pub fn from_actions(actions: Vec<Action>) -> Self {
        Policy { actions }
    }

    pub fn action(&self, s: StateId) -> Action {
        self.actions[s.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Canonical text form: `state_id age mode harvester battery action`,
    /// one row per state. Harvester and mode tokens are 1-based; battery is
    /// in scaled units.
    pub fn write_text(&self, space: &StateSpace, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# state_id age mode harvester battery action")?;
        for id in space.ids() {
            let s = space.decode(id);
            writeln!(
                w,
                "{} {} {} {} {} {}",
                id.0,
                s.age,
                s.mode.token(),
                s.harvester + 1,
                s.battery,
                self.action(id).token()
            )?;
        }
        Ok(())
    }

    /// Parses the text form, checking every row against the state space so
    /// a policy file cannot silently be applied to the wrong instance.
    pub fn read_text(space: &StateSpace, r: impl BufRead) -> Result<Policy, Error> {
        let mut actions = vec![None; space.len()];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| {
                Error::PolicyFile(format!("line {}: {what}: {line}", lineno + 1))
            };
            if fields.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let id: u32 = fields[0].parse().map_err(|_| bad("bad state id"))?;
            if id as usize >= space.len() {
                return Err(bad("state id out of range"));
            }
            let s = space.decode(StateId(id));
            let age: u32 = fields[1].parse().map_err(|_| bad("bad age"))?;
            let mode = crate::statespace::SystemMode::parse_token(fields[2])
                .ok_or_else(|| bad("bad mode token"))?;
            let harvester: u8 = fields[3].parse().map_err(|_| bad("bad harvester"))?;
            let battery: u32 = fields[4].parse().map_err(|_| bad("bad battery"))?;
            if s.age != age || s.mode != mode || s.harvester + 1 != harvester || s.battery != battery
            {
                return Err(bad("state fields disagree with the instance"));
            }
            let action = Action::parse_token(fields[5]).ok_or_else(|| bad("bad action"))?;
            if actions[id as usize].replace(action).is_some() {
                return Err(bad("duplicate state id"));
            }
        }
        let actions: Option<Vec<Action>> = actions.into_iter().collect();
        match actions {
            Some(actions) => Ok(Policy { actions }),
            None => Err(Error::PolicyFile("missing rows for some states".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    /// Stop once the span of successive value differences drops below this.
    pub eps_c: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            eps_c: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub policy: Policy,
    /// Long-run average reward per slot.
    pub gain: f64,
    /// Relative value (bias) vector, renormalized at state 0.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub span_at_stop: f64,
    pub converged: bool,
    /// Whether the difference span decreased monotonically, as theory
    /// predicts; a false value signals a numerical anomaly.
    pub span_monotone: bool,
}

impl SolveResult {
    pub fn require_converged(self) -> Result<SolveResult, Error> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                span: self.span_at_stop,
            })
        }
    }
}

/// Relative value iteration for the optimal average reward.
///
/// Each sweep applies the Bellman backup `W(s) = R_s + max_d sum_s'
/// p(s'|s,d) V(s')`, reads the gain off the difference `W - V`, applies the
/// damped update `V <- (W + V) / 2`, and renormalizes at state 0. The
/// damping makes the iteration converge even when an induced chain is
/// periodic (battery parity cycles can produce one) and leaves the gain
/// unbiased: at the fixed point the raw backup difference still equals the
/// gain. Ties in the greedy policy break toward the lowest action index,
/// so idling wins exact ties.
pub fn relative_value_iteration(
    kernel: &TransitionKernel,
    rewards: &[f64],
    params: &SolverParams,
) -> Result<SolveResult, Error> {
    iterate(kernel, rewards, params, None)
}

/// The same iteration with the action pinned by `policy`: computes the
/// policy's gain and bias through the dynamic-programming route,
/// independent of any stationary-distribution solve.
pub fn evaluate_policy(
    kernel: &TransitionKernel,
    policy: &Policy,
    rewards: &[f64],
    params: &SolverParams,
) -> Result<SolveResult, Error> {
    iterate(kernel, rewards, params, Some(policy))
}

fn iterate(
    kernel: &TransitionKernel,
    rewards: &[f64],
    params: &SolverParams,
    fixed: Option<&Policy>,
) -> Result<SolveResult, Error> {
    let n = kernel.num_states();
    if n == 0 {
        return Err(Error::EmptyKernel);
    }
    assert_eq!(rewards.len(), n, "one reward per state");
    if let Some(policy) = fixed {
        assert_eq!(policy.len(), n, "one action per state");
    }

    let num_actions = kernel.num_actions();

    let mut v = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let mut iterations = 0;
    let mut span = f64::INFINITY;
    let mut gain = 0.0;
    let mut converged = false;
    let mut span_monotone = true;
    let mut prev_span = f64::INFINITY;

    while iterations < params.max_iter {
        iterations += 1;
        match fixed {
            None => {
                for s in 0..n {
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..num_actions {
                        let (nexts, probs) = kernel.row_by_index(s, a);
                        if nexts.is_empty() {
                            continue;
                        }
                        let q = expected_value(nexts, probs, &v);
                        if q > best {
                            best = q;
                        }
                    }
                    w[s] = rewards[s] + best;
                }
            }
            Some(policy) => {
                for s in 0..n {
                    let (nexts, probs) =
                        kernel.row_by_index(s, policy.action(StateId(s as u32)).index());
                    if nexts.is_empty() {
                        return Err(Error::InfeasiblePolicyAction {
                            state: format!("{s}"),
                        });
                    }
                    w[s] = rewards[s] + expected_value(nexts, probs, &v);
                }
            }
        }

        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        for s in 0..n {
            let d = w[s] - v[s];
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        span = dmax - dmin;
        gain = 0.5 * (dmax + dmin);
        if span > prev_span + 1e-9 * (1.0 + prev_span.abs()) {
            span_monotone = false;
        }
        prev_span = span;

        apply_update(&mut v, &w);
        if span < params.eps_c {
            converged = true;
            break;
        }
    }

    let policy = match fixed {
        Some(policy) => policy.clone(),
        None => extract_greedy(kernel, &v),
    };

    Ok(SolveResult {
        policy,
        gain,
        values: v,
        iterations,
        span_at_stop: span,
        converged,
        span_monotone,
    })
}

#[inline]
fn expected_value(nexts: &[u32], probs: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&n, &p) in nexts.iter().zip(probs) {
        acc += p * v[n as usize];
    }
    acc
}

fn apply_update(v: &mut [f64], w: &[f64]) {
    for (vs, &ws) in v.iter_mut().zip(w) {
        *vs = 0.5 * (*vs + ws);
    }
    let reference = v[0];
    for vs in v.iter_mut() {
        *vs -= reference;
    }
}

fn extract_greedy(kernel: &TransitionKernel, v: &[f64]) -> Policy {
    let n = kernel.num_states();
    let num_actions = kernel.num_actions();
    let mut actions = Vec::with_capacity(n);
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut best_action = 0;
        for a in 0..num_actions {
            let (nexts, probs) = kernel.row_by_index(s, a);
            if nexts.is_empty() {
                continue;
            }
            let q = expected_value(nexts, probs, v);
            if q > best {
                best = q;
                best_action = a;
            }
        }
        actions.push(Action::from_index(best_action));
    }
    Policy { actions }
}

pub const DEFAULT_POLICY_CAP: u128 = 1_000_000;

/// Exhaustively enumerates every stationary deterministic policy,
/// evaluates each through its induced chain's stationary distribution
/// (restricted to the recurrent class reachable from the canonical start
/// state), and returns the best. Ties go to the lexicographically smallest
/// action vector. Independent of the value-iteration path by construction.
pub fn policy_enumeration_oracle(
    kernel: &TransitionKernel,
    rewards: &[f64],
    space: &StateSpace,
) -> Result<SolveResult, Error> {
    policy_enumeration_oracle_with_cap(kernel, rewards, space, DEFAULT_POLICY_CAP)
}

pub fn policy_enumeration_oracle_with_cap(
    kernel: &TransitionKernel,
    rewards: &[f64],
    space: &StateSpace,
    cap: u128,
) -> Result<SolveResult, Error> {
    let n = kernel.num_states();
    if n == 0 {
        return Err(Error::EmptyKernel);
    }
    let feasible: Vec<Vec<usize>> = (0..n)
        .map(|s| kernel.feasible_action_indices(s).collect())
        .collect();
    let mut count: u128 = 1;
    for acts in &feasible {
        count = count.saturating_mul(acts.len() as u128);
        if count > cap {
            return Err(Error::TooManyPolicies { count, cap });
        }
    }

    let start = space.canonical_start();
    // States with a real choice, in ascending id order. The odometer spins
    // the last one fastest, which makes enumeration lexicographic.
    let choice_states: Vec<usize> = (0..n).filter(|&s| feasible[s].len() > 1).collect();
    let mut selector: Vec<usize> = vec![0; choice_states.len()];
    let mut actions: Vec<Action> = (0..n)
        .map(|s| Action::from_index(feasible[s][0]))
        .collect();

    let mut best: Option<(f64, Policy)> = None;
    let mut evaluated = 0usize;
    loop {
        evaluated += 1;
        let policy = Policy {
            actions: actions.clone(),
        };
        let induced = chain::induce_chain(kernel, &policy)?;
        let class = chain::recurrent_class(&induced, start)?;
        // Cesaro distribution: the average reward of a policy is defined
        // even when its chain is periodic (some enumerated policies cycle
        // the system mode deterministically).
        let dist = chain::cesaro_distribution(&induced, &class)?;
        let gain = chain::average_reward(&dist, rewards);
        let better = match &best {
            None => true,
            Some((best_gain, _)) => gain > *best_gain,
        };
        if better {
            best = Some((gain, policy));
        }

        // Advance the odometer.
        let mut pos = choice_states.len();
        loop {
            if pos == 0 {
                let (gain, policy) = best.expect("at least one policy evaluated");
                return Ok(SolveResult {
                    policy,
                    gain,
                    values: Vec::new(),
                    iterations: evaluated,
                    span_at_stop: 0.0,
                    converged: true,
                    span_monotone: true,
                });
            }
            pos -= 1;
            let s = choice_states[pos];
            if selector[pos] + 1 < feasible[s].len() {
                selector[pos] += 1;
                actions[s] = Action::from_index(feasible[s][selector[pos]]);
                break;
            }
            selector[pos] = 0;
            actions[s] = Action::from_index(feasible[s][0]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        scale_energies, validate_config, HarvesterModel, RecoveryModel, SystemConfig, TxMode,
    };
    use crate::rewards::RewardSpec;
    use crate::statespace::{build_kernel, enumerate_states};

    fn pipeline(cfg: SystemConfig) -> (crate::model::ScaledConfig, StateSpace, TransitionKernel) {
        let scaled = scale_energies(&validate_config(cfg).unwrap());
        let space = enumerate_states(&scaled).unwrap();
        let kernel = build_kernel(&scaled, &space).unwrap();
        (scaled, space, kernel)
    }

    /// Error-free single mode, constant harvest covering the cost every
    /// slot: transmitting always is optimal and the average age is 1.
    fn free_lunch() -> SystemConfig {
        SystemConfig {
            b_max: 1,
            a_max: 4,
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

    /// The 18-state instance: one mode, constant harvester, no recovery.
    /// Every deterministic policy induces a unichain here (some are
    /// periodic, which the Cesaro evaluation handles).
    fn small_instance() -> SystemConfig {
        SystemConfig {
            b_max: 2,
            a_max: 3,
            modes: vec![TxMode {
                power: 2,
                error_prob: 0.3,
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

    #[test]
    fn energy_neutral_error_free_instance_has_gain_minus_one() {
        let (scaled, space, kernel) = pipeline(free_lunch());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let result = relative_value_iteration(&kernel, &rewards, &SolverParams::default())
            .unwrap()
            .require_converged()
            .unwrap();
        assert!((result.gain - (-1.0)).abs() < 1e-9, "gain {}", result.gain);
        assert!(result.span_monotone);
        // The policy transmits wherever transmission is possible.
        for id in space.ids() {
            let s = space.decode(id);
            if crate::statespace::is_feasible(&s, Action::Tx { mode: 0 }, &scaled) {
                assert_eq!(result.policy.action(id), Action::Tx { mode: 0 });
            }
        }
    }

    #[test]
    fn rvi_matches_enumeration_oracle_on_small_instance() {
        let (_, space, kernel) = pipeline(small_instance());
        assert_eq!(space.len(), 18);
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let rvi = relative_value_iteration(&kernel, &rewards, &SolverParams::default())
            .unwrap()
            .require_converged()
            .unwrap();
        let oracle = policy_enumeration_oracle(&kernel, &rewards, &space).unwrap();
        assert!(
            (rvi.gain - oracle.gain).abs() < 1e-8,
            "rvi {} vs oracle {}",
            rvi.gain,
            oracle.gain
        );
        // The RVI policy attains the oracle gain on its own induced chain.
        // (The two policies may differ on transient tie states, where the
        // oracle keeps the lexicographically smaller action.)
        let induced = chain::induce_chain(&kernel, &rvi.policy).unwrap();
        let class = chain::recurrent_class(&induced, space.canonical_start()).unwrap();
        let dist = chain::cesaro_distribution(&induced, &class).unwrap();
        let rvi_chain_gain = chain::average_reward(&dist, &rewards);
        assert!((rvi_chain_gain - oracle.gain).abs() < 1e-8);
    }

    #[test]
    fn oracle_with_tiny_cap_reports_too_many_policies() {
        let (_, space, kernel) = pipeline(small_instance());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        match policy_enumeration_oracle_with_cap(&kernel, &rewards, &space, 3) {
            Err(Error::TooManyPolicies { cap: 3, .. }) => {}
            other => panic!("expected TooManyPolicies, got {other:?}"),
        }
    }

    #[test]
    fn oracle_visits_the_exact_policy_count() {
        // Transmission feasible only where battery + harvest covers power 2:
        // a handful of choice states, all others idle-only.
        let cfg = SystemConfig {
            b_max: 1,
            a_max: 2,
            modes: vec![TxMode {
                power: 2,
                error_prob: 0.5,
            }],
            harvester: HarvesterModel {
                matrix: vec![vec![1.0]],
                powers: vec![1],
            },
            recovery: RecoveryModel {
                n_rec: 0,
                p_rec: 0.0,
            },
        };
        let (scaled, space, kernel) = pipeline(cfg);
        let expected: usize = space
            .ids()
            .map(|id| {
                crate::statespace::feasible_actions(&space.decode(id), &scaled).len()
            })
            .product();
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let oracle = policy_enumeration_oracle(&kernel, &rewards, &space).unwrap();
        assert_eq!(oracle.iterations, expected);
        let rvi = relative_value_iteration(&kernel, &rewards, &SolverParams::default())
            .unwrap()
            .require_converged()
            .unwrap();
        assert!((rvi.gain - oracle.gain).abs() < 1e-8);
    }

    #[test]
    fn all_idle_policy_is_dominated_by_the_optimum() {
        let (_, space, kernel) = pipeline(small_instance());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let all_idle = Policy::from_actions(vec![Action::Idle; space.len()]);
        let induced = chain::induce_chain(&kernel, &all_idle).unwrap();
        let class = chain::recurrent_class(&induced, space.canonical_start()).unwrap();
        let dist = chain::steady_state(&induced, &class).unwrap();
        let idle_gain = chain::average_reward(&dist, &rewards);
        // All mass parks at the age cap.
        assert!((idle_gain - (-3.0)).abs() < 1e-12);
        let oracle = policy_enumeration_oracle(&kernel, &rewards, &space).unwrap();
        assert!(oracle.gain >= idle_gain - 1e-12);
    }

    #[test]
    fn solves_are_bit_deterministic() {
        let (_, space, kernel) = pipeline(small_instance());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let a = relative_value_iteration(&kernel, &rewards, &SolverParams::default()).unwrap();
        let b = relative_value_iteration(&kernel, &rewards, &SolverParams::default()).unwrap();
        assert_eq!(a.gain.to_bits(), b.gain.to_bits());
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.policy, b.policy);
        assert_eq!(
            a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_convergence_is_reported_not_hidden() {
        let (_, space, kernel) = pipeline(small_instance());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let result = relative_value_iteration(
            &kernel,
            &rewards,
            &SolverParams {
                eps_c: 1e-10,
                max_iter: 2,
            },
        )
        .unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 2);
        assert!(matches!(
            result.require_converged(),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn peak_policy_is_invariant_to_r_prime_scaling() {
        let (_, space, kernel) = pipeline(small_instance());
        let params = SolverParams::default();
        let r1 = RewardSpec::PeakHit { r_prime: -1.0 }.reward_vector(&space);
        let r2 = RewardSpec::PeakHit { r_prime: -3.0 }.reward_vector(&space);
        let a = relative_value_iteration(&kernel, &r1, &params).unwrap();
        let b = relative_value_iteration(&kernel, &r2, &params).unwrap();
        assert_eq!(a.policy, b.policy);
        // Gain scales linearly with r'.
        assert!((3.0 * a.gain - b.gain).abs() < 1e-8);
    }

    #[test]
    fn policy_text_round_trips() {
        let (_, space, kernel) = pipeline(small_instance());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let result =
            relative_value_iteration(&kernel, &rewards, &SolverParams::default()).unwrap();
        let mut buf = Vec::new();
        result.policy.write_text(&space, &mut buf).unwrap();
        let parsed = Policy::read_text(&space, &buf[..]).unwrap();
        assert_eq!(parsed, result.policy);
    }

    #[test]
    fn policy_text_rejects_wrong_instance() {
        let (_, space, kernel) = pipeline(small_instance());
        let rewards = RewardSpec::AverageAge.reward_vector(&space);
        let result =
            relative_value_iteration(&kernel, &rewards, &SolverParams::default()).unwrap();
        let mut buf = Vec::new();
        result.policy.write_text(&space, &mut buf).unwrap();

        let mut other = small_instance();
        other.b_max = 3;
        let scaled = scale_energies(&validate_config(other).unwrap());
        let other_space = enumerate_states(&scaled).unwrap();
        assert!(matches!(
            Policy::read_text(&other_space, &buf[..]),
            Err(Error::PolicyFile(_))
        ));
    }
}
