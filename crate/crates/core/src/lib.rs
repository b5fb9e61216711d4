//! Solver and simulator toolkit for an energy-harvesting status-update
//! sensor with battery recovery and multiple transmission modes.
//!
//! The sensor sends update packets to a base station over a lossy slotted
//! channel, choosing each slot between idling and one of several
//! (power, error-probability) transmission modes. Energy arrives from a
//! finite-state Markov harvester, and an idle battery recovers part of the
//! last transmission's charge for a bounded window. The toolkit builds the
//! exact finite Markov decision process of this system, computes
//! average-reward-optimal stationary deterministic policies for three
//! objectives (peak-age hitting probability, average age of information,
//! and an alpha-weighted combination), and validates the analytical
//! steady-state metrics against Monte Carlo simulation.
//!
//! The usual flow:
//!
//! ```
//! use aoi_harvest::{prepare, presets, solve_with_metrics, RewardSpec, SolverParams};
//!
//! let cfg = presets::two_mode_on_off(0.6, 2, 2, 8, 12);
//! let prep = prepare(&cfg).unwrap();
//! let (solved, metrics) =
//!     solve_with_metrics(&prep, &RewardSpec::AverageAge, &SolverParams::default()).unwrap();
//! assert!(solved.converged);
//! assert!((solved.gain + metrics.avg_age).abs() < 1e-8);
//! ```
//!
//! See the crate `examples/` directory for one runnable example per major
//! capability, and the `aoi-harvest` binary for the file-driven command
//! line.

pub mod approx;
pub mod chain;
pub mod cli;
pub mod error;
pub mod model;
pub mod presets;
pub mod rewards;
pub mod sim;
pub mod solver;
pub mod statespace;

pub use approx::{find_amax, ApproxParams, ApproxResult};
pub use chain::{
    average_reward, induce_chain, metrics, recurrent_class, steady_state, InducedChain, Metrics,
    StationaryDistribution,
};
pub use error::{ConfigViolation, Error};
pub use model::{
    config_fingerprint, load_config, scale_energies, validate_config, HarvesterModel,
    RecoveryModel, ScaledConfig, SystemConfig, TxMode, ValidatedConfig,
};
pub use rewards::RewardSpec;
pub use sim::{simulate, trace, EmpiricalMetrics, SimConfig, TraceEvent};
pub use solver::{
    evaluate_policy, policy_enumeration_oracle, relative_value_iteration, Policy, SolveResult,
    SolverParams,
};
pub use statespace::{
    build_kernel, enumerate_states, feasible_actions, transition, Action, State, StateId,
    StateSpace, SystemMode, TransitionKernel,
};

/// A validated instance with its scaled form, state space, and transition
/// kernel — everything the solvers and the simulator consume.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scaled: ScaledConfig,
    pub space: StateSpace,
    pub kernel: TransitionKernel,
}

/// Validates, scales, enumerates, and materializes the kernel in one step.
pub fn prepare(cfg: &SystemConfig) -> Result<Prepared, Error> {
    let validated = validate_config(cfg.clone())?;
    let scaled = scale_energies(&validated);
    let space = enumerate_states(&scaled)?;
    let kernel = build_kernel(&scaled, &space)?;
    Ok(Prepared {
        scaled,
        space,
        kernel,
    })
}

/// Solves the given objective and evaluates the optimal policy's
/// steady-state metrics on its induced chain.
pub fn solve_with_metrics(
    prep: &Prepared,
    objective: &RewardSpec,
    params: &SolverParams,
) -> Result<(SolveResult, Metrics), Error> {
    objective.validate()?;
    let rewards = objective.reward_vector(&prep.space);
    let solved = relative_value_iteration(&prep.kernel, &rewards, params)?.require_converged()?;
    let m = policy_metrics(prep, &solved.policy)?;
    Ok((solved, m))
}

/// Steady-state metrics of an arbitrary feasible policy.
pub fn policy_metrics(prep: &Prepared, policy: &Policy) -> Result<Metrics, Error> {
    let induced = induce_chain(&prep.kernel, policy)?;
    let class = recurrent_class(&induced, prep.space.canonical_start())?;
    let dist = steady_state(&induced, &class)?;
    Ok(metrics(&dist, &prep.space, policy, &prep.scaled))
}
