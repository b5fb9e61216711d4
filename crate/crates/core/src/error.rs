use thiserror::Error;

/// One validation failure found while checking a problem instance.
///
/// `validate_config` collects every violation instead of stopping at the
/// first, so a bad file is reported in full.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("harvester matrix row {row} sums to {sum}, expected 1 within 1e-12")]
    InvalidStochasticMatrix { row: usize, sum: f64 },
    #[error("harvester matrix entry [{row}][{col}] = {value} is outside [0, 1]")]
    MatrixEntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("harvester matrix must be square with one power per state: {detail}")]
    MalformedHarvester { detail: String },
    #[error("{field} = {value} is out of range ({requirement})")]
    NegativeQuantity {
        field: String,
        value: String,
        requirement: &'static str,
    },
    #[error("{field} = {value} is not a probability in [0, 1]")]
    ProbabilityOutOfRange { field: String, value: f64 },
    #[error("mode list is empty")]
    EmptyModeList,
    #[error(
        "no mode can ever transmit: cheapest mode needs {needed} energy units, \
         battery plus harvest supplies at most {available}"
    )]
    InfeasibleInstance { needed: i64, available: i64 },
    #[error("{field} = {value} exceeds the supported range ({limit})")]
    QuantityTooLarge {
        field: String,
        value: i64,
        limit: i64,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n{}", format_violations(.violations))]
    InvalidConfig { violations: Vec<ConfigViolation> },
    #[error("state space has {size} states, exceeding the cap of {cap}")]
    StateSpaceTooLarge { size: u64, cap: u64 },
    #[error("action {action} is not feasible in state {state}")]
    InfeasibleAction { state: String, action: String },
    #[error("transition kernel has no states")]
    EmptyKernel,
    #[error("solver stopped after {iterations} iterations with span {span:e} above tolerance")]
    NotConverged { iterations: usize, span: f64 },
    #[error("policy enumeration would visit {count} policies, above the cap of {cap}")]
    TooManyPolicies { count: u128, cap: u128 },
    #[error("policy takes an action with no kernel row at state {state}")]
    InfeasiblePolicyAction { state: String },
    #[error("{count} closed recurrent classes reachable from the start state, expected exactly one")]
    MultipleRecurrentClasses { count: usize },
    #[error("stationary linear system is singular")]
    SingularSystem,
    #[error("recurrent class is periodic with period {period}")]
    PeriodicChain { period: u64 },
    #[error(
        "stationary solve stalled at residual {residual:e} after {iterations} iterations \
         (target {target:e})"
    )]
    StationaryStalled {
        residual: f64,
        iterations: usize,
        target: f64,
    },
    #[error("age-cap search exceeded the ceiling of {ceiling}")]
    Diverged { ceiling: u32 },
    #[error("bad policy file: {0}")]
    PolicyFile(String),
    #[error("bad simulation setup: {0}")]
    SimSetup(String),
    #[error("failed to parse config: {0}")]
    ConfigParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[ConfigViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// Convenience for matching a config error against an expected violation kind.
    pub fn has_violation(&self, pred: impl Fn(&ConfigViolation) -> bool) -> bool {
        match self {
            Error::InvalidConfig { violations } => violations.iter().any(pred),
            _ => false,
        }
    }
}
