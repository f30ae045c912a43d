use thiserror::Error;

/// Errors raised by the microgrid model, the learner and the DP solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid microgrid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid exogenous record: {0}")]
    InvalidExogenous(String),

    #[error(
        "worst-case baseline is not positive (demand {demand} - pv {pv} <= 0); reward undefined"
    )]
    DegenerateBaseline { demand: f64, pv: f64 },

    #[error("state of charge {soc} leaves [0, {cap}]")]
    SocBoundsViolation { soc: f64, cap: f64 },

    #[error("action (dg {dg}, ess {ess}, dr {dr}) violates the {constraint} constraint")]
    InfeasibleAction {
        dg: f64,
        ess: f64,
        dr: f64,
        constraint: crate::env::Constraint,
    },

    #[error("invalid bins for {name}: {reason}")]
    InvalidBins { name: &'static str, reason: String },

    #[error("state component {component} = {value} is not a grid value")]
    OffGridState { component: &'static str, value: f64 },

    #[error("action component {component} = {value} is not a grid value")]
    OffGridAction { component: &'static str, value: f64 },

    #[error("index {index} out of range for a space of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("no feasible action available")]
    EmptyFeasibleSet,

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error(
        "brute-force instance too large: {sequences} candidate sequences exceed the limit {limit}"
    )]
    InstanceTooLarge { sequences: f64, limit: f64 },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("charge record requires a negative ESS flow, got {0}")]
    NotACharge(f64),

    #[error("discharge matching requires a positive ESS flow, got {0}")]
    NotADischarge(f64),

    #[error("charge period {period} does not follow the queue tail period {tail}")]
    NonMonotonicPeriod { period: usize, tail: usize },

    #[error("trace too short: {len} records, need at least {min}")]
    TraceTooShort { len: usize, min: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
