//! Trace ingestion, synthetic data, run configuration and experiment orchestration for the
//! microgrid learner.

pub mod artifacts;
pub mod config;
pub mod experiment;
pub mod qtable_io;
pub mod synth;
pub mod trace;

pub use config::{RunConfig, TraceSource};
pub use experiment::{run_compare, run_dp, run_eval, run_train, CompareOptions, Prepared};
pub use trace::{load_trace, ExogenousTrace, TraceError};
