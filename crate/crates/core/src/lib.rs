//! Cost-minimizing operation of a grid-connected microgrid by tabular Q-learning with
//! delayed Q-update, checked against an exact finite-horizon dynamic program.
//!
//! Every numeric routine is generic over [`Scalar`] (`f32` or `f64`); the `*64` and `*32`
//! aliases below name the concrete instantiations.

pub mod dp;
pub mod env;
mod error;
pub mod learner;
pub mod metrics;
pub mod scalar;
pub mod spaces;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MicrogridParams64 = env::MicrogridParams<f64>;
pub type MicrogridParams32 = env::MicrogridParams<f32>;
pub type Exogenous64 = env::Exogenous<f64>;
pub type Exogenous32 = env::Exogenous<f32>;
pub type State64 = env::State<f64>;
pub type State32 = env::State<f32>;
pub type Action64 = env::Action<f64>;
pub type Action32 = env::Action<f32>;
pub type Bins64 = spaces::Bins<f64>;
pub type Bins32 = spaces::Bins<f32>;
pub type StateSpace64 = spaces::StateSpace<f64>;
pub type StateSpace32 = spaces::StateSpace<f32>;
pub type ActionSpace64 = spaces::ActionSpace<f64>;
pub type ActionSpace32 = spaces::ActionSpace<f32>;
pub type QTable64 = learner::QTable<f64>;
pub type QTable32 = learner::QTable<f32>;
pub type Hyperparams64 = learner::Hyperparams<f64>;
pub type Hyperparams32 = learner::Hyperparams<f32>;
pub type DpPolicy64 = dp::DpPolicy<f64>;
pub type DpPolicy32 = dp::DpPolicy<f32>;
