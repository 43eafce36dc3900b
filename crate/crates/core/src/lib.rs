//! Dynamic-programming solver and market simulator for per-query ad vs.
//! ad-free display decisions with engagement, retention and subscription
//! dynamics.

pub mod dp;
pub mod error;
pub mod io;
pub mod learning;
pub mod model;
pub mod params;
pub mod population;
pub mod rng;
pub mod sim;
pub mod statics;
pub mod welfare;

pub use error::{ConfigError, LearnError, ModelError, SimError, SolveError, StaticsError, ValidationError};
pub use model::{Action, QueryDraw, UserState, UserType};
pub use params::{MarketParams, ModelConfig, PayoffConvention};
pub use population::{PopulationSpec, UnitDist};
