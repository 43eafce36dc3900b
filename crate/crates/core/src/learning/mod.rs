//! Plug-in learning: exploratory logs, binned estimates of the engagement,
//! payoff and retention primitives, the estimated Bellman operator and the
//! robustness bounds that relate it to the true one.

mod bounds;
mod estimate;
mod logs;

pub use bounds::{bound_b, plugin_policy, run_learning, verify_bounds, BoundsReport, LearnConfig, LearnReport, PluginModel};
pub use estimate::{estimate_primitives, Binning, EstimatedPrimitives, EstimationErrors, ESTIMATE_HEADER};
pub use logs::{generate_logs, logs_from_csv, logs_to_csv, LogRecord, LOG_HEADER};
