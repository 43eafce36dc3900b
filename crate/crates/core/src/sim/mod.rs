//! Display policies and the cohort market simulator.

mod ablation;
mod cohort;
mod metrics;
mod policy;

pub use ablation::{
    mean_std, run_ablation, run_policies, AblationResult, Condition, PolicyStats, RunRecord, SummaryRow, RUN_HEADER,
    SUMMARY_HEADER,
};
pub use cohort::{simulate_run, Event, EventLog, SimConfig};
pub use metrics::{compute_metrics, Trajectory, TrajectoryRow, TRAJECTORY_HEADER};
pub use policy::{build_policy, Policy, PolicyKind, TypeBins};

/// Five replication seeds used by default.
pub const DEFAULT_SEEDS: [u64; 5] = [42, 1042, 2042, 3042, 4042];
