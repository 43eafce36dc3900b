//! Shared fixtures for the criterion benches.

use gemon_core::dp::{QueryPanel, Solver, TrueModel};
use gemon_core::sim::{SimConfig, DEFAULT_SEEDS};
use gemon_core::{MarketParams, PopulationSpec, UserType};

pub const BENCH_TYPE: UserType = UserType { gamma: 0.5, theta: 0.5 };

/// Default calibration solver for one type, grid capped at `cap`.
pub fn solver(cap: u32) -> Solver<TrueModel> {
    let mut p = MarketParams::baseline();
    p.grid.s_max = cap;
    p.grid.c_max = cap;
    let panel = QueryPanel::for_population(&PopulationSpec::default(), p.n_q, p.query_panel_seed);
    Solver::new(TrueModel::new(p, BENCH_TYPE), panel)
}

pub fn sim_config(n_users: u32) -> SimConfig {
    SimConfig {
        n_users,
        horizon: 20,
        seeds: DEFAULT_SEEDS.to_vec(),
        n_bins: 5,
        market: MarketParams::baseline(),
        population: PopulationSpec::default(),
    }
}
