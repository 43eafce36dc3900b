//! Comparative statics: the value edge along parameter sweeps, type cutoffs
//! and cutoff maps. Everything here runs under the main-text payoff
//! convention.

mod cutoff;
mod region;
mod sweep;

pub use cutoff::{
    cutoff_map, find_cutoff, CutoffAxis, CutoffMap, CutoffResult, CutoffSpec, MapCell, MapSpec, Plane,
    MAP_HEADER, MAX_MAP_RESOLUTION,
};
pub use region::{engagement_boost, one_step_region, OneStepReport, ENGAGEMENT_CERTAINTY};
pub use sweep::{
    sweep_scalar, Anchor, Direction, SweepParam, SweepPoint, SweepResult, SweepSpec, Verdict, SWEEP_HEADER,
};

use crate::dp::{edge_at, EdgeReport, QueryPanel, Solver, TrueModel, ValueTable, DEFAULT_MAX_ITER};
use crate::error::StaticsError;
use crate::model::{QueryDraw, UserState, UserType};
use crate::params::{MarketParams, PayoffConvention};

/// Tolerance for monotonicity verdicts.
pub const SLACK: f64 = 1e-6;

/// Solves are run tighter than the solver default so the edge error stays
/// well under `SLACK` even at beta = 0.95.
const SOLVE_TOL: f64 = 1e-10;

pub(crate) fn main_text(market: &MarketParams) -> Result<MarketParams, StaticsError> {
    let mut m = market.clone();
    m.payoff_convention = PayoffConvention::MainText;
    m.validate()?;
    Ok(m)
}

pub(crate) fn solve_type(
    market: &MarketParams,
    panel: &QueryPanel,
    user: UserType,
) -> Result<(TrueModel, ValueTable), StaticsError> {
    let model = TrueModel::new(market.clone(), user);
    let solver = Solver::new(model, panel.clone());
    let table = solver.value_iterate(SOLVE_TOL, DEFAULT_MAX_ITER)?;
    Ok((solver.model().clone(), table))
}

pub(crate) fn edge(
    model: &TrueModel,
    table: &ValueTable,
    state: &UserState,
    query: &QueryDraw,
) -> Result<EdgeReport, StaticsError> {
    Ok(edge_at(model, table, state, query)?)
}
