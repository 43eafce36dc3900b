//! Value iteration for the pre-subscription dynamic program on the integer
//! `(s, c)` grid of one user type.

mod export;
mod horizon;
mod oracle;
mod panel;
mod solver;

pub use export::{edge_csv, edge_rows, value_csv, EDGE_HEADER, VALUE_HEADER};
pub use horizon::{horizon_bound_check, HorizonEntry, HorizonReport, HorizonWitness};
pub use oracle::{brute_force_oracle, brute_force_policy_value, ORACLE_MAX_CELLS, ORACLE_MAX_HORIZON, ORACLE_MAX_QUERIES};
pub use panel::QueryPanel;
pub use solver::{
    edge_at, optimal_action, subscribed_value, ActionEval, EdgeReport, Solver, ValueTable, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};

use crate::model::{self, Action, QueryDraw, UserState, UserType};
use crate::params::{GridCaps, MarketParams};

/// The one-step primitives a Bellman operator needs.
///
/// The state-update maps are always the true, known ones; what varies across
/// implementations is the engagement probability, the expected flow payoff,
/// the retention rule and the subscribed-state value.
pub trait DecisionModel: Sync {
    fn beta(&self) -> f64;
    fn grid(&self) -> GridCaps;
    fn user(&self) -> UserType;
    fn engage_prob(&self, state: &UserState, query: &QueryDraw, action: Action) -> f64;
    fn expected_flow(&self, state: &UserState, query: &QueryDraw, action: Action) -> f64;
    /// Retention evaluated at a post-update state.
    fn retention(&self, post: &UserState) -> f64;
    /// Transition plus conversion check after a display.
    fn post_state(&self, state: &UserState, query: &QueryDraw, action: Action, engaged: bool) -> UserState;
    /// Value of the absorbing subscribed regime.
    fn subscribed_value(&self) -> f64;
    /// Per-period flow in the subscribed regime.
    fn subscribed_flow(&self) -> f64;
}

/// The true revenue model for one user type.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub params: MarketParams,
    pub user: UserType,
}

impl TrueModel {
    pub fn new(params: MarketParams, user: UserType) -> Self {
        Self { params, user }
    }
}

impl DecisionModel for TrueModel {
    fn beta(&self) -> f64 {
        self.params.beta
    }

    fn grid(&self) -> GridCaps {
        self.params.grid
    }

    fn user(&self) -> UserType {
        self.user
    }

    fn engage_prob(&self, state: &UserState, query: &QueryDraw, action: Action) -> f64 {
        model::engage_prob(&self.params, &self.user, query, state, action)
    }

    fn expected_flow(&self, state: &UserState, query: &QueryDraw, action: Action) -> f64 {
        model::expected_flow(&self.params, &self.user, query, state, action)
            .expect("decision states are pre-subscription")
    }

    fn retention(&self, post: &UserState) -> f64 {
        model::retention_prob(&self.params, post)
    }

    fn post_state(&self, state: &UserState, query: &QueryDraw, action: Action, engaged: bool) -> UserState {
        model::post_state(&self.params, &self.user, query, state, action, engaged)
            .expect("decision states are pre-subscription")
    }

    fn subscribed_value(&self) -> f64 {
        self.params.subscription_margin() / (1.0 - self.params.beta)
    }

    fn subscribed_flow(&self) -> f64 {
        self.params.subscription_margin()
    }
}
