//! Exhaustive enumeration oracle for tiny instances.
//!
//! Walks the full tree of histories (query, action, engagement, retention)
//! with realized payoffs from the model primitives, taking the best action at
//! every decision node. It never touches the value table, the kernel or the
//! expected-flow shortcut used by the solver.

use super::QueryPanel;
use crate::error::SolveError;
use crate::model::{self, Action, QueryDraw, UserState, UserType};
use crate::params::MarketParams;

pub const ORACLE_MAX_CELLS: usize = 16;
pub const ORACLE_MAX_QUERIES: usize = 3;
pub const ORACLE_MAX_HORIZON: usize = 4;

type PolicyFn<'a> = &'a dyn Fn(&UserState, &QueryDraw) -> Action;

struct Tree<'a> {
    params: &'a MarketParams,
    user: &'a UserType,
    panel: &'a QueryPanel,
    policy: Option<PolicyFn<'a>>,
    v_sub: f64,
}

impl Tree<'_> {
    /// Expected discounted payoff over `periods` remaining decision periods.
    fn value(&self, state: &UserState, periods: usize) -> f64 {
        if periods == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (query, weight) in self.panel.iter() {
            let ad = self.action_value(state, query, Action::Ad, periods);
            let free = self.action_value(state, query, Action::Free, periods);
            let best = match self.policy {
                Some(policy) => match policy(state, query) {
                    Action::Ad => ad,
                    Action::Free => free,
                },
                None => {
                    if ad >= free {
                        ad
                    } else {
                        free
                    }
                }
            };
            total += weight * best;
        }
        total
    }

    fn action_value(&self, state: &UserState, query: &QueryDraw, action: Action, periods: usize) -> f64 {
        let p = self.params;
        let m = model::engage_prob(p, self.user, query, state, action);
        let mut total = 0.0;
        for (engaged, prob) in [(true, m), (false, 1.0 - m)] {
            let payoff = model::flow_payoff(p, query, state, action, engaged).expect("pre-subscription");
            let moved = model::transition(p, query, state, action, engaged).expect("pre-subscription");
            let next = model::conversion_update(p, self.user, &moved);
            let future = if next.subscribed {
                // Retained with certainty into the subscribed regime.
                self.v_sub
            } else {
                let stay = model::retention_prob(p, &next);
                // Churn is permanent and worth nothing.
                stay * self.value(&next, periods - 1)
            };
            total += prob * (payoff + p.beta * future);
        }
        total
    }
}

fn check_size(params: &MarketParams, panel: &QueryPanel, horizon: usize) -> Result<(), SolveError> {
    let cells = params.grid.n_cells();
    if cells > ORACLE_MAX_CELLS {
        return Err(SolveError::TooLarge(format!(
            "{cells} grid cells (max {ORACLE_MAX_CELLS})"
        )));
    }
    if panel.len() > ORACLE_MAX_QUERIES {
        return Err(SolveError::TooLarge(format!(
            "{} queries (max {ORACLE_MAX_QUERIES})",
            panel.len()
        )));
    }
    if horizon > ORACLE_MAX_HORIZON {
        return Err(SolveError::TooLarge(format!(
            "horizon {horizon} (max {ORACLE_MAX_HORIZON})"
        )));
    }
    Ok(())
}

fn geometric_subscribed_value(params: &MarketParams) -> f64 {
    // Closed form of sum_k beta^k * margin.
    params.subscription_margin() / (1.0 - params.beta)
}

/// Best expected discounted payoff over `horizon` pre-subscription decision
/// periods from `start`. Conversion books the subscribed value; users still
/// unsubscribed after the last period are worth zero.
pub fn brute_force_oracle(
    params: &MarketParams,
    user: &UserType,
    panel: &QueryPanel,
    horizon: usize,
    start: &UserState,
) -> Result<f64, SolveError> {
    check_size(params, panel, horizon)?;
    let tree = Tree {
        params,
        user,
        panel,
        policy: None,
        v_sub: geometric_subscribed_value(params),
    };
    Ok(tree.value(start, horizon))
}

/// Same enumeration with actions fixed by `policy`.
pub fn brute_force_policy_value(
    params: &MarketParams,
    user: &UserType,
    panel: &QueryPanel,
    horizon: usize,
    start: &UserState,
    policy: &dyn Fn(&UserState, &QueryDraw) -> Action,
) -> Result<f64, SolveError> {
    check_size(params, panel, horizon)?;
    let tree = Tree {
        params,
        user,
        panel,
        policy: Some(policy),
        v_sub: geometric_subscribed_value(params),
    };
    Ok(tree.value(start, horizon))
}
