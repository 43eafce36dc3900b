use serde::Serialize;

use crate::model::{self, Action, QueryDraw, UserState, UserType};
use crate::params::MarketParams;

/// `P(Y=1 | Free)` must reach this level for the engagement clause.
pub const ENGAGEMENT_CERTAINTY: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneStepReport {
    pub in_region: bool,
    pub tau: f64,
    pub s: u32,
    pub increment: u32,
    pub free_converts: bool,
    pub ad_converts: bool,
    pub p_engage_free: f64,
    /// First failing clause, if any.
    pub diagnostic: Option<String>,
}

/// Checks the three clauses of the one-step conversion region at a decision
/// point: Free converts on engagement, Ad cannot convert, and Free engagement
/// is certain up to `1 - 1e-9`.
pub fn one_step_region(
    params: &MarketParams,
    user: &UserType,
    state: &UserState,
    query: &QueryDraw,
) -> OneStepReport {
    let tau = model::conversion_tau(params, user, state.c);
    let increment = model::experience_increment(params, query);
    let converts = |action, engaged| {
        model::post_state(params, user, query, state, action, engaged)
            .map(|n| n.subscribed)
            .unwrap_or(true)
    };
    let free_converts = !state.subscribed && converts(Action::Free, true);
    let ad_converts = converts(Action::Ad, true) || converts(Action::Ad, false);
    let p_engage_free = model::engage_prob(params, user, query, state, Action::Free);

    let diagnostic = if state.subscribed || state.s as i64 >= model::conversion_threshold(params, user, state.c) {
        Some(format!("state already at or above the threshold (s = {}, tau = {tau:.4})", state.s))
    } else if !free_converts {
        Some(format!(
            "cannot convert: s + increment = {} < tau = {tau:.4}",
            state.s + increment
        ))
    } else if ad_converts {
        Some("ad converts in one step".into())
    } else if p_engage_free < ENGAGEMENT_CERTAINTY {
        Some(format!(
            "engagement clause unmet: P(Y=1|Free) = {p_engage_free:.6} < 1 - 1e-9"
        ))
    } else {
        None
    };
    OneStepReport {
        in_region: diagnostic.is_none(),
        tau,
        s: state.s,
        increment,
        free_converts,
        ad_converts,
        p_engage_free,
        diagnostic,
    }
}

/// Raise `w_psi` just enough that Free engagement at `query` reaches the
/// certainty level. Returns the boosted parameters and the new `w_psi`;
/// `None` when `psi = 0` (no boost can help).
pub fn engagement_boost(params: &MarketParams, query: &QueryDraw) -> Option<(MarketParams, f64)> {
    // logistic(x) >= 1 - 1e-9 once x >= ln(1e9) ~ 20.723; a small margin keeps
    // the clause robust to rounding.
    const TARGET: f64 = 20.8;
    if query.psi <= 0.0 {
        return None;
    }
    let u = &params.utility;
    let needed = (TARGET + params.omega - u.w_r_free * query.r) / query.psi;
    let mut boosted = params.clone();
    boosted.utility.w_psi = u.w_psi.max(needed);
    Some((boosted.clone(), boosted.utility.w_psi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_threshold(tau: f64) -> MarketParams {
        let mut p = MarketParams::baseline();
        p.conversion.tau0 = tau;
        p.conversion.tau_p = 0.0;
        p.conversion.tau_theta = 0.0;
        p.conversion.tau_c = 0.0;
        p
    }

    const U: UserType = UserType { gamma: 0.5, theta: 0.5 };
    const HIGH_PSI: QueryDraw = QueryDraw { r: 0.5, psi: 0.9 };

    #[test]
    fn constructed_region_member() {
        // s = 5, tau = 6, increment 2 at psi >= psi_cut, huge w_psi.
        let mut p = flat_threshold(6.0);
        p.utility.w_psi = 100.0;
        let rep = one_step_region(&p, &U, &UserState::pre(5, 0), &HIGH_PSI);
        assert!(rep.in_region, "{rep:?}");
        assert_eq!(rep.increment, 2);
    }

    #[test]
    fn too_far_to_convert() {
        let mut p = flat_threshold(6.0);
        p.utility.w_psi = 100.0;
        let rep = one_step_region(&p, &U, &UserState::pre(3, 0), &HIGH_PSI);
        assert!(!rep.in_region);
        assert!(rep.diagnostic.unwrap().starts_with("cannot convert"));
    }

    #[test]
    fn moderate_engagement_fails_clause_three() {
        let mut p = flat_threshold(6.0);
        // v_free = w_psi * 0.9 + w_r_free * 0.5 = ln 9, so P(Y=1|Free) = 0.9.
        p.utility.w_psi = (9f64.ln() + 0.5) / 0.9;
        p.utility.w_r_free = -1.0;
        let rep = one_step_region(&p, &U, &UserState::pre(5, 0), &HIGH_PSI);
        assert!((rep.p_engage_free - 0.9).abs() < 1e-12);
        assert!(rep.diagnostic.unwrap().starts_with("engagement clause unmet"));
    }

    #[test]
    fn ad_conversion_excludes_region() {
        // tau drops below s once c rises by one.
        let mut p = flat_threshold(6.0);
        p.conversion.tau_c = 1.5;
        p.utility.w_psi = 100.0;
        let rep = one_step_region(&p, &U, &UserState::pre(5, 0), &HIGH_PSI);
        assert_eq!(rep.diagnostic.as_deref(), Some("ad converts in one step"));
    }

    #[test]
    fn boost_reaches_certainty() {
        let p = flat_threshold(6.0);
        let (b, w) = engagement_boost(&p, &HIGH_PSI).unwrap();
        assert!(w > p.utility.w_psi);
        let m = model::engage_prob(&b, &U, &HIGH_PSI, &UserState::pre(5, 0), Action::Free);
        assert!(m >= ENGAGEMENT_CERTAINTY);
        assert!(one_step_region(&b, &U, &UserState::pre(5, 0), &HIGH_PSI).in_region);
        assert!(engagement_boost(&p, &QueryDraw { r: 0.5, psi: 0.0 }).is_none());
    }
}
