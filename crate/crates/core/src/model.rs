//! Model primitives: logit engagement, flow payoffs, state transitions,
//! conversion and retention.
//!
//! Every function here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ValidationError};
use crate::params::{MarketParams, PayoffConvention};

/// Latent user type: ad sensitivity `gamma` and reliance `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserType {
    pub gamma: f64,
    pub theta: f64,
}

impl UserType {
    pub fn new(gamma: f64, theta: f64) -> Result<Self, ValidationError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(ValidationError::new("user.gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(ValidationError::new("user.theta", "must lie in [0, 1]"));
        }
        Ok(Self { gamma, theta })
    }
}

/// Per-query signals: ad profitability `r` and AI quality `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryDraw {
    pub r: f64,
    pub psi: f64,
}

impl QueryDraw {
    pub fn new(r: f64, psi: f64) -> Result<Self, ValidationError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(ValidationError::new("query.r", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&psi) {
            return Err(ValidationError::new("query.psi", "must lie in [0, 1]"));
        }
        Ok(Self { r, psi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Ad,
    Free,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Ad, Action::Free];

    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Ad => "ad",
            Action::Free => "free",
        }
    }
}

/// User state: AI experience `s`, ad exposure `c`, subscription flag and
/// activity flag. A subscribed user is always active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserState {
    pub s: u32,
    pub c: u32,
    pub subscribed: bool,
    pub active: bool,
}

impl UserState {
    /// Active, unsubscribed user at `(s, c)`.
    pub fn pre(s: u32, c: u32) -> Self {
        Self {
            s,
            c,
            subscribed: false,
            active: true,
        }
    }

    pub fn fresh() -> Self {
        Self::pre(0, 0)
    }

    pub fn checked(params: &MarketParams, s: u32, c: u32) -> Result<Self, ModelError> {
        if !params.grid.contains(s, c) {
            return Err(ModelError::OffGrid {
                s,
                c,
                s_max: params.grid.s_max,
                c_max: params.grid.c_max,
            });
        }
        Ok(Self::pre(s, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utilities {
    pub v_free: f64,
    pub v_ad: f64,
    pub v_out: f64,
}

impl Utilities {
    pub fn of(&self, action: Action) -> f64 {
        match action {
            Action::Ad => self.v_ad,
            Action::Free => self.v_free,
        }
    }
}

/// Logistic function evaluated without overflow for any finite input.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary-logit engagement probability `exp(v_a) / (exp(v_a) + exp(v_out))`.
#[inline]
pub fn logit_choice(v_a: f64, v_out: f64) -> f64 {
    logistic(v_a - v_out)
}

pub fn utilities(
    params: &MarketParams,
    user: &UserType,
    query: &QueryDraw,
    state: &UserState,
) -> Utilities {
    let u = &params.utility;
    Utilities {
        v_free: u.w_psi * query.psi + u.w_r_free * query.r,
        v_ad: u.u0_ad + u.ur_ad * query.r - u.w_gamma * user.gamma - u.uc_ad * state.c as f64,
        v_out: params.omega,
    }
}

pub fn engage_prob(
    params: &MarketParams,
    user: &UserType,
    query: &QueryDraw,
    state: &UserState,
    action: Action,
) -> f64 {
    let v = utilities(params, user, query, state);
    logit_choice(v.of(action), v.v_out)
}

/// Ad revenue conditional on engagement, clipped at zero.
pub fn conditional_ad_revenue(params: &MarketParams, query: &QueryDraw, state: &UserState) -> f64 {
    let b = &params.revenue;
    (b.b0 + b.b_r * query.r - b.b_c * state.c as f64 - b.b_s * state.s as f64).max(0.0)
}

/// Realized one-period payoff of showing `action` when the engagement
/// outcome is `engaged`.
pub fn flow_payoff(
    params: &MarketParams,
    query: &QueryDraw,
    state: &UserState,
    action: Action,
    engaged: bool,
) -> Result<f64, ModelError> {
    if state.subscribed {
        return Err(ModelError::SubscribedState);
    }
    let kappa = params.kappa_free;
    let revenue = || conditional_ad_revenue(params, query, state);
    Ok(match (params.payoff_convention, action, engaged) {
        (PayoffConvention::MainText, Action::Free, _) => -kappa,
        (PayoffConvention::MainText, Action::Ad, false) => -kappa,
        (PayoffConvention::MainText, Action::Ad, true) => -kappa + revenue(),
        (PayoffConvention::AppendixSim, _, false) => 0.0,
        (PayoffConvention::AppendixSim, Action::Free, true) => -kappa,
        (PayoffConvention::AppendixSim, Action::Ad, true) => revenue(),
    })
}

/// Payoff averaged over the engagement outcome.
pub fn expected_flow(
    params: &MarketParams,
    user: &UserType,
    query: &QueryDraw,
    state: &UserState,
    action: Action,
) -> Result<f64, ModelError> {
    let m = engage_prob(params, user, query, state, action);
    let engaged = flow_payoff(params, query, state, action, true)?;
    let idle = flow_payoff(params, query, state, action, false)?;
    Ok(m * engaged + (1.0 - m) * idle)
}

/// Experience gained from an engaged ad-free response: 1, or 2 when the
/// query's AI quality reaches the cut.
pub fn experience_increment(params: &MarketParams, query: &QueryDraw) -> u32 {
    1 + u32::from(query.psi >= params.psi_cut)
}

/// State after one display, before the conversion check.
pub fn transition(
    params: &MarketParams,
    query: &QueryDraw,
    state: &UserState,
    action: Action,
    engaged: bool,
) -> Result<UserState, ModelError> {
    if state.subscribed {
        return Err(ModelError::SubscribedState);
    }
    let mut next = *state;
    if engaged {
        match action {
            Action::Free => {
                next.s = (state.s + experience_increment(params, query)).min(params.grid.s_max);
            }
            Action::Ad => {
                next.c = (state.c + 1).min(params.grid.c_max);
            }
        }
    }
    Ok(next)
}

/// Real-valued conversion cutoff `tau(theta, p, c)`.
pub fn conversion_tau(params: &MarketParams, user: &UserType, c: u32) -> f64 {
    let k = &params.conversion;
    k.tau0 + k.tau_p * params.price - k.tau_theta * user.theta - k.tau_c * c as f64
}

/// Integer trigger level `ceil(tau)`. A 1e-9 guard keeps values that are
/// integral up to rounding on their integer.
pub fn conversion_threshold(params: &MarketParams, user: &UserType, c: u32) -> i64 {
    (conversion_tau(params, user, c) - 1e-9).ceil() as i64
}

pub fn conversion_update(params: &MarketParams, user: &UserType, state: &UserState) -> UserState {
    let mut next = *state;
    if !state.subscribed && state.s as i64 >= conversion_threshold(params, user, state.c) {
        next.subscribed = true;
    }
    if next.subscribed {
        next.active = true;
    }
    next
}

/// Probability of remaining active next period from `state`.
pub fn retention_prob(params: &MarketParams, state: &UserState) -> f64 {
    if state.subscribed {
        return 1.0;
    }
    let k = &params.retention;
    k.rho_min + (1.0 - k.rho_min) * logistic(k.alpha_s * state.s as f64 - k.alpha_c * state.c as f64)
}

/// Transition followed by the conversion check.
pub fn post_state(
    params: &MarketParams,
    user: &UserType,
    query: &QueryDraw,
    state: &UserState,
    action: Action,
    engaged: bool,
) -> Result<UserState, ModelError> {
    let moved = transition(params, query, state, action, engaged)?;
    Ok(conversion_update(params, user, &moved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zeroed() -> MarketParams {
        let mut p = MarketParams::baseline();
        p.utility.w_psi = 0.0;
        p.utility.w_r_free = 0.0;
        p.utility.u0_ad = 0.0;
        p.utility.ur_ad = 0.0;
        p.utility.w_gamma = 0.0;
        p.utility.uc_ad = 0.0;
        p.omega = 0.0;
        p
    }

    const U: UserType = UserType { gamma: 0.3, theta: 0.5 };

    #[test]
    fn utilities_zero_case() {
        let p = zeroed();
        let v = utilities(&p, &U, &QueryDraw { r: 0.4, psi: 0.6 }, &UserState::pre(3, 2));
        assert_eq!((v.v_free, v.v_ad, v.v_out), (0.0, 0.0, 0.0));
    }

    #[test]
    fn utilities_hand_arithmetic() {
        let mut p = zeroed();
        p.utility.w_psi = 1.0;
        p.utility.w_r_free = 0.5;
        let v = utilities(&p, &U, &QueryDraw { r: 0.4, psi: 0.6 }, &UserState::pre(0, 0));
        assert!((v.v_free - 0.8).abs() < 1e-12);

        let mut p = zeroed();
        p.utility.u0_ad = 0.5;
        p.utility.ur_ad = 1.0;
        p.utility.w_gamma = 1.0;
        p.utility.uc_ad = 0.1;
        let v = utilities(&p, &U, &QueryDraw { r: 0.2, psi: 0.0 }, &UserState::pre(0, 2));
        assert!((v.v_ad - 0.2).abs() < 1e-12);
    }

    #[test]
    fn engagement_symmetry_and_value() {
        assert_eq!(logit_choice(0.3, 0.3), 0.5);
        assert!((logit_choice(1.0, 0.0) - 0.731_058_578_630_004_9).abs() < 1e-9);
        assert!(logit_choice(0.0, 1e6) < 1e-300);
        assert!(logit_choice(700.0, -700.0).is_finite());
        assert!(logit_choice(-700.0, 700.0) >= 0.0);
    }

    #[test]
    fn ad_revenue_examples() {
        let mut p = MarketParams::baseline();
        p.revenue.b0 = 1.0;
        p.revenue.b_r = 1.0;
        p.revenue.b_c = 0.2;
        p.revenue.b_s = 0.0;
        let q = QueryDraw { r: 0.5, psi: 0.0 };
        assert_eq!(conditional_ad_revenue(&p, &q, &UserState::pre(0, 10)), 0.0);
        p.revenue.b_c = 0.0;
        assert!((conditional_ad_revenue(&p, &q, &UserState::pre(0, 10)) - 1.5).abs() < 1e-12);
        p.revenue.b0 = 0.0;
        let q0 = QueryDraw { r: 0.0, psi: 0.0 };
        assert_eq!(conditional_ad_revenue(&p, &q0, &UserState::pre(0, 0)), 0.0);
    }

    #[test]
    fn flow_payoff_conventions() {
        let mut p = MarketParams::baseline();
        p.kappa_free = 0.9;
        p.payoff_convention = PayoffConvention::MainText;
        let q = QueryDraw { r: 0.5, psi: 0.5 };
        let st = UserState::pre(0, 0);
        assert!((flow_payoff(&p, &q, &st, Action::Free, false).unwrap() + 0.9).abs() < 1e-12);
        // revenue of 2.0 at this query: b0 + b_r * r = 1.2 + 1.6 * 0.5
        p.revenue.b0 = 1.2;
        p.revenue.b_r = 1.6;
        let ad = flow_payoff(&p, &q, &st, Action::Ad, true).unwrap();
        assert!((ad - 1.1).abs() < 1e-12);
        p.payoff_convention = PayoffConvention::AppendixSim;
        assert_eq!(flow_payoff(&p, &q, &st, Action::Ad, false).unwrap(), 0.0);
        assert_eq!(flow_payoff(&p, &q, &st, Action::Free, false).unwrap(), 0.0);
        assert!((flow_payoff(&p, &q, &st, Action::Free, true).unwrap() + 0.9).abs() < 1e-12);
        assert!((flow_payoff(&p, &q, &st, Action::Ad, true).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flow_payoff_rejects_subscribed() {
        let p = MarketParams::baseline();
        let mut st = UserState::pre(0, 0);
        st.subscribed = true;
        let q = QueryDraw { r: 0.5, psi: 0.5 };
        assert_eq!(
            flow_payoff(&p, &q, &st, Action::Ad, true),
            Err(ModelError::SubscribedState)
        );
        assert_eq!(
            transition(&p, &q, &st, Action::Ad, true),
            Err(ModelError::SubscribedState)
        );
    }

    #[test]
    fn transition_examples() {
        let mut p = MarketParams::baseline();
        p.psi_cut = 0.5;
        let st = UserState::pre(3, 2);
        let q = QueryDraw { r: 0.1, psi: 0.9 };
        assert_eq!(transition(&p, &q, &st, Action::Free, true).unwrap().s, 5);
        assert_eq!(transition(&p, &q, &st, Action::Ad, true).unwrap().c, 3);
        for a in Action::BOTH {
            assert_eq!(transition(&p, &q, &st, a, false).unwrap(), st);
        }
        let capped = UserState::pre(p.grid.s_max - 1, p.grid.c_max);
        assert_eq!(transition(&p, &q, &capped, Action::Free, true).unwrap().s, p.grid.s_max);
        assert_eq!(transition(&p, &q, &capped, Action::Ad, true).unwrap().c, p.grid.c_max);
    }

    #[test]
    fn conversion_examples() {
        let mut p = MarketParams::baseline();
        p.conversion.tau0 = 6.0;
        p.conversion.tau_p = 0.5;
        p.price = 4.0;
        p.conversion.tau_theta = 2.0;
        p.conversion.tau_c = 0.25;
        let u = UserType { gamma: 0.0, theta: 0.5 };
        assert_eq!(conversion_threshold(&p, &u, 4), 6);
        assert!(conversion_update(&p, &u, &UserState::pre(6, 4)).subscribed);
        assert!(!conversion_update(&p, &u, &UserState::pre(5, 4)).subscribed);

        let mut sub = UserState::pre(0, 0);
        sub.subscribed = true;
        sub.active = false;
        let after = conversion_update(&p, &u, &sub);
        assert!(after.subscribed && after.active);

        p.conversion.tau_c = 10.0;
        assert!(conversion_update(&p, &u, &UserState::pre(0, 4)).subscribed);
    }

    #[test]
    fn retention_examples() {
        let mut p = MarketParams::baseline();
        p.retention.rho_min = 0.2;
        p.retention.alpha_s = 0.0;
        p.retention.alpha_c = 0.0;
        assert!((retention_prob(&p, &UserState::pre(4, 4)) - 0.6).abs() < 1e-12);
        let mut sub = UserState::pre(0, 0);
        sub.subscribed = true;
        assert_eq!(retention_prob(&MarketParams::baseline(), &sub), 1.0);
        p.retention.rho_min = 1.0;
        assert_eq!(retention_prob(&p, &UserState::pre(0, 20)), 1.0);
    }

    #[test]
    fn mainline_actions_differ_only_by_revenue() {
        let mut p = MarketParams::baseline();
        p.payoff_convention = PayoffConvention::MainText;
        let q = QueryDraw { r: 0.7, psi: 0.2 };
        let st = UserState::pre(2, 3);
        let free = expected_flow(&p, &U, &q, &st, Action::Free).unwrap();
        let ad = expected_flow(&p, &U, &q, &st, Action::Ad).unwrap();
        let short = conditional_ad_revenue(&p, &q, &st) * engage_prob(&p, &U, &q, &st, Action::Ad);
        assert!((ad - free - short).abs() < 1e-12);
    }

    fn unit() -> impl Strategy<Value = f64> {
        0.0..=1.0f64
    }

    proptest! {
        #[test]
        fn engagement_in_open_interval_and_decreasing_in_omega(
            g in unit(), th in unit(), r in unit(), psi in unit(), c in 0u32..=20,
        ) {
            let mut p = MarketParams::baseline();
            let u = UserType { gamma: g, theta: th };
            let q = QueryDraw { r, psi };
            let st = UserState::pre(0, c);
            for a in Action::BOTH {
                let mut last = f64::INFINITY;
                for k in 0..6 {
                    p.omega = 0.25 * k as f64;
                    let m = engage_prob(&p, &u, &q, &st, a);
                    prop_assert!(m > 0.0 && m < 1.0);
                    prop_assert!(m < last);
                    last = m;
                }
            }
        }

        #[test]
        fn transition_stays_on_grid(
            s in 0u32..=20, c in 0u32..=20, psi in unit(), free in any::<bool>(), engaged in any::<bool>(),
        ) {
            let p = MarketParams::baseline();
            let st = UserState::pre(s, c);
            let a = if free { Action::Free } else { Action::Ad };
            let next = transition(&p, &QueryDraw { r: 0.5, psi }, &st, a, engaged).unwrap();
            prop_assert!(p.grid.contains(next.s, next.c));
            if !engaged {
                prop_assert_eq!(next, st);
            }
        }

        #[test]
        fn conversion_monotone_in_s(s in 0u32..20, c in 0u32..=20, th in unit()) {
            let p = MarketParams::baseline();
            let u = UserType { gamma: 0.5, theta: th };
            if conversion_update(&p, &u, &UserState::pre(s, c)).subscribed {
                prop_assert!(conversion_update(&p, &u, &UserState::pre(s + 1, c)).subscribed);
            }
        }

        #[test]
        fn retention_monotone(s in 0u32..20, c in 0u32..20) {
            let p = MarketParams::baseline();
            let here = retention_prob(&p, &UserState::pre(s, c));
            prop_assert!(here >= p.retention.rho_min && here <= 1.0);
            prop_assert!(retention_prob(&p, &UserState::pre(s + 1, c)) >= here);
            prop_assert!(retention_prob(&p, &UserState::pre(s, c + 1)) <= here);
        }
    }
}
