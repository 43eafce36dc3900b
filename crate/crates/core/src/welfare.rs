//! Social-welfare variant of the dynamic program: flows add a user-benefit
//! term to the engine's payoff, and the subscribed regime earns a welfare
//! flow `w_sub`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::dp::{edge_at, optimal_action, DecisionModel, QueryPanel, Solver, TrueModel, ValueTable, DEFAULT_MAX_ITER};
use crate::error::{SolveError, ValidationError};
use crate::model::{self, Action, QueryDraw, UserState, UserType};
use crate::params::{GridCaps, MarketParams};

/// Per-query user benefit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Benefit {
    /// `log(exp(v_a) + exp(v_out)) - log 2`.
    InclusiveValue,
    Zero,
    Constant { ad: f64, free: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelfareParams {
    pub benefit: Benefit,
    /// Subscribed welfare flow; defaults to the subscription margin.
    pub w_sub: Option<f64>,
    /// Optional bound on `|u_user|`, checked against a grid scan.
    pub u_max: Option<f64>,
    /// Optional bound on `|w_sub - r_sub|`.
    pub delta_sub_max: Option<f64>,
}

impl Default for WelfareParams {
    fn default() -> Self {
        Self {
            benefit: Benefit::InclusiveValue,
            w_sub: None,
            u_max: None,
            delta_sub_max: None,
        }
    }
}

/// Welfare parameters with every bound filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedWelfare {
    pub benefit: Benefit,
    pub w_sub: f64,
    pub r_sub: f64,
    pub u_max: f64,
    pub delta_sub_max: f64,
    /// `max(U_max, Delta_sub_max)`.
    pub eps_sw: f64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn user_benefit(
    benefit: &Benefit,
    params: &MarketParams,
    user: &UserType,
    query: &QueryDraw,
    state: &UserState,
    action: Action,
) -> f64 {
    match benefit {
        Benefit::Zero => 0.0,
        Benefit::Constant { ad, free } => match action {
            Action::Ad => *ad,
            Action::Free => *free,
        },
        Benefit::InclusiveValue => {
            let v = model::utilities(params, user, query, state);
            log_add_exp(v.of(action), v.v_out) - LN_2
        }
    }
}

/// Largest `|u_user|` over a 21-point grid on each of gamma, r and psi, every
/// ad-exposure level and both actions. The benefit depends on these only
/// through utilities that are affine in each coordinate, so the grid's
/// corners attain the maximum.
pub fn scan_u_max(benefit: &Benefit, params: &MarketParams) -> f64 {
    const N: usize = 21;
    let pts: Vec<f64> = (0..N).map(|i| i as f64 / (N - 1) as f64).collect();
    let mut best = 0.0f64;
    for &gamma in &pts {
        let user = UserType { gamma, theta: 0.5 };
        for &r in &pts {
            for &psi in &pts {
                let q = QueryDraw { r, psi };
                for c in 0..=params.grid.c_max {
                    let st = UserState::pre(0, c);
                    for a in Action::BOTH {
                        best = best.max(user_benefit(benefit, params, &user, &q, &st, a).abs());
                    }
                }
            }
        }
    }
    best
}

impl WelfareParams {
    pub fn resolve(&self, params: &MarketParams) -> Result<ResolvedWelfare, ValidationError> {
        let scanned = scan_u_max(&self.benefit, params);
        let u_max = match self.u_max {
            Some(u) if !(u.is_finite() && u >= 0.0) => {
                return Err(ValidationError::new("welfare.u_max", "must be finite and >= 0"))
            }
            Some(u) if scanned > u + 1e-12 => {
                return Err(ValidationError::new(
                    "welfare.u_max",
                    format!("grid scan found |u_user| = {scanned}, above the configured bound"),
                ))
            }
            Some(u) => u,
            None => scanned,
        };
        let r_sub = params.subscription_margin();
        let w_sub = self.w_sub.unwrap_or(r_sub);
        if !w_sub.is_finite() {
            return Err(ValidationError::new("welfare.w_sub", "must be finite"));
        }
        let gap = (w_sub - r_sub).abs();
        let delta_sub_max = match self.delta_sub_max {
            Some(d) if !(d >= 0.0) || gap > d + 1e-12 => {
                return Err(ValidationError::new(
                    "welfare.delta_sub_max",
                    format!("|w_sub - r_sub| = {gap} exceeds the configured bound"),
                ))
            }
            Some(d) => d,
            None => gap,
        };
        Ok(ResolvedWelfare {
            benefit: self.benefit.clone(),
            w_sub,
            r_sub,
            u_max,
            delta_sub_max,
            eps_sw: u_max.max(delta_sub_max),
        })
    }
}

/// The revenue model with welfare flows.
#[derive(Debug, Clone)]
pub struct WelfareModel {
    pub inner: TrueModel,
    pub welfare: ResolvedWelfare,
}

impl DecisionModel for WelfareModel {
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    fn grid(&self) -> GridCaps {
        self.inner.grid()
    }

    fn user(&self) -> UserType {
        self.inner.user
    }

    fn engage_prob(&self, state: &UserState, query: &QueryDraw, action: Action) -> f64 {
        self.inner.engage_prob(state, query, action)
    }

    fn expected_flow(&self, state: &UserState, query: &QueryDraw, action: Action) -> f64 {
        self.inner.expected_flow(state, query, action)
            + user_benefit(
                &self.welfare.benefit,
                &self.inner.params,
                &self.inner.user,
                query,
                state,
                action,
            )
    }

    fn retention(&self, post: &UserState) -> f64 {
        self.inner.retention(post)
    }

    fn post_state(&self, state: &UserState, query: &QueryDraw, action: Action, engaged: bool) -> UserState {
        self.inner.post_state(state, query, action, engaged)
    }

    fn subscribed_value(&self) -> f64 {
        self.welfare.w_sub / (1.0 - self.inner.params.beta)
    }

    fn subscribed_flow(&self) -> f64 {
        self.welfare.w_sub
    }
}

pub fn welfare_solve(
    params: &MarketParams,
    welfare: &ResolvedWelfare,
    user: UserType,
    panel: &QueryPanel,
    tol: f64,
) -> Result<(Solver<WelfareModel>, ValueTable), SolveError> {
    let model = WelfareModel {
        inner: TrueModel::new(params.clone(), user),
        welfare: welfare.clone(),
    };
    let solver = Solver::new(model, panel.clone());
    let table = solver.value_iterate(tol, DEFAULT_MAX_ITER)?;
    Ok((solver, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disagreement {
    pub s: u32,
    pub c: u32,
    pub r: f64,
    pub psi: f64,
    pub delta: f64,
    pub delta_sw: f64,
    /// Outside the alignment band, where agreement is guaranteed.
    pub outside_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub user: UserType,
    pub eps_sw: f64,
    pub value_gap: f64,
    pub value_bound: f64,
    pub value_ok: bool,
    pub edge_gap: f64,
    /// `2 U_max + 2 beta eps_sw / (1 - beta)`.
    pub band: f64,
    pub edge_ok: bool,
    pub points: usize,
    pub margin_points: usize,
    pub agreeing: usize,
    pub disagreements: Vec<Disagreement>,
}

impl AlignmentReport {
    pub fn agreement_ok(&self) -> bool {
        self.agreeing == self.margin_points
    }

    pub fn passed(&self) -> bool {
        self.value_ok && self.edge_ok && self.agreement_ok()
    }
}

const SLACK: f64 = 1e-8;

/// Compare revenue and welfare solves for one type on every grid cell and
/// panel query.
pub fn welfare_compare(
    revenue: &Solver<TrueModel>,
    v: &ValueTable,
    welfare: &Solver<WelfareModel>,
    w: &ValueTable,
) -> Result<AlignmentReport, SolveError> {
    if v.final_residual > 1e-9 || w.final_residual > 1e-9 {
        return Err(ValidationError::new("solve", "both solves must converge to a residual <= 1e-9").into());
    }
    if revenue.panel() != welfare.panel() {
        return Err(ValidationError::new("panel", "revenue and welfare solves must share a query panel").into());
    }
    let wp = &welfare.model().welfare;
    let beta = revenue.beta();
    let value_bound = wp.eps_sw / (1.0 - beta);
    let band = 2.0 * wp.u_max + 2.0 * beta * wp.eps_sw / (1.0 - beta);
    let value_gap = v.sup_distance(w);

    let grid = revenue.grid();
    let (mut edge_gap, mut points, mut margin_points, mut agreeing) = (0.0f64, 0, 0, 0);
    let mut disagreements = Vec::new();
    for cell in 0..grid.n_cells() {
        let (s, c) = grid.coords(cell);
        let st = UserState::pre(s, c);
        for q in revenue.panel().queries() {
            let e = edge_at(revenue.model(), v, &st, q)?;
            let e_sw = edge_at(welfare.model(), w, &st, q)?;
            points += 1;
            edge_gap = edge_gap.max((e.delta - e_sw.delta).abs());
            let outside_band = e.delta.abs() > band + SLACK;
            let agree = optimal_action(&e) == optimal_action(&e_sw);
            if outside_band {
                margin_points += 1;
                agreeing += usize::from(agree);
            }
            if !agree {
                disagreements.push(Disagreement {
                    s,
                    c,
                    r: q.r,
                    psi: q.psi,
                    delta: e.delta,
                    delta_sw: e_sw.delta,
                    outside_band,
                });
            }
        }
    }
    Ok(AlignmentReport {
        user: revenue.model().user,
        eps_sw: wp.eps_sw,
        value_gap,
        value_bound,
        value_ok: value_gap <= value_bound + SLACK,
        edge_gap,
        band,
        edge_ok: edge_gap <= band + SLACK,
        points,
        margin_points,
        agreeing,
        disagreements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::PopulationSpec;

    fn small() -> MarketParams {
        let mut p = MarketParams::baseline();
        p.grid.s_max = 6;
        p.grid.c_max = 6;
        p.n_q = 10;
        p
    }

    const U: UserType = UserType { gamma: 0.4, theta: 0.6 };

    #[test]
    fn inclusive_value_hand_values() {
        let mut p = small();
        p.utility = crate::params::UtilityCoeffs {
            w_psi: 0.0,
            w_r_free: 0.0,
            u0_ad: 1.0,
            ur_ad: 0.0,
            w_gamma: 0.0,
            uc_ad: 0.0,
        };
        let q = QueryDraw { r: 0.3, psi: 0.3 };
        let st = UserState::pre(0, 0);
        let b = Benefit::InclusiveValue;
        assert!(user_benefit(&b, &p, &U, &q, &st, Action::Free).abs() < 1e-15);
        let ad = user_benefit(&b, &p, &U, &q, &st, Action::Ad);
        assert!((ad - 0.62011).abs() < 1e-5, "{ad}");
        assert_eq!(user_benefit(&Benefit::Zero, &p, &U, &q, &st, Action::Ad), 0.0);
    }

    #[test]
    fn band_hand_value() {
        let (u_max, beta, eps) = (0.5, 0.9, 0.5);
        let band: f64 = 2.0 * u_max + 2.0 * beta * eps / (1.0 - beta);
        assert!((band - 10.0).abs() < 1e-12);
    }

    #[test]
    fn configured_u_max_below_scan_rejected() {
        let p = small();
        let wp = WelfareParams {
            u_max: Some(0.01),
            ..WelfareParams::default()
        };
        assert_eq!(wp.resolve(&p).unwrap_err().field, "welfare.u_max");
        let ok = WelfareParams::default().resolve(&p).unwrap();
        assert!(ok.u_max > 0.0 && ok.delta_sub_max == 0.0 && ok.eps_sw == ok.u_max);
    }

    #[test]
    fn zero_benefit_reproduces_revenue_solve() {
        let p = small();
        let panel = QueryPanel::for_population(&PopulationSpec::default(), p.n_q, 3);
        let wp = WelfareParams {
            benefit: Benefit::Zero,
            ..WelfareParams::default()
        }
        .resolve(&p)
        .unwrap();
        assert_eq!(wp.eps_sw, 0.0);
        let rev = Solver::new(TrueModel::new(p.clone(), U), panel.clone());
        let v = rev.value_iterate(1e-11, DEFAULT_MAX_ITER).unwrap();
        let (wel, w) = welfare_solve(&p, &wp, U, &panel, 1e-11).unwrap();
        let rep = welfare_compare(&rev, &v, &wel, &w).unwrap();
        assert!(rep.value_gap < 1e-12, "{}", rep.value_gap);
        assert!(rep.disagreements.is_empty());
        assert!(rep.passed());
    }

    #[test]
    fn subscribed_welfare_closed_form() {
        let p = small();
        let wp = WelfareParams {
            w_sub: Some(1.0),
            ..WelfareParams::default()
        }
        .resolve(&p)
        .unwrap();
        let m = WelfareModel {
            inner: TrueModel::new(p.clone(), U),
            welfare: wp,
        };
        assert!((m.subscribed_value() - 1.0 / (1.0 - p.beta)).abs() < 1e-12);
    }

    #[test]
    fn default_benefit_bounds_hold() {
        let p = small();
        let panel = QueryPanel::for_population(&PopulationSpec::default(), p.n_q, 3);
        let wp = WelfareParams::default().resolve(&p).unwrap();
        let rev = Solver::new(TrueModel::new(p.clone(), U), panel.clone());
        let v = rev.value_iterate(1e-11, DEFAULT_MAX_ITER).unwrap();
        let (wel, w) = welfare_solve(&p, &wp, U, &panel, 1e-11).unwrap();
        let rep = welfare_compare(&rev, &v, &wel, &w).unwrap();
        assert!(rep.passed(), "{rep:?}");
        // The policy must follow the sign rule on the welfare action values.
        for cell in 0..p.grid.n_cells() {
            let (s, c) = p.grid.coords(cell);
            for q in panel.queries() {
                let e = edge_at(wel.model(), &w, &UserState::pre(s, c), q).unwrap();
                let best = if e.q_ad >= e.q_free { Action::Ad } else { Action::Free };
                assert_eq!(optimal_action(&e), best);
            }
        }
    }
}
