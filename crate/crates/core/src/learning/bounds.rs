use serde::{Deserialize, Serialize};

use super::estimate::{estimate_primitives, Binning, EstimatedPrimitives, EstimationErrors};
use super::logs::generate_logs;
use crate::dp::{edge_at, optimal_action, DecisionModel, QueryPanel, Solver, TrueModel, ValueTable, DEFAULT_MAX_ITER};
use crate::error::{LearnError, ValidationError};
use crate::model::{self, Action, QueryDraw, UserState, UserType};
use crate::params::{GridCaps, MarketParams};
use crate::population::{PopulationSpec, UnitDist};

/// Both solves are run to this tolerance; the bounds need at most 1e-9.
const SOLVE_TOL: f64 = 1e-11;
const SLACK: f64 = 1e-8;

/// The estimated decision model for one user type. Transitions, conversion
/// and the subscribed value are the known true ones.
#[derive(Debug, Clone)]
pub struct PluginModel<'a> {
    params: MarketParams,
    user: UserType,
    est: &'a EstimatedPrimitives,
}

impl<'a> PluginModel<'a> {
    /// Fails if a bin or retention cell the operator needs on `panel` has no
    /// data.
    pub fn new(
        params: MarketParams,
        user: UserType,
        est: &'a EstimatedPrimitives,
        panel: &QueryPanel,
    ) -> Result<Self, LearnError> {
        if est.binning.grid != params.grid {
            return Err(ValidationError::new("learning.bins", "estimation grid must match market.grid").into());
        }
        for q in panel.queries() {
            for a in Action::BOTH {
                if est.engage(&user, q, a).is_none() || est.flow(&user, q, a).is_none() {
                    return Err(LearnError::MissingBin {
                        what: "engagement/payoff",
                        coords: format!(
                            "gamma {}, theta {}, r {}, psi {}, action {}",
                            user.gamma,
                            user.theta,
                            q.r,
                            q.psi,
                            a.as_str()
                        ),
                    });
                }
            }
        }
        let grid = params.grid;
        for cell in 0..grid.n_cells() {
            let (s, c) = grid.coords(cell);
            for q in panel.queries() {
                for a in Action::BOTH {
                    for engaged in [true, false] {
                        let post = model::post_state(&params, &user, q, &UserState::pre(s, c), a, engaged)
                            .expect("pre-subscription");
                        if !post.subscribed && est.retention(post.s, post.c).is_none() {
                            return Err(LearnError::MissingBin {
                                what: "retention",
                                coords: format!("state (s {}, c {})", post.s, post.c),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self { params, user, est })
    }
}

impl DecisionModel for PluginModel<'_> {
    fn beta(&self) -> f64 {
        self.params.beta
    }

    fn grid(&self) -> GridCaps {
        self.params.grid
    }

    fn user(&self) -> UserType {
        self.user
    }

    fn engage_prob(&self, _state: &UserState, query: &QueryDraw, action: Action) -> f64 {
        self.est
            .engage(&self.user, query, action)
            .expect("checked at construction")
            .clamp(0.0, 1.0)
    }

    fn expected_flow(&self, _state: &UserState, query: &QueryDraw, action: Action) -> f64 {
        self.est.flow(&self.user, query, action).expect("checked at construction")
    }

    fn retention(&self, post: &UserState) -> f64 {
        if post.subscribed {
            return 1.0;
        }
        self.est
            .retention(post.s, post.c)
            .expect("checked at construction")
            .clamp(0.0, 1.0)
    }

    fn post_state(&self, state: &UserState, query: &QueryDraw, action: Action, engaged: bool) -> UserState {
        model::post_state(&self.params, &self.user, query, state, action, engaged).expect("pre-subscription")
    }

    fn subscribed_value(&self) -> f64 {
        self.params.subscription_margin() / (1.0 - self.params.beta)
    }

    fn subscribed_flow(&self) -> f64 {
        self.params.subscription_margin()
    }
}

/// Solve the estimated Bellman equation for one type.
pub fn plugin_policy<'a>(
    est: &'a EstimatedPrimitives,
    params: &MarketParams,
    user: UserType,
    panel: &QueryPanel,
) -> Result<(Solver<PluginModel<'a>>, ValueTable), LearnError> {
    let solver = Solver::new(PluginModel::new(params.clone(), user, est, panel)?, panel.clone());
    let table = solver.value_iterate(SOLVE_TOL, DEFAULT_MAX_ITER)?;
    Ok((solver, table))
}

/// `B = eps_r + beta (2 eps_m + eps_rho) V_max`.
pub fn bound_b(eps_r: f64, eps_m: f64, eps_rho: f64, beta: f64, v_max: f64) -> f64 {
    eps_r + beta * (2.0 * eps_m + eps_rho) * v_max
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub user: UserType,
    pub r_max: f64,
    pub v_max: f64,
    pub errors: EstimationErrors,
    pub b: f64,
    pub value_gap: f64,
    pub value_bound: f64,
    pub value_ok: bool,
    pub edge_gap: f64,
    pub edge_bound: f64,
    pub edge_ok: bool,
    /// Decision points with `|Delta| > 2B/(1-beta)`.
    pub margin_points: usize,
    pub agreeing: usize,
    pub agreement_ok: bool,
    pub regret: f64,
    pub regret_bound: f64,
    pub regret_ok: bool,
    /// Human-readable descriptions of the first few failures.
    pub witnesses: Vec<String>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.value_ok && self.edge_ok && self.agreement_ok && self.regret_ok
    }
}

/// Check the four plug-in robustness inequalities for one type.
pub fn verify_bounds(
    truth: &Solver<TrueModel>,
    v: &ValueTable,
    plugin: &Solver<PluginModel<'_>>,
    v_hat: &ValueTable,
    errors: &EstimationErrors,
) -> Result<BoundsReport, LearnError> {
    if v.final_residual > 1e-9 || v_hat.final_residual > 1e-9 {
        return Err(ValidationError::new("solve", "both solves must converge to a residual <= 1e-9").into());
    }
    if truth.panel() != plugin.panel() {
        return Err(ValidationError::new("panel", "true and plug-in solves must share a query panel").into());
    }
    let beta = truth.beta();
    let r_max = truth.r_max();
    let v_max = r_max / (1.0 - beta);
    let b = bound_b(errors.eps_r, errors.eps_m, errors.eps_rho, beta, v_max);
    let value_bound = b / (1.0 - beta);
    let edge_bound = 2.0 * b / (1.0 - beta);
    let regret_bound = 2.0 * b / ((1.0 - beta) * (1.0 - beta));
    let mut witnesses = Vec::new();

    let value_gap = v.sup_distance(v_hat);
    let value_ok = value_gap <= value_bound + SLACK;
    if !value_ok {
        witnesses.push(format!("value gap {value_gap} > {value_bound}"));
    }

    let grid = truth.grid();
    let queries = truth.panel().queries();
    let n_q = queries.len();
    let mut decisions = Vec::with_capacity(grid.n_cells() * n_q);
    let (mut edge_gap, mut margin_points, mut agreeing) = (0.0f64, 0usize, 0usize);
    for cell in 0..grid.n_cells() {
        let (s, c) = grid.coords(cell);
        let st = UserState::pre(s, c);
        for q in queries {
            let e = edge_at(truth.model(), v, &st, q).map_err(crate::error::SolveError::from)?;
            let e_hat = edge_at(plugin.model(), v_hat, &st, q).map_err(crate::error::SolveError::from)?;
            let gap = (e.delta - e_hat.delta).abs();
            if gap > edge_bound + SLACK && witnesses.len() < 8 {
                witnesses.push(format!("edge gap {gap} > {edge_bound} at s={s} c={c} r={} psi={}", q.r, q.psi));
            }
            edge_gap = edge_gap.max(gap);
            let g_hat = optimal_action(&e_hat);
            if e.delta.abs() > edge_bound + SLACK {
                margin_points += 1;
                if g_hat == optimal_action(&e) {
                    agreeing += 1;
                } else if witnesses.len() < 8 {
                    witnesses.push(format!("disagreement at s={s} c={c} r={} psi={}", q.r, q.psi));
                }
            }
            decisions.push(g_hat);
        }
    }
    let edge_ok = edge_gap <= edge_bound + SLACK;

    let v_g = truth.evaluate_policy(
        |s, c, q| decisions[grid.index(s, c) * n_q + q],
        SOLVE_TOL,
        DEFAULT_MAX_ITER,
    )?;
    let regret = v
        .values
        .iter()
        .zip(&v_g.values)
        .map(|(a, b)| a - b)
        .fold(0.0f64, f64::max);
    let regret_ok = regret <= regret_bound + SLACK;
    if !regret_ok {
        witnesses.push(format!("regret {regret} > {regret_bound}"));
    }
    Ok(BoundsReport {
        user: truth.model().user,
        r_max,
        v_max,
        errors: *errors,
        b,
        value_gap,
        value_bound,
        value_ok,
        edge_gap,
        edge_bound,
        edge_ok,
        margin_points,
        agreeing,
        agreement_ok: agreeing == margin_points,
        regret,
        regret_bound,
        regret_ok,
        witnesses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub market: MarketParams,
    pub population: PopulationSpec,
    pub bins: Binning,
    pub eta: f64,
    pub seed: u64,
}

impl LearnConfig {
    /// A truth that is constant on a 2 x 1 x 2 x 2 binning: two ad
    /// sensitivities, one theta, two r and two psi values at bin centres,
    /// and no state dependence in engagement or payoff.
    pub fn bin_constant(beta: f64) -> Self {
        let mut market = MarketParams::with_beta(beta);
        market.utility.uc_ad = 0.0;
        market.revenue.b_c = 0.0;
        market.revenue.b_s = 0.0;
        market.grid = GridCaps { s_max: 5, c_max: 5 };
        let pair = || UnitDist::Discrete { support: vec![0.25, 0.75] };
        Self {
            bins: Binning {
                gamma: 2,
                theta: 1,
                r: 2,
                psi: 2,
                grid: market.grid,
            },
            market,
            population: PopulationSpec {
                gamma: pair(),
                theta: UnitDist::Constant { value: 0.5 },
                r: pair(),
                psi: pair(),
            },
            eta: 0.5,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.market.validate()?;
        self.population.validate()?;
        self.bins.validate()?;
        if self.bins.grid != self.market.grid {
            return Err(ValidationError::new("learning.bins.grid", "must equal market.grid"));
        }
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(ValidationError::new("learning.eta", "must lie in (0, 0.5]"));
        }
        Ok(())
    }

    /// Types checked: the product of finite type supports, or else the
    /// centres of the type bins.
    pub fn check_types(&self) -> Vec<UserType> {
        let gammas = self.population.gamma.finite_support().unwrap_or_else(|| {
            (0..self.bins.gamma).map(|i| (i as f64 + 0.5) / self.bins.gamma as f64).collect()
        });
        let thetas = self.population.theta.finite_support().unwrap_or_else(|| {
            (0..self.bins.theta).map(|i| (i as f64 + 0.5) / self.bins.theta as f64).collect()
        });
        gammas
            .iter()
            .flat_map(|&gamma| thetas.iter().map(move |&theta| UserType { gamma, theta }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnReport {
    pub n_records: usize,
    pub errors: EstimationErrors,
    pub reports: Vec<BoundsReport>,
}

impl LearnReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(BoundsReport::passed)
    }

    /// Largest value gap over the checked types.
    pub fn value_gap(&self) -> f64 {
        self.reports.iter().map(|r| r.value_gap).fold(0.0, f64::max)
    }
}

/// Generate `n_records` logs, estimate, solve both models for every checked
/// type and verify the bounds.
pub fn run_learning(
    cfg: &LearnConfig,
    n_records: usize,
) -> Result<(EstimatedPrimitives, LearnReport), LearnError> {
    cfg.validate()?;
    let logs = generate_logs(&cfg.market, &cfg.population, cfg.eta, n_records, cfg.seed)?;
    let est = estimate_primitives(&logs, cfg.bins, Some((&cfg.market, &cfg.population)))?;
    let errors = est.errors.expect("truth supplied");
    let panel = QueryPanel::for_population(&cfg.population, cfg.market.n_q, cfg.market.query_panel_seed);
    let mut reports = Vec::new();
    for user in cfg.check_types() {
        let truth = Solver::new(TrueModel::new(cfg.market.clone(), user), panel.clone());
        let v = truth.value_iterate(SOLVE_TOL, DEFAULT_MAX_ITER)?;
        let (plugin, v_hat) = plugin_policy(&est, &cfg.market, user, &panel)?;
        reports.push(verify_bounds(&truth, &v, &plugin, &v_hat, &errors)?);
    }
    Ok((
        est,
        LearnReport {
            n_records,
            errors,
            reports,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_formula_hand_value() {
        assert!((bound_b(0.1, 0.05, 0.02, 0.9, 10.0) - 1.18).abs() < 1e-12);
        assert_eq!(bound_b(0.0, 0.0, 0.0, 0.95, 40.0), 0.0);
    }

    #[test]
    fn exact_estimates_reproduce_the_optimal_policy() {
        let cfg = LearnConfig::bin_constant(0.9);
        let est = EstimatedPrimitives::from_truth(&cfg.market, cfg.bins);
        let panel = QueryPanel::for_population(&cfg.population, cfg.market.n_q, cfg.market.query_panel_seed);
        for user in cfg.check_types() {
            let truth = Solver::new(TrueModel::new(cfg.market.clone(), user), panel.clone());
            let v = truth.value_iterate(SOLVE_TOL, DEFAULT_MAX_ITER).unwrap();
            let (plugin, v_hat) = plugin_policy(&est, &cfg.market, user, &panel).unwrap();
            let rep = verify_bounds(&truth, &v, &plugin, &v_hat, &EstimationErrors::ZERO).unwrap();
            assert!(rep.passed(), "{rep:?}");
            assert_eq!(rep.b, 0.0);
            assert!(rep.value_gap < 1e-9 && rep.edge_gap < 1e-9 && rep.regret < 1e-9);
            assert_eq!(rep.margin_points, rep.agreeing);
        }
    }

    #[test]
    fn plugin_rejects_missing_retention_cell() {
        let cfg = LearnConfig::bin_constant(0.9);
        let mut est = EstimatedPrimitives::from_truth(&cfg.market, cfg.bins);
        est.rho[0] = None;
        let panel = QueryPanel::for_population(&cfg.population, 1, 0);
        let err = PluginModel::new(cfg.market.clone(), cfg.check_types()[0], &est, &panel).unwrap_err();
        assert!(matches!(err, LearnError::MissingBin { what: "retention", .. }), "{err:?}");
    }

    #[test]
    fn small_sample_bounds_hold() {
        let cfg = LearnConfig::bin_constant(0.9);
        let (_, rep) = run_learning(&cfg, 2000).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(!rep.errors.approximate);
        assert_eq!(rep.reports.len(), 2);
    }
}
