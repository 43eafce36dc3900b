use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DecisionModel, QueryPanel};
use crate::error::{ModelError, SolveError, ValidationError};
use crate::model::{Action, QueryDraw, UserState, UserType};
use crate::params::{GridCaps, MarketParams};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// `(p - kappa_paid) / (1 - beta)`.
pub fn subscribed_value(params: &MarketParams) -> Result<f64, ValidationError> {
    if !(params.beta > 0.0 && params.beta < 1.0) {
        return Err(ValidationError::new("market.beta", "must lie in (0, 1)"));
    }
    Ok(params.subscription_margin() / (1.0 - params.beta))
}

/// Pre-subscription values on the `(s, c)` grid plus the subscribed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub grid: GridCaps,
    pub values: Vec<f64>,
    pub v_sub: f64,
    pub user: UserType,
    pub iterations: usize,
    pub final_residual: f64,
}

impl ValueTable {
    pub fn zeros(grid: GridCaps, v_sub: f64, user: UserType) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_cells()],
            v_sub,
            user,
            iterations: 0,
            final_residual: f64::INFINITY,
        }
    }

    #[inline]
    pub fn get(&self, s: u32, c: u32) -> f64 {
        self.values[self.grid.index(s, c)]
    }

    /// Value of a post-update state: the grid entry, or `v_sub` once
    /// subscribed.
    #[inline]
    pub fn value_of(&self, state: &UserState) -> f64 {
        if state.subscribed {
            self.v_sub
        } else {
            self.get(state.s, state.c)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        sup_distance(&self.values, &other.values)
    }

    /// `(s, c, value)` rows in grid order.
    pub fn rows(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| {
            let (s, c) = self.grid.coords(i);
            (s, c, v)
        })
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Action values at one decision point and their split into a short-term
/// (flow) and a long-term (continuation) edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub q_ad: f64,
    pub q_free: f64,
    pub delta: f64,
    pub short_term: f64,
    pub long_term: f64,
}

/// Ad iff the edge is nonnegative; ties go to Ad.
pub fn optimal_action(edge: &EdgeReport) -> Action {
    if edge.delta >= 0.0 {
        Action::Ad
    } else {
        Action::Free
    }
}

/// Everything one action does at one decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionEval {
    pub flow: f64,
    pub engage: f64,
    /// `(probability, retention, post-state)` for engaged, then not engaged.
    pub branches: [(f64, f64, UserState); 2],
}

impl ActionEval {
    pub fn evaluate<M: DecisionModel + ?Sized>(
        model: &M,
        state: &UserState,
        query: &QueryDraw,
        action: Action,
    ) -> Self {
        let engage = model.engage_prob(state, query, action);
        let branch = |engaged: bool, prob: f64| {
            let post = model.post_state(state, query, action, engaged);
            (prob, model.retention(&post), post)
        };
        Self {
            flow: model.expected_flow(state, query, action),
            engage,
            branches: [branch(true, engage), branch(false, 1.0 - engage)],
        }
    }

    /// `E_Y[rho(post) * V(post)]`.
    pub fn continuation(&self, table: &ValueTable) -> f64 {
        self.branches
            .iter()
            .map(|(p, rho, post)| p * rho * table.value_of(post))
            .sum()
    }
}

const SUBSCRIBED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Branch {
    weight: f64,
    target: u32,
}

#[derive(Debug, Clone, Copy)]
struct KernelAction {
    flow: f64,
    branches: [Branch; 2],
}

/// Bellman operator with every primitive evaluated once up front.
/// Entry `cell * n_q + q` holds `[ad, free]`.
pub struct Solver<M: DecisionModel> {
    model: M,
    panel: QueryPanel,
    kernel: Vec<[KernelAction; 2]>,
    r_max: f64,
}

impl<M: DecisionModel> Solver<M> {
    pub fn new(model: M, panel: QueryPanel) -> Self {
        let grid = model.grid();
        let n_q = panel.len();
        let kernel: Vec<[KernelAction; 2]> = (0..grid.n_cells() * n_q)
            .into_par_iter()
            .map(|i| {
                let (s, c) = grid.coords(i / n_q);
                let state = UserState::pre(s, c);
                let query = &panel.queries()[i % n_q];
                Action::BOTH.map(|a| {
                    let ev = ActionEval::evaluate(&model, &state, query, a);
                    KernelAction {
                        flow: ev.flow,
                        branches: ev.branches.map(|(p, rho, post)| Branch {
                            weight: p * rho,
                            target: if post.subscribed {
                                SUBSCRIBED
                            } else {
                                grid.index(post.s, post.c) as u32
                            },
                        }),
                    }
                })
            })
            .collect();
        let r_max = kernel
            .iter()
            .flat_map(|k| k.iter().map(|a| a.flow.abs()))
            .fold(model.subscribed_flow().abs(), f64::max);
        Self {
            model,
            panel,
            kernel,
            r_max,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn panel(&self) -> &QueryPanel {
        &self.panel
    }

    pub fn grid(&self) -> GridCaps {
        self.model.grid()
    }

    pub fn beta(&self) -> f64 {
        self.model.beta()
    }

    /// Largest absolute one-period payoff over the panel, the grid, both
    /// actions and the subscribed flow.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `R_max / (1 - beta)`.
    pub fn value_bound(&self) -> f64 {
        self.r_max / (1.0 - self.beta())
    }

    pub fn zero_table(&self) -> ValueTable {
        ValueTable::zeros(self.grid(), self.model.subscribed_value(), self.model.user())
    }

    #[inline]
    fn q_values(&self, entry: &[KernelAction; 2], values: &[f64], v_sub: f64) -> [f64; 2] {
        let beta = self.beta();
        entry.map(|ka| {
            let cont: f64 = ka
                .branches
                .iter()
                .map(|b| {
                    let v = if b.target == SUBSCRIBED {
                        v_sub
                    } else {
                        values[b.target as usize]
                    };
                    b.weight * v
                })
                .sum();
            ka.flow + beta * cont
        })
    }

    fn sweep<F>(&self, values: &[f64], v_sub: f64, pick: F) -> Vec<f64>
    where
        F: Fn(usize, usize, [f64; 2]) -> f64 + Sync,
    {
        let n_q = self.panel.len();
        let weights = self.panel.weights();
        (0..self.grid().n_cells())
            .into_par_iter()
            .map(|cell| {
                let base = cell * n_q;
                (0..n_q)
                    .map(|q| weights[q] * pick(cell, q, self.q_values(&self.kernel[base + q], values, v_sub)))
                    .sum()
            })
            .collect()
    }

    /// One application of the Bellman optimality operator.
    pub fn bellman_apply(&self, table: &ValueTable) -> ValueTable {
        let values = self.sweep(&table.values, table.v_sub, |_, _, [ad, free]| ad.max(free));
        ValueTable {
            final_residual: sup_distance(&values, &table.values),
            values,
            iterations: table.iterations + 1,
            ..table.clone()
        }
    }

    /// `T` applications of the operator starting from zero.
    pub fn iterate_n(&self, t: usize) -> ValueTable {
        let mut table = self.zero_table();
        for _ in 0..t {
            table = self.bellman_apply(&table);
        }
        table
    }

    pub fn value_iterate(&self, tol: f64, max_iter: usize) -> Result<ValueTable, SolveError> {
        self.value_iterate_traced(tol, max_iter).map(|(t, _)| t)
    }

    /// Value iteration from zero; also returns the residual after every
    /// sweep.
    pub fn value_iterate_traced(
        &self,
        tol: f64,
        max_iter: usize,
    ) -> Result<(ValueTable, Vec<f64>), SolveError> {
        if !(tol > 0.0) {
            return Err(ValidationError::new("tol", "must be > 0").into());
        }
        let mut table = self.zero_table();
        let mut residuals = Vec::new();
        for _ in 0..max_iter {
            table = self.bellman_apply(&table);
            residuals.push(table.final_residual);
            if table.final_residual <= tol {
                return Ok((table, residuals));
            }
        }
        Err(SolveError::NotConverged {
            iterations: max_iter,
            residual: table.final_residual,
        })
    }

    pub fn solve(&self) -> Result<ValueTable, SolveError> {
        self.value_iterate(DEFAULT_TOL, DEFAULT_MAX_ITER)
    }

    /// Value of following `decide(cell, panel_index)` forever.
    pub fn evaluate_policy<F>(&self, decide: F, tol: f64, max_iter: usize) -> Result<ValueTable, SolveError>
    where
        F: Fn(u32, u32, usize) -> Action + Sync,
    {
        let grid = self.grid();
        let mut table = self.zero_table();
        for _ in 0..max_iter {
            let values = self.sweep(&table.values, table.v_sub, |cell, q, [ad, free]| {
                let (s, c) = grid.coords(cell);
                match decide(s, c, q) {
                    Action::Ad => ad,
                    Action::Free => free,
                }
            });
            let residual = sup_distance(&values, &table.values);
            table = ValueTable {
                values,
                final_residual: residual,
                iterations: table.iterations + 1,
                ..table
            };
            if residual <= tol {
                return Ok(table);
            }
        }
        Err(SolveError::NotConverged {
            iterations: max_iter,
            residual: table.final_residual,
        })
    }

    /// Action values, edge and decomposition at an arbitrary decision point.
    pub fn q_edge(
        &self,
        table: &ValueTable,
        state: &UserState,
        query: &QueryDraw,
    ) -> Result<EdgeReport, ModelError> {
        edge_at(&self.model, table, state, query)
    }
}

/// Edge report at `(state, query)` given a value table for `model`.
pub fn edge_at<M: DecisionModel + ?Sized>(
    model: &M,
    table: &ValueTable,
    state: &UserState,
    query: &QueryDraw,
) -> Result<EdgeReport, ModelError> {
    if state.subscribed {
        return Err(ModelError::SubscribedState);
    }
    let grid = model.grid();
    if !grid.contains(state.s, state.c) {
        return Err(ModelError::OffGrid {
            s: state.s,
            c: state.c,
            s_max: grid.s_max,
            c_max: grid.c_max,
        });
    }
    let beta = model.beta();
    let ad = ActionEval::evaluate(model, state, query, Action::Ad);
    let free = ActionEval::evaluate(model, state, query, Action::Free);
    let (cont_ad, cont_free) = (ad.continuation(table), free.continuation(table));
    let q_ad = ad.flow + beta * cont_ad;
    let q_free = free.flow + beta * cont_free;
    Ok(EdgeReport {
        q_ad,
        q_free,
        delta: q_ad - q_free,
        short_term: ad.flow - free.flow,
        long_term: beta * (cont_ad - cont_free),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::TrueModel;
    use crate::params::PayoffConvention;
    use crate::population::PopulationSpec;

    fn small() -> MarketParams {
        let mut p = MarketParams::baseline();
        p.grid.s_max = 8;
        p.grid.c_max = 6;
        p.n_q = 12;
        p
    }

    fn solver(p: &MarketParams, user: UserType) -> Solver<TrueModel> {
        let panel = QueryPanel::monte_carlo(&PopulationSpec::default(), p.n_q, p.query_panel_seed);
        Solver::new(TrueModel::new(p.clone(), user), panel)
    }

    const USER: UserType = UserType { gamma: 0.4, theta: 0.6 };

    #[test]
    fn subscribed_value_examples() {
        let mut p = MarketParams::baseline();
        p.price = 4.0;
        p.kappa_paid = 2.0;
        p.beta = 0.95;
        assert!((subscribed_value(&p).unwrap() - 40.0).abs() < 1e-9);
        p.kappa_paid = p.price;
        assert_eq!(subscribed_value(&p).unwrap(), 0.0);
        p.beta = 0.5;
        p.price = 3.0;
        p.kappa_paid = 2.0;
        assert!((subscribed_value(&p).unwrap() - 2.0).abs() < 1e-12);
        p.beta = 1.0;
        assert!(subscribed_value(&p).is_err());
    }

    #[test]
    fn optimal_action_ties_to_ad() {
        let e = |d: f64| EdgeReport { q_ad: 0.0, q_free: 0.0, delta: d, short_term: 0.0, long_term: 0.0 };
        assert_eq!(optimal_action(&e(0.0)), Action::Ad);
        assert_eq!(optimal_action(&e(-0.1)), Action::Free);
        assert_eq!(optimal_action(&e(0.1)), Action::Ad);
    }

    #[test]
    fn myopic_limit_is_expected_best_flow() {
        let mut p = small();
        p.beta = 1e-300;
        let sv = solver(&p, USER);
        let once = sv.bellman_apply(&sv.zero_table());
        let model = sv.model();
        for (s, c, v) in once.rows() {
            let st = UserState::pre(s, c);
            let expect: f64 = sv
                .panel()
                .iter()
                .map(|(q, w)| {
                    w * model
                        .expected_flow(&st, q, Action::Ad)
                        .max(model.expected_flow(&st, q, Action::Free))
                })
                .sum();
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_payoffs_give_zero_fixed_point() {
        let mut p = small();
        p.kappa_free = 0.0;
        p.kappa_paid = 0.0;
        p.price = 0.0;
        p.revenue.b0 = 0.0;
        p.revenue.b_r = 0.0;
        let table = solver(&p, USER).solve().unwrap();
        assert_eq!(table.sup_norm(), 0.0);
    }

    #[test]
    fn contraction_on_two_tables() {
        let p = small();
        let sv = solver(&p, USER);
        let mut v = sv.zero_table();
        let mut w = sv.zero_table();
        for (i, (a, b)) in v.values.iter_mut().zip(w.values.iter_mut()).enumerate() {
            *a = (i as f64 * 0.37).sin() * 30.0;
            *b = (i as f64 * 0.11).cos() * 10.0;
        }
        let gap = sv.bellman_apply(&v).sup_distance(&sv.bellman_apply(&w));
        assert!(gap <= p.beta * v.sup_distance(&w) + 1e-12);
    }

    #[test]
    fn convergence_is_recorded_and_bounded() {
        let p = small();
        let sv = solver(&p, USER);
        let (table, res) = sv.value_iterate_traced(1e-10, 10_000).unwrap();
        assert_eq!(table.iterations, res.len());
        assert!(table.final_residual <= 1e-10);
        for w in res.windows(2) {
            assert!(w[1] <= p.beta * w[0] + 1e-12);
        }
        assert!(table.sup_norm() <= sv.value_bound() + 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let sv = solver(&small(), USER);
        match sv.value_iterate(1e-12, 3) {
            Err(SolveError::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn edge_decomposition_identity() {
        let mut p = small();
        p.payoff_convention = PayoffConvention::MainText;
        let sv = solver(&p, USER);
        let table = sv.solve().unwrap();
        for s in 0..=p.grid.s_max {
            for c in 0..=p.grid.c_max {
                let q = QueryDraw { r: 0.3, psi: 0.8 };
                let e = sv.q_edge(&table, &UserState::pre(s, c), &q).unwrap();
                assert_eq!(e.delta, e.q_ad - e.q_free);
                assert!((e.delta - e.short_term - e.long_term).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indistinguishable_actions_have_zero_edge() {
        let mut p = small();
        p.payoff_convention = PayoffConvention::MainText;
        p.revenue.b0 = 0.0;
        p.revenue.b_r = 0.0;
        // Identical engagement and no state movement make the actions equal.
        p.utility = crate::params::UtilityCoeffs {
            w_psi: 0.0,
            w_r_free: 0.0,
            u0_ad: 0.0,
            ur_ad: 0.0,
            w_gamma: 0.0,
            uc_ad: 0.0,
        };
        let sv = solver(&p, USER);
        let table = sv.solve().unwrap();
        // Grid pinned at the caps so neither action can move the state.
        let st = UserState::pre(p.grid.s_max, p.grid.c_max);
        let e = sv.q_edge(&table, &st, &QueryDraw { r: 0.5, psi: 0.2 }).unwrap();
        assert_eq!(e.delta, 0.0);
    }

    #[test]
    fn subscribed_decision_point_rejected() {
        let sv = solver(&small(), USER);
        let mut st = UserState::pre(0, 0);
        st.subscribed = true;
        let table = sv.zero_table();
        assert_eq!(
            sv.q_edge(&table, &st, &QueryDraw { r: 0.5, psi: 0.5 }),
            Err(ModelError::SubscribedState)
        );
    }

    #[test]
    fn policy_evaluation_of_optimal_rule_matches_optimum() {
        let p = small();
        let sv = solver(&p, USER);
        let table = sv.value_iterate(1e-11, 10_000).unwrap();
        let decide = |s: u32, c: u32, q: usize| {
            let e = sv
                .q_edge(&table, &UserState::pre(s, c), &sv.panel().queries()[q])
                .unwrap();
            optimal_action(&e)
        };
        let ev = sv.evaluate_policy(decide, 1e-11, 10_000).unwrap();
        assert!(ev.sup_distance(&table) < 1e-8);
    }
}
