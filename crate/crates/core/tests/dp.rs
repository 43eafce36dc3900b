mod common;

use gemon_core::dp::{
    brute_force_oracle, brute_force_policy_value, edge_at, optimal_action, subscribed_value, QueryPanel, Solver,
    TrueModel, DEFAULT_MAX_ITER,
};
use gemon_core::params::GridCaps;
use gemon_core::{Action, MarketParams, PopulationSpec, QueryDraw, UserState, UserType};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn subscribed_value_at_defaults() {
    // (2.0 - 1.5) / (1 - 0.95)
    let p = MarketParams::with_beta(0.95);
    assert!((subscribed_value(&p).unwrap() - 10.0).abs() < 1e-12);
}

#[test]
fn single_cell_fixed_point_matches_hand_solution() {
    // One cell, one query, both actions evaluated by hand from the model.
    let mut p = MarketParams::with_beta(0.9);
    p.grid = GridCaps { s_max: 0, c_max: 0 };
    let user = UserType { gamma: 0.5, theta: 0.5 };
    let q = QueryDraw { r: 0.5, psi: 0.5 };
    let solver = Solver::new(TrueModel::new(p.clone(), user), QueryPanel::uniform(vec![q]).unwrap());
    let v = solver.value_iterate(1e-13, DEFAULT_MAX_ITER).unwrap();
    let e = edge_at(solver.model(), &v, &UserState::pre(0, 0), &q).unwrap();
    assert!((v.get(0, 0) - e.q_ad.max(e.q_free)).abs() < 1e-10);
}

#[test]
fn longer_horizons_approach_the_fixed_point() {
    let s = common::solver(11, 4, 4);
    let v = s.value_iterate(1e-12, DEFAULT_MAX_ITER).unwrap();
    let gaps: Vec<f64> = [1, 5, 20, 80].iter().map(|&t| s.iterate_n(t).sup_distance(&v)).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
}

#[test]
fn default_solve_converges_inside_the_value_bound() {
    let p = MarketParams::with_beta(0.95);
    let panel = QueryPanel::for_population(&PopulationSpec::default(), p.n_q, p.query_panel_seed);
    let s = Solver::new(TrueModel::new(p, UserType { gamma: 0.5, theta: 0.5 }), panel);
    let v = s.solve().unwrap();
    assert!(v.final_residual <= 1e-8);
    assert!(v.values.iter().all(|x| x.abs() <= s.value_bound()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bellman_is_a_beta_contraction(seed in any::<u64>()) {
        let s = common::solver(seed, 3, 4);
        let mut rng = common::rng(seed ^ 1);
        let scale = s.value_bound();
        let mut v = s.zero_table();
        let mut w = s.zero_table();
        for x in v.values.iter_mut().chain(w.values.iter_mut()) {
            *x = rng.gen_range(-scale..=scale);
        }
        let lhs = s.bellman_apply(&v).sup_distance(&s.bellman_apply(&w));
        prop_assert!(lhs <= s.beta() * v.sup_distance(&w) + 1e-12);
    }

    #[test]
    fn bellman_is_monotone(seed in any::<u64>(), bump in 0.0f64..5.0) {
        let s = common::solver(seed, 3, 3);
        let v = s.iterate_n(3);
        let mut w = v.clone();
        for x in &mut w.values {
            *x += bump;
        }
        let (tv, tw) = (s.bellman_apply(&v), s.bellman_apply(&w));
        for (a, b) in tv.values.iter().zip(&tw.values) {
            prop_assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn fixed_point_is_bounded_and_stable(seed in any::<u64>()) {
        let s = common::solver(seed, 4, 4);
        let v = s.value_iterate(1e-11, DEFAULT_MAX_ITER).unwrap();
        prop_assert!(v.values.iter().all(|x| x.abs() <= s.value_bound() + 1e-9));
        prop_assert!(s.bellman_apply(&v).sup_distance(&v) <= 1e-10);
    }

    #[test]
    fn truncation_matches_enumeration(seed in any::<u64>(), horizon in 1usize..=4) {
        let mut rng = common::rng(seed);
        let cap = rng.gen_range(1..=2);
        let s = common::solver(seed, cap, rng.gen_range(1..=3));
        let p = s.model().params.clone();
        let v = s.iterate_n(horizon);
        for (a, c, value) in v.rows() {
            let truth = brute_force_oracle(&p, &s.model().user, s.panel(), horizon, &UserState::pre(a, c)).unwrap();
            prop_assert!((truth - value).abs() <= 1e-9, "{} vs {}", truth, value);
        }
    }

    #[test]
    fn policy_evaluation_matches_truncated_enumeration(seed in any::<u64>()) {
        // Alternate actions on a checkerboard; the T-truncated value differs
        // from the infinite-horizon one by at most beta^T times its bound.
        let s = common::solver(seed, 2, 2);
        let p = s.model().params.clone();
        let rule = |st: &UserState| if (st.s + st.c) % 2 == 0 { Action::Ad } else { Action::Free };
        let inf = s.evaluate_policy(|a, c, _| rule(&UserState::pre(a, c)), 1e-12, DEFAULT_MAX_ITER).unwrap();
        let horizon = 4;
        let tail = p.beta.powi(horizon as i32) * s.value_bound();
        for (a, c, value) in inf.rows() {
            let finite = brute_force_policy_value(
                &p, &s.model().user, s.panel(), horizon, &UserState::pre(a, c), &|st, _| rule(st),
            ).unwrap();
            prop_assert!((finite - value).abs() <= tail + 1e-9);
        }
    }

    #[test]
    fn edge_splits_into_short_and_long(seed in any::<u64>()) {
        let s = common::solver(seed, 5, 4);
        let v = s.value_iterate(1e-10, DEFAULT_MAX_ITER).unwrap();
        let mut rng = common::rng(seed ^ 2);
        for _ in 0..20 {
            let st = UserState::pre(rng.gen_range(0..=5), rng.gen_range(0..=5));
            let q = common::query(&mut rng);
            let e = edge_at(s.model(), &v, &st, &q).unwrap();
            prop_assert!((e.delta - (e.short_term + e.long_term)).abs() <= 1e-12);
            prop_assert!((e.delta - (e.q_ad - e.q_free)).abs() <= 1e-12);
            prop_assert_eq!(optimal_action(&e), if e.delta >= 0.0 { Action::Ad } else { Action::Free });
        }
    }

    #[test]
    fn optimal_policy_value_is_the_fixed_point(seed in any::<u64>()) {
        let s = common::solver(seed, 3, 3);
        let v = s.value_iterate(1e-12, DEFAULT_MAX_ITER).unwrap();
        let queries: Vec<QueryDraw> = s.panel().queries().to_vec();
        let greedy = s.evaluate_policy(
            |a, c, k| optimal_action(&edge_at(s.model(), &v, &UserState::pre(a, c), &queries[k]).unwrap()),
            1e-12,
            DEFAULT_MAX_ITER,
        ).unwrap();
        prop_assert!(greedy.sup_distance(&v) <= 1e-8);
    }
}
