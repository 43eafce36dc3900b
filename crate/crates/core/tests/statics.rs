use gemon_core::dp::{edge_at, QueryPanel, Solver, TrueModel, DEFAULT_MAX_ITER};
use gemon_core::statics::{find_cutoff, sweep_scalar, Anchor, CutoffAxis, CutoffSpec, SweepParam, SweepSpec, Verdict};
use gemon_core::{MarketParams, PayoffConvention, PopulationSpec, QueryDraw, UserState, UserType};
use proptest::prelude::*;

fn main_text() -> MarketParams {
    let mut p = MarketParams::with_beta(0.95);
    p.payoff_convention = PayoffConvention::MainText;
    p
}

fn direct_delta(p: &MarketParams, a: &Anchor) -> f64 {
    let panel = QueryPanel::for_population(&PopulationSpec::default(), p.n_q, p.query_panel_seed);
    let s = Solver::new(TrueModel::new(p.clone(), a.user), panel);
    let v = s.value_iterate(1e-10, DEFAULT_MAX_ITER).unwrap();
    edge_at(s.model(), &v, &a.state, &a.query).unwrap().delta
}

#[test]
fn sweep_reports_the_raw_edge() {
    let base = main_text();
    let anchor = Anchor {
        user: UserType { gamma: 0.8, theta: 0.2 },
        state: UserState::pre(2, 1),
        query: QueryDraw { r: 0.3, psi: 0.7 },
    };
    let grid = vec![0.5, 0.8, 0.95];
    let res = sweep_scalar(&SweepSpec {
        param: SweepParam::Beta,
        grid: grid.clone(),
        anchor,
        market: base.clone(),
        population: PopulationSpec::default(),
    })
    .unwrap();
    assert_eq!(res.points.len(), 3);
    for (pt, beta) in res.points.iter().zip(grid) {
        let mut p = base.clone();
        p.beta = beta;
        assert!((pt.delta - direct_delta(&p, &anchor)).abs() < 1e-12);
        assert!((pt.delta - (pt.short + pt.long)).abs() < 1e-12);
    }
    let csv = res.to_csv();
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("0.5,"), "{first}");
    assert!(first.ends_with(res.verdict.as_str()));
}

#[test]
fn outside_option_sweep_never_reports_violation_at_defaults() {
    let res = sweep_scalar(&SweepSpec {
        param: SweepParam::Omega,
        grid: vec![0.0, 0.2, 0.5],
        anchor: Anchor::default(),
        market: main_text(),
        population: PopulationSpec::default(),
    })
    .unwrap();
    assert_ne!(res.verdict, Verdict::Violated);
}

#[test]
fn cutoff_bracket_straddles_the_sign_change() {
    let spec = CutoffSpec::new(
        CutoffAxis::R,
        main_text(),
        UserType { gamma: 0.5, theta: 0.5 },
        UserState::pre(0, 0),
        QueryDraw { r: 0.5, psi: 0.5 },
    );
    let res = find_cutoff(&spec).unwrap();
    if let Some((lo, hi)) = res.bracket {
        assert!(hi - lo <= spec.tol);
        assert!(lo <= res.cutoff && res.cutoff <= hi);
    } else {
        assert!(res.cutoff.is_infinite());
    }
    assert_eq!(res.prescan.len(), 21);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn query_cutoffs_are_stable_under_finer_prescans(
        gamma in 0.0f64..=1.0,
        theta in 0.0f64..=1.0,
        s in 0u32..=4,
        psi_axis in any::<bool>(),
    ) {
        let axis = if psi_axis { CutoffAxis::Psi } else { CutoffAxis::R };
        let mut spec = CutoffSpec::new(axis, main_text(), UserType { gamma, theta }, UserState::pre(s, 0), QueryDraw { r: 0.5, psi: 0.5 });
        let coarse = find_cutoff(&spec).unwrap().cutoff;
        spec.prescan = 41;
        let fine = find_cutoff(&spec).unwrap().cutoff;
        if coarse.is_finite() {
            prop_assert!((coarse - fine).abs() <= 0.05 + spec.tol, "{} vs {}", coarse, fine);
        }
    }
}
