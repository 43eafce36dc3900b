use anyhow::{Context, Result};
use gemon_core::dp::{edge_csv, value_csv, QueryPanel, Solver, TrueModel};
use gemon_core::io::{csv_string, fmt_f64, fmt_opt};
use gemon_core::learning::{generate_logs, logs_to_csv, run_learning, LearnConfig};
use gemon_core::sim::{run_ablation, run_policies, PolicyKind, Trajectory, TRAJECTORY_HEADER};
use gemon_core::statics::{cutoff_map, find_cutoff, sweep_scalar, CutoffAxis, CutoffSpec, MapSpec, Plane, SweepSpec};
use gemon_core::welfare::{welfare_compare, welfare_solve};
use gemon_core::{StaticsError, UserType, ValidationError};

use crate::config::ExperimentConfig;
use crate::output::Staging;

/// What a command reports back to `main`.
#[derive(Debug, Default)]
pub struct Outcome {
    /// `(label, verdict)`; verdicts are "verified", "violated",
    /// "precondition unmet", "passed" or "failed".
    pub verdicts: Vec<(String, String)>,
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn violated(&self) -> bool {
        self.verdicts.iter().any(|(_, v)| v == "violated")
    }

    fn verdict(&mut self, label: impl Into<String>, verdict: &str) {
        let label = label.into();
        self.lines.push(format!("{label}: {verdict}"));
        self.verdicts.push((label, verdict.to_string()));
    }
}

fn panel(cfg: &ExperimentConfig) -> QueryPanel {
    QueryPanel::for_population(&cfg.population, cfg.market.n_q, cfg.market.query_panel_seed)
}

pub fn solve(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    let panel = panel(cfg);
    let mut outcome = Outcome::default();
    let mut summary = Vec::new();
    for (i, &t) in cfg.solve.types.iter().enumerate() {
        let user: UserType = t.into();
        let solver = Solver::new(TrueModel::new(cfg.market.clone(), user), panel.clone());
        let table = solver.value_iterate(cfg.solve.tol, gemon_core::dp::DEFAULT_MAX_ITER)?;
        out.write(&format!("type{i}_values.csv"), &value_csv(&table, ""))?;
        out.write(&format!("type{i}_edges.csv"), &edge_csv(solver.model(), &table, &panel, "")?)?;
        summary.push(vec![
            i.to_string(),
            fmt_f64(user.gamma),
            fmt_f64(user.theta),
            table.iterations.to_string(),
            fmt_f64(table.final_residual),
            fmt_f64(table.v_sub),
            fmt_f64(table.get(0, 0)),
        ]);
        outcome.lines.push(format!(
            "type {i} (gamma {}, theta {}): V(0,0) = {}, {} iterations",
            user.gamma,
            user.theta,
            fmt_f64(table.get(0, 0)),
            table.iterations
        ));
    }
    out.write(
        "types.csv",
        &csv_string(&["type", "gamma", "theta", "iterations", "residual", "v_sub", "value_0_0"], summary),
    )?;
    Ok(outcome)
}

fn trajectories_csv(runs: &[(u64, Trajectory)]) -> String {
    let mut header = vec!["seed"];
    header.extend(TRAJECTORY_HEADER);
    let rows = runs.iter().flat_map(|(seed, tr)| {
        tr.rows.iter().map(move |r| {
            vec![
                seed.to_string(),
                r.t.to_string(),
                fmt_f64(r.cum_payoff),
                r.active_users.to_string(),
                r.cum_subscribers.to_string(),
                fmt_opt(r.free_exposure_rate),
            ]
        })
    });
    csv_string(&header, rows)
}

const POLICY_SUMMARY_HEADER: [&str; 6] = [
    "policy",
    "payoff_mean",
    "payoff_std",
    "subscribers_mean",
    "subscribers_std",
    "free_share_mean",
];

fn simulate_policies(cfg: &ExperimentConfig, policies: &[PolicyKind], out: &mut Staging) -> Result<Outcome> {
    let results = run_policies(&cfg.sim_config(), policies)?;
    let mut outcome = Outcome::default();
    let mut summary = Vec::new();
    for (kind, runs) in &results {
        out.write(&format!("trajectory_{}.csv", kind.name()), &trajectories_csv(runs))?;
        let payoffs: Vec<f64> = runs.iter().map(|(_, t)| t.final_payoff).collect();
        let subs: Vec<f64> = runs.iter().map(|(_, t)| t.subscribers as f64).collect();
        let shares: Vec<f64> = runs.iter().filter_map(|(_, t)| t.free_share).collect();
        let (pm, ps) = gemon_core::sim::mean_std(&payoffs);
        let (sm, ss) = gemon_core::sim::mean_std(&subs);
        let share = (!shares.is_empty()).then(|| gemon_core::sim::mean_std(&shares).0);
        outcome
            .lines
            .push(format!("{:<14} payoff {} +- {}  subscribers {}", kind.name(), fmt_f64(pm), fmt_f64(ps), fmt_f64(sm)));
        summary.push(vec![
            kind.name().to_string(),
            fmt_f64(pm),
            fmt_f64(ps),
            fmt_f64(sm),
            fmt_f64(ss),
            fmt_opt(share),
        ]);
    }
    out.write("summary.csv", &csv_string(&POLICY_SUMMARY_HEADER, summary))?;
    Ok(outcome)
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    simulate_policies(cfg, &[cfg.policy()?], out)
}

pub fn compare(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    simulate_policies(cfg, &PolicyKind::ALL, out)
}

pub fn ablate(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    let res = run_ablation(&cfg.sim_config(), &cfg.conditions()?, &PolicyKind::ALL, &cfg.seeds)?;
    out.write("runs.csv", &res.runs_csv())?;
    out.write("summary.csv", &res.summary_csv())?;
    let mut outcome = Outcome::default();
    outcome.lines.push(format!("{} runs over {} conditions", res.runs.len(), res.summary.len()));
    Ok(outcome)
}

pub fn sweep(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    let param = cfg
        .sweep
        .param
        .as_deref()
        .ok_or_else(|| ValidationError::new("sweep.param", "required (config or --param)"))?;
    let grid = cfg
        .sweep
        .grid
        .clone()
        .ok_or_else(|| ValidationError::new("sweep.grid", "required (config or --grid)"))?;
    let spec = SweepSpec {
        param: param.parse()?,
        grid,
        anchor: cfg.sweep.anchor.into(),
        market: cfg.market.clone(),
        population: cfg.population.clone(),
    };
    let res = sweep_scalar(&spec)?;
    out.write(&format!("sweep_{}.csv", spec.param.name()), &res.to_csv())?;
    let mut outcome = Outcome::default();
    for p in &res.points {
        outcome
            .lines
            .push(format!("{} = {}: delta {}", spec.param.name(), fmt_f64(p.value), fmt_f64(p.delta)));
    }
    if let Some(why) = &res.precondition {
        outcome.lines.push(format!("precondition: {why}"));
    }
    outcome.verdict(format!("sweep {}", spec.param.name()), res.verdict.as_str());
    Ok(outcome)
}

const CUTOFF_HEADER: [&str; 12] = [
    "axis",
    "gamma",
    "theta",
    "s",
    "c",
    "r",
    "psi",
    "cutoff",
    "bracket_lo",
    "bracket_hi",
    "evaluations",
    "verdict",
];

pub fn cutoff(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    let c = &cfg.cutoff;
    let a = c.anchor;
    let anchor: gemon_core::statics::Anchor = a.into();
    let mut outcome = Outcome::default();
    let mut rows = Vec::new();
    for name in &c.axes {
        let axis: CutoffAxis = name.parse()?;
        let mut spec = CutoffSpec::new(axis, cfg.market.clone(), anchor.user, anchor.state, anchor.query);
        spec.population = cfg.population.clone();
        spec.prescan = c.prescan;
        spec.tol = c.tol;
        let (cutoff, bracket, evals, verdict) = match find_cutoff(&spec) {
            Ok(r) => (Some(r.cutoff), r.bracket, r.evaluations, "verified"),
            Err(StaticsError::NonMonotoneSign { pattern, .. }) => {
                outcome.lines.push(format!("{name}: non-monotone sign pattern {pattern}"));
                (None, None, spec.prescan, "violated")
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(x) = cutoff {
            outcome.lines.push(format!("{name}* = {}", fmt_f64(x)));
        }
        outcome.verdict(format!("cutoff {name}"), verdict);
        rows.push(vec![
            axis.name().to_string(),
            fmt_f64(a.gamma),
            fmt_f64(a.theta),
            a.s.to_string(),
            a.c.to_string(),
            fmt_f64(a.r),
            fmt_f64(a.psi),
            fmt_opt(cutoff),
            fmt_opt(bracket.map(|b| b.0)),
            fmt_opt(bracket.map(|b| b.1)),
            evals.to_string(),
            verdict.to_string(),
        ]);
    }
    out.write("cutoffs.csv", &csv_string(&CUTOFF_HEADER, rows))?;
    if let Some(plane) = &c.plane {
        let plane: Plane = plane.parse()?;
        let map = cutoff_map(&MapSpec {
            plane,
            resolution: c.resolution,
            market: cfg.market.clone(),
            population: cfg.population.clone(),
            user: anchor.user,
            state: anchor.state,
            query: anchor.query,
        })?;
        outcome
            .lines
            .push(format!("{} map: {} of {} cells show ads", plane.name(), map.ad_count(), map.cells.len()));
        out.write(&format!("map_{}.csv", plane.name()), &map.to_csv())?;
    }
    Ok(outcome)
}

const BOUNDS_HEADER: [&str; 20] = [
    "n_records",
    "gamma",
    "theta",
    "eps_m",
    "eps_r",
    "eps_rho",
    "b",
    "value_gap",
    "value_bound",
    "edge_gap",
    "edge_bound",
    "margin_points",
    "agreeing",
    "regret",
    "regret_bound",
    "value_ok",
    "edge_ok",
    "agreement_ok",
    "regret_ok",
    "verdict",
];

pub fn learn(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    let lc = LearnConfig {
        market: cfg.market.clone(),
        population: cfg.population.clone(),
        bins: cfg.binning(),
        eta: cfg.learning.eta,
        seed: cfg.learning.seed,
    };
    let mut outcome = Outcome::default();
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for &n in &cfg.learning.n_records {
        let (est, report) = run_learning(&lc, n)?;
        out.write(&format!("estimates_{n}.csv"), &est.to_csv())?;
        if cfg.learning.write_logs {
            let logs =
                generate_logs(&lc.market, &lc.population, lc.eta, n, lc.seed)?;
            out.write(&format!("logs_{n}.csv"), &logs_to_csv(&logs))?;
        }
        let e = report.errors;
        for r in &report.reports {
            let verdict = if r.passed() { "verified" } else { "violated" };
            rows.push(vec![
                n.to_string(),
                fmt_f64(r.user.gamma),
                fmt_f64(r.user.theta),
                fmt_f64(e.eps_m),
                fmt_f64(e.eps_r),
                fmt_f64(e.eps_rho),
                fmt_f64(r.b),
                fmt_f64(r.value_gap),
                fmt_f64(r.value_bound),
                fmt_f64(r.edge_gap),
                fmt_f64(r.edge_bound),
                r.margin_points.to_string(),
                r.agreeing.to_string(),
                fmt_f64(r.regret),
                fmt_f64(r.regret_bound),
                r.value_ok.to_string(),
                r.edge_ok.to_string(),
                r.agreement_ok.to_string(),
                r.regret_ok.to_string(),
                verdict.to_string(),
            ]);
            for w in &r.witnesses {
                outcome.lines.push(format!("n = {n}, gamma {}: {w}", r.user.gamma));
            }
        }
        if e.approximate {
            outcome
                .lines
                .push(format!("n = {n}: truth is not constant on the bins; estimation errors are approximate"));
        }
        outcome.lines.push(format!(
            "n = {n}: eps_m {} eps_r {} eps_rho {}, max value gap {}",
            fmt_f64(e.eps_m),
            fmt_f64(e.eps_r),
            fmt_f64(e.eps_rho),
            fmt_f64(report.value_gap())
        ));
        outcome.verdict(format!("bounds n={n}"), if report.passed() { "verified" } else { "violated" });
        gaps.push(report.value_gap());
    }
    out.write("bounds.csv", &csv_string(&BOUNDS_HEADER, rows))?;
    if gaps.windows(2).any(|w| w[1] > w[0]) {
        outcome.lines.push("value gap is not monotone in the record count".into());
    }
    Ok(outcome)
}

const ALIGNMENT_HEADER: [&str; 13] = [
    "gamma",
    "theta",
    "eps_sw",
    "value_gap_welfare",
    "value_bound_welfare",
    "edge_gap_welfare",
    "band_welfare",
    "points",
    "margin_points",
    "agreeing",
    "disagreements",
    "passed",
    "verdict",
];

const DISAGREEMENT_HEADER: [&str; 9] =
    ["gamma", "theta", "s", "c", "r", "psi", "delta", "delta_welfare", "outside_band"];

pub fn welfare(cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    let wp = cfg.welfare.params().resolve(&cfg.market)?;
    let panel = panel(cfg);
    let mut outcome = Outcome::default();
    outcome.lines.push(format!(
        "U_max {}, w_sub {}, eps_sw {} (welfare magnitudes depend on the chosen benefit and w_sub)",
        fmt_f64(wp.u_max),
        fmt_f64(wp.w_sub),
        fmt_f64(wp.eps_sw)
    ));
    let (mut align, mut dis) = (Vec::new(), Vec::new());
    for (i, &t) in cfg.welfare.types.iter().enumerate() {
        let user: UserType = t.into();
        let rev = Solver::new(TrueModel::new(cfg.market.clone(), user), panel.clone());
        let v = rev.value_iterate(cfg.solve.tol, gemon_core::dp::DEFAULT_MAX_ITER)?;
        let (wel, w) = welfare_solve(&cfg.market, &wp, user, &panel, cfg.solve.tol)?;
        out.write(&format!("type{i}_values_welfare.csv"), &value_csv(&w, "_welfare"))?;
        out.write(&format!("type{i}_edges_welfare.csv"), &edge_csv(wel.model(), &w, &panel, "_welfare")?)?;
        let rep = welfare_compare(&rev, &v, &wel, &w).context("comparing revenue and welfare solves")?;
        let verdict = if rep.passed() { "verified" } else { "violated" };
        align.push(vec![
            fmt_f64(user.gamma),
            fmt_f64(user.theta),
            fmt_f64(rep.eps_sw),
            fmt_f64(rep.value_gap),
            fmt_f64(rep.value_bound),
            fmt_f64(rep.edge_gap),
            fmt_f64(rep.band),
            rep.points.to_string(),
            rep.margin_points.to_string(),
            rep.agreeing.to_string(),
            rep.disagreements.len().to_string(),
            rep.passed().to_string(),
            verdict.to_string(),
        ]);
        for d in &rep.disagreements {
            dis.push(vec![
                fmt_f64(user.gamma),
                fmt_f64(user.theta),
                d.s.to_string(),
                d.c.to_string(),
                fmt_f64(d.r),
                fmt_f64(d.psi),
                fmt_f64(d.delta),
                fmt_f64(d.delta_sw),
                d.outside_band.to_string(),
            ]);
        }
        outcome.lines.push(format!(
            "type {i}: value gap {} <= {}, edge gap {} <= {}, {} of {} points disagree",
            fmt_f64(rep.value_gap),
            fmt_f64(rep.value_bound),
            fmt_f64(rep.edge_gap),
            fmt_f64(rep.band),
            rep.disagreements.len(),
            rep.points
        ));
        outcome.verdict(format!("welfare type {i}"), verdict);
    }
    out.write("alignment.csv", &csv_string(&ALIGNMENT_HEADER, align))?;
    out.write("disagreements.csv", &csv_string(&DISAGREEMENT_HEADER, dis))?;
    Ok(outcome)
}
