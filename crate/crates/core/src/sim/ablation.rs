use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::cohort::{simulate_run, SimConfig};
use super::metrics::{compute_metrics, Trajectory};
use super::policy::{build_policy, PolicyKind};
use crate::error::SimError;
use crate::io::{csv_string, fmt_f64, fmt_opt};
use crate::population::UnitDist;

/// One-at-a-time departures from the baseline market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    GammaHigh,
    GammaLow,
    RHigh,
    RLow,
    KappaHigh,
    KappaLow,
    OmegaHigh,
    OmegaLow,
}

impl Condition {
    pub const ALL: [Condition; 8] = [
        Condition::GammaHigh,
        Condition::GammaLow,
        Condition::RHigh,
        Condition::RLow,
        Condition::KappaHigh,
        Condition::KappaLow,
        Condition::OmegaHigh,
        Condition::OmegaLow,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::GammaHigh => "gamma_high",
            Condition::GammaLow => "gamma_low",
            Condition::RHigh => "r_high",
            Condition::RLow => "r_low",
            Condition::KappaHigh => "kappa_high",
            Condition::KappaLow => "kappa_low",
            Condition::OmegaHigh => "omega_high",
            Condition::OmegaLow => "omega_low",
        }
    }

    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        let high = UnitDist::Beta { a: 5.0, b: 2.0 };
        let low = UnitDist::Beta { a: 2.0, b: 5.0 };
        match self {
            Condition::GammaHigh => cfg.population.gamma = high,
            Condition::GammaLow => cfg.population.gamma = low,
            Condition::RHigh => cfg.population.r = high,
            Condition::RLow => cfg.population.r = low,
            Condition::KappaHigh => cfg.market.kappa_free = 1.3,
            Condition::KappaLow => cfg.market.kappa_free = 0.5,
            Condition::OmegaHigh => cfg.market.omega = 0.5,
            Condition::OmegaLow => cfg.market.omega = 0.2,
        }
        cfg
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SimError::Unknown {
                what: "condition",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub condition: Condition,
    pub policy: PolicyKind,
    pub seed: u64,
    pub final_payoff: f64,
    pub free_share: Option<f64>,
    pub subscribers: u32,
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyStats {
    pub payoff_mean: f64,
    pub payoff_std: f64,
    pub free_share_mean: Option<f64>,
    pub subscribers_mean: f64,
    pub subscribers_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub condition: Condition,
    pub policies: BTreeMap<PolicyKind, PolicyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

pub const RUN_HEADER: [&str; 6] = ["condition", "policy", "seed", "final_payoff", "free_share", "subscribers"];

pub const SUMMARY_HEADER: [&str; 16] = [
    "condition",
    "optimal_dp_mean",
    "optimal_dp_std",
    "greedy_mean",
    "greedy_std",
    "always_ad_mean",
    "always_ad_std",
    "always_free_mean",
    "always_free_std",
    "dp_free_share",
    "subs_dp_mean",
    "subs_dp_std",
    "subs_free_mean",
    "subs_free_std",
    "subs_ad_mean",
    "subs_ad_std",
];

impl AblationResult {
    pub fn runs_csv(&self) -> String {
        csv_string(
            &RUN_HEADER,
            self.runs.iter().map(|r| {
                vec![
                    r.condition.to_string(),
                    r.policy.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.final_payoff),
                    fmt_opt(r.free_share),
                    r.subscribers.to_string(),
                ]
            }),
        )
    }

    /// One row per condition; columns for absent policies stay empty.
    pub fn summary_csv(&self) -> String {
        csv_string(
            &SUMMARY_HEADER,
            self.summary.iter().map(|row| {
                let get = |k: PolicyKind| row.policies.get(&k);
                let payoff = |k| {
                    get(k).map_or([String::new(), String::new()], |s: &PolicyStats| {
                        [fmt_f64(s.payoff_mean), fmt_f64(s.payoff_std)]
                    })
                };
                let subs = |k| {
                    get(k).map_or([String::new(), String::new()], |s: &PolicyStats| {
                        [fmt_f64(s.subscribers_mean), fmt_f64(s.subscribers_std)]
                    })
                };
                let mut out = vec![row.condition.to_string()];
                for k in PolicyKind::ALL {
                    out.extend(payoff(k));
                }
                out.push(fmt_opt(get(PolicyKind::OptimalDp).and_then(|s| s.free_share_mean)));
                for k in [PolicyKind::OptimalDp, PolicyKind::AlwaysFree, PolicyKind::AlwaysAd] {
                    out.extend(subs(k));
                }
                out
            }),
        )
    }
}

/// Run every policy under `config`, one trajectory per seed in seed order.
pub fn run_policies(
    config: &SimConfig,
    policies: &[PolicyKind],
) -> Result<Vec<(PolicyKind, Vec<(u64, Trajectory)>)>, SimError> {
    config.validate()?;
    let users = config.all_user_types();
    policies
        .iter()
        .map(|&kind| {
            let policy = build_policy(kind, &config.market, &config.population, config.n_bins, &users)?;
            let runs = config
                .seeds
                .par_iter()
                .map(|&seed| {
                    let log = simulate_run(config, &policy, seed)?;
                    Ok((seed, compute_metrics(&log)?))
                })
                .collect::<Result<Vec<_>, SimError>>()?;
            Ok((kind, runs))
        })
        .collect()
}

fn summarize(condition: Condition, records: &[RunRecord]) -> SummaryRow {
    let mut policies = BTreeMap::new();
    for kind in PolicyKind::ALL {
        let mine: Vec<&RunRecord> = records.iter().filter(|r| r.policy == kind).collect();
        if mine.is_empty() {
            continue;
        }
        let payoffs: Vec<f64> = mine.iter().map(|r| r.final_payoff).collect();
        let subs: Vec<f64> = mine.iter().map(|r| r.subscribers as f64).collect();
        let shares: Vec<f64> = mine.iter().filter_map(|r| r.free_share).collect();
        let (payoff_mean, payoff_std) = mean_std(&payoffs);
        let (subscribers_mean, subscribers_std) = mean_std(&subs);
        policies.insert(
            kind,
            PolicyStats {
                payoff_mean,
                payoff_std,
                free_share_mean: (!shares.is_empty()).then(|| mean_std(&shares).0),
                subscribers_mean,
                subscribers_std,
            },
        );
    }
    SummaryRow { condition, policies }
}

/// Conditions x policies x seeds, with the base config's seeds replaced by
/// `seeds`.
pub fn run_ablation(
    base: &SimConfig,
    conditions: &[Condition],
    policies: &[PolicyKind],
    seeds: &[u64],
) -> Result<AblationResult, SimError> {
    let mut base = base.clone();
    base.seeds = seeds.to_vec();
    let per_condition = conditions
        .par_iter()
        .map(|&cond| {
            let cfg = cond.apply(&base);
            let results = run_policies(&cfg, policies)?;
            let records: Vec<RunRecord> = results
                .into_iter()
                .flat_map(|(kind, runs)| {
                    runs.into_iter().map(move |(seed, tr)| RunRecord {
                        condition: cond,
                        policy: kind,
                        seed,
                        final_payoff: tr.final_payoff,
                        free_share: tr.free_share,
                        subscribers: tr.subscribers,
                    })
                })
                .collect();
            Ok((summarize(cond, &records), records))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let (summary, runs): (Vec<_>, Vec<_>) = per_condition.into_iter().unzip();
    Ok(AblationResult {
        runs: runs.into_iter().flatten().collect(),
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn condition_names() {
        for c in Condition::ALL {
            assert_eq!(c.name().parse::<Condition>().unwrap(), c);
        }
        assert!(matches!("kappa_mid".parse::<Condition>(), Err(SimError::Unknown { .. })));
    }
}
