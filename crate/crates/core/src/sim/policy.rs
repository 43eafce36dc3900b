use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{edge_at, optimal_action, subscribed_value, QueryPanel, Solver, TrueModel, ValueTable};
use crate::error::{SimError, ValidationError};
use crate::model::{Action, QueryDraw, UserState, UserType};
use crate::params::MarketParams;
use crate::population::PopulationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OptimalDp,
    OneStepGreedy,
    AlwaysAd,
    AlwaysFree,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::OptimalDp,
        PolicyKind::OneStepGreedy,
        PolicyKind::AlwaysAd,
        PolicyKind::AlwaysFree,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::OptimalDp => "optimal_dp",
            PolicyKind::OneStepGreedy => "one_step_greedy",
            PolicyKind::AlwaysAd => "always_ad",
            PolicyKind::AlwaysFree => "always_free",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::Unknown {
                what: "policy",
                name: s.to_string(),
            })
    }
}

/// Uniform `n x n` grid over `(gamma, theta)` with nearest-point lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeBins {
    pub n_bins: u32,
}

impl TypeBins {
    pub fn new(n_bins: u32) -> Result<Self, ValidationError> {
        if n_bins == 0 {
            return Err(ValidationError::new("simulation.n_bins", "must be >= 1"));
        }
        Ok(Self { n_bins })
    }

    fn axis_index(&self, x: f64) -> u32 {
        if self.n_bins == 1 {
            return 0;
        }
        let steps = (self.n_bins - 1) as f64;
        (x.clamp(0.0, 1.0) * steps).round() as u32
    }

    fn axis_point(&self, i: u32) -> f64 {
        if self.n_bins == 1 {
            0.5
        } else {
            i as f64 / (self.n_bins - 1) as f64
        }
    }

    pub fn bin_of(&self, user: &UserType) -> (u32, u32) {
        (self.axis_index(user.gamma), self.axis_index(user.theta))
    }

    pub fn center(&self, bin: (u32, u32)) -> UserType {
        UserType {
            gamma: self.axis_point(bin.0),
            theta: self.axis_point(bin.1),
        }
    }
}

#[derive(Debug, Clone)]
struct BinPlan {
    model: TrueModel,
    table: ValueTable,
}

/// A display rule. Table-driven kinds hold one plan per occupied type bin.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    bins: TypeBins,
    plans: BTreeMap<(u32, u32), BinPlan>,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn bins(&self) -> TypeBins {
        self.bins
    }

    /// Occupied bins with a table, in bin order.
    pub fn solved_bins(&self) -> impl Iterator<Item = ((u32, u32), &ValueTable)> {
        self.plans.iter().map(|(b, p)| (*b, &p.table))
    }

    pub fn decide(&self, user: &UserType, state: &UserState, query: &QueryDraw) -> Result<Action, SimError> {
        match self.kind {
            PolicyKind::AlwaysAd => Ok(Action::Ad),
            PolicyKind::AlwaysFree => Ok(Action::Free),
            PolicyKind::OptimalDp | PolicyKind::OneStepGreedy => {
                let bin = self.bins.bin_of(user);
                let plan = self.plans.get(&bin).ok_or(SimError::MissingBin(bin.0, bin.1))?;
                let edge = edge_at(&plan.model, &plan.table, state, query)?;
                Ok(optimal_action(&edge))
            }
        }
    }
}

/// Build `kind` for a population whose realized types are `users`.
pub fn build_policy(
    kind: PolicyKind,
    market: &MarketParams,
    population: &PopulationSpec,
    n_bins: u32,
    users: &[UserType],
) -> Result<Policy, SimError> {
    let bins = TypeBins::new(n_bins)?;
    let mut occupied: Vec<(u32, u32)> = users.iter().map(|u| bins.bin_of(u)).collect();
    occupied.sort_unstable();
    occupied.dedup();

    let plans = match kind {
        PolicyKind::AlwaysAd | PolicyKind::AlwaysFree => BTreeMap::new(),
        PolicyKind::OneStepGreedy => {
            let v_sub = subscribed_value(market)?;
            occupied
                .into_iter()
                .map(|bin| {
                    let user = bins.center(bin);
                    let table = ValueTable::zeros(market.grid, v_sub, user);
                    let model = TrueModel::new(market.clone(), user);
                    (bin, BinPlan { model, table })
                })
                .collect()
        }
        PolicyKind::OptimalDp => {
            let panel = QueryPanel::for_population(population, market.n_q, market.query_panel_seed);
            let solved = occupied
                .par_iter()
                .map(|&bin| {
                    let model = TrueModel::new(market.clone(), bins.center(bin));
                    let solver = Solver::new(model.clone(), panel.clone());
                    solver.solve().map(|table| (bin, BinPlan { model, table }))
                })
                .collect::<Result<Vec<_>, _>>()?;
            solved.into_iter().collect()
        }
    };
    Ok(Policy { kind, bins, plans })
}
