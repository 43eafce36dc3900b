use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::region::{one_step_region, OneStepReport};
use super::{edge, main_text, solve_type, SLACK};
use crate::dp::QueryPanel;
use crate::error::{StaticsError, ValidationError};
use crate::io::fmt_f64;
use crate::model::{QueryDraw, UserState, UserType};
use crate::params::MarketParams;
use crate::population::PopulationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Omega,
    Beta,
    KappaFree,
    KappaPaid,
    Price,
    Gamma,
    Psi,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl SweepParam {
    pub const ALL: [SweepParam; 8] = [
        SweepParam::Omega,
        SweepParam::Beta,
        SweepParam::KappaFree,
        SweepParam::KappaPaid,
        SweepParam::Price,
        SweepParam::Gamma,
        SweepParam::Psi,
        SweepParam::R,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::Beta => "beta",
            SweepParam::KappaFree => "kappa_free",
            SweepParam::KappaPaid => "kappa_paid",
            SweepParam::Price => "price",
            SweepParam::Gamma => "gamma",
            SweepParam::Psi => "psi",
            SweepParam::R => "r",
        }
    }

    /// Direction the edge is expected to move as the parameter rises.
    pub fn direction(&self) -> Direction {
        match self {
            SweepParam::KappaPaid | SweepParam::R => Direction::Increasing,
            _ => Direction::Decreasing,
        }
    }

    pub fn needs_one_step_region(&self) -> bool {
        matches!(self, SweepParam::KappaFree | SweepParam::KappaPaid | SweepParam::Price)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                ValidationError::new(
                    "param",
                    "expected one of omega, beta, kappa_free, kappa_paid, price, gamma, psi, r",
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Violated,
    PreconditionUnmet,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Violated => "violated",
            Verdict::PreconditionUnmet => "precondition unmet",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fixed decision point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub user: UserType,
    pub state: UserState,
    pub query: QueryDraw,
}

impl Default for Anchor {
    fn default() -> Self {
        Self {
            user: UserType { gamma: 0.5, theta: 0.5 },
            state: UserState::pre(0, 0),
            query: QueryDraw { r: 0.5, psi: 0.5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub anchor: Anchor,
    pub market: MarketParams,
    /// Source of the query panel used by every solve.
    pub population: PopulationSpec,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.grid.len() < 2 {
            return Err(ValidationError::new("grid", "sweep grid needs at least two values"));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(ValidationError::new("grid", "sweep grid values must be finite"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ValidationError::new("grid", "sweep grid must be strictly increasing"));
        }
        if self.anchor.state.subscribed {
            return Err(ValidationError::new("anchor.state", "anchor must be pre-subscription"));
        }
        if matches!(self.param, SweepParam::Gamma | SweepParam::Psi | SweepParam::R)
            && self.grid.iter().any(|x| !(0.0..=1.0).contains(x))
        {
            return Err(ValidationError::new("grid", "type and query values must lie in [0, 1]"));
        }
        self.population.validate()
    }

    fn at(&self, x: f64) -> (MarketParams, Anchor) {
        let mut m = self.market.clone();
        let mut a = self.anchor;
        match self.param {
            SweepParam::Omega => m.omega = x,
            SweepParam::Beta => m.beta = x,
            SweepParam::KappaFree => m.kappa_free = x,
            SweepParam::KappaPaid => m.kappa_paid = x,
            SweepParam::Price => m.price = x,
            SweepParam::Gamma => a.user.gamma = x,
            SweepParam::Psi => a.query.psi = x,
            SweepParam::R => a.query.r = x,
        }
        (m, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub delta: f64,
    pub short: f64,
    pub long: f64,
    /// Continuation advantage of Free, `-long / beta`.
    pub phi: f64,
    pub one_step: Option<OneStepReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub direction: Direction,
    pub points: Vec<SweepPoint>,
    /// Whether the edge moved in the expected direction within `SLACK`.
    pub monotone: bool,
    /// Index `i` of the first step `i -> i + 1` that moved the wrong way.
    pub witness: Option<usize>,
    /// Why the sweep's checkable assumption failed, if it did.
    pub precondition: Option<String>,
    pub verdict: Verdict,
}

pub const SWEEP_HEADER: [&str; 5] = ["parameter_value", "delta", "short", "long", "verdict"];

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let rows = self.points.iter().map(|p| {
            vec![
                fmt_f64(p.value),
                fmt_f64(p.delta),
                fmt_f64(p.short),
                fmt_f64(p.long),
                self.verdict.as_str().to_string(),
            ]
        });
        crate::io::csv_string(&SWEEP_HEADER, rows)
    }
}

fn first_wrong_step(values: &[f64], direction: Direction) -> Option<usize> {
    values.windows(2).position(|w| match direction {
        Direction::Decreasing => w[1] > w[0] + SLACK,
        Direction::Increasing => w[1] < w[0] - SLACK,
    })
}

/// Re-solve the DP at every grid value and judge the edge's direction.
///
/// Verdicts: a monotone edge is "verified". A wrong-way step is "violated"
/// unless the sweep's checkable assumption fails along the grid, in
/// which case it is "precondition unmet". Cost and price sweeps instead
/// reject anchors outside the one-step conversion region.
pub fn sweep_scalar(spec: &SweepSpec) -> Result<SweepResult, StaticsError> {
    spec.validate()?;
    let fixed_panel = QueryPanel::for_population(&spec.population, spec.market.n_q, spec.market.query_panel_seed);

    let points = spec
        .grid
        .par_iter()
        .map(|&x| {
            let (m, a) = spec.at(x);
            let m = main_text(&m)?;
            let one_step = if spec.param.needs_one_step_region() {
                let rep = one_step_region(&m, &a.user, &a.state, &a.query);
                if let Some(why) = &rep.diagnostic {
                    return Err(StaticsError::Precondition {
                        param: spec.param.name().into(),
                        reason: format!("anchor outside the one-step region at {} = {x}: {why}", spec.param),
                    });
                }
                Some(rep)
            } else {
                None
            };
            let panel = if m.n_q == spec.market.n_q && m.query_panel_seed == spec.market.query_panel_seed {
                fixed_panel.clone()
            } else {
                QueryPanel::for_population(&spec.population, m.n_q, m.query_panel_seed)
            };
            let (model, table) = solve_type(&m, &panel, a.user)?;
            let e = edge(&model, &table, &a.state, &a.query)?;
            Ok(SweepPoint {
                value: x,
                delta: e.delta,
                short: e.short_term,
                long: e.long_term,
                phi: -e.long_term / m.beta,
                one_step,
            })
        })
        .collect::<Result<Vec<_>, StaticsError>>()?;

    let direction = spec.param.direction();
    let deltas: Vec<f64> = points.iter().map(|p| p.delta).collect();
    let witness = first_wrong_step(&deltas, direction);
    let phis: Vec<f64> = points.iter().map(|p| p.phi).collect();
    let precondition = match spec.param {
        SweepParam::Beta => {
            if let Some(p) = points.iter().find(|p| p.phi < -SLACK) {
                Some(format!(
                    "continuation advantage of Free is negative at beta = {} ({})",
                    p.value, p.phi
                ))
            } else {
                first_wrong_step(&phis, Direction::Increasing).map(|i| {
                    format!(
                        "continuation advantage of Free falls from {} to {} between beta = {} and {}",
                        phis[i],
                        phis[i + 1],
                        points[i].value,
                        points[i + 1].value
                    )
                })
            }
        }
        SweepParam::Omega => first_wrong_step(&phis, Direction::Increasing).map(|i| {
            format!(
                "continuation advantage of Free falls from {} to {} between omega = {} and {}",
                phis[i],
                phis[i + 1],
                points[i].value,
                points[i + 1].value
            )
        }),
        _ => None,
    };
    let verdict = match (witness, &precondition) {
        (None, _) => Verdict::Verified,
        (Some(_), Some(_)) => Verdict::PreconditionUnmet,
        (Some(_), None) => Verdict::Violated,
    };
    Ok(SweepResult {
        param: spec.param,
        direction,
        monotone: witness.is_none(),
        points,
        witness,
        precondition,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statics::engagement_boost;

    fn spec(param: SweepParam, grid: Vec<f64>) -> SweepSpec {
        let mut market = MarketParams::baseline();
        market.grid.s_max = 8;
        market.grid.c_max = 8;
        market.n_q = 12;
        SweepSpec {
            param,
            grid,
            anchor: Anchor::default(),
            market,
            population: PopulationSpec::default(),
        }
    }

    #[test]
    fn wrong_way_step_detection() {
        assert_eq!(first_wrong_step(&[3.0, 2.0, 2.0 + 1e-7], Direction::Decreasing), None);
        assert_eq!(first_wrong_step(&[3.0, 2.0, 2.1], Direction::Decreasing), Some(1));
        assert_eq!(first_wrong_step(&[1.0, 0.5], Direction::Increasing), Some(0));
    }

    #[test]
    fn unsorted_grid_rejected() {
        let s = spec(SweepParam::Omega, vec![0.5, 0.2]);
        assert!(matches!(sweep_scalar(&s), Err(StaticsError::Invalid(_))));
        let s = spec(SweepParam::Omega, vec![0.5]);
        assert!(sweep_scalar(&s).is_err());
    }

    #[test]
    fn kappa_sweep_outside_region_rejected() {
        let s = spec(SweepParam::KappaFree, vec![0.5, 0.9]);
        match sweep_scalar(&s) {
            Err(StaticsError::Precondition { param, reason }) => {
                assert_eq!(param, "kappa_free");
                assert!(reason.contains("one-step region"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kappa_paid_raises_edge_in_region() {
        let mut s = spec(SweepParam::KappaPaid, vec![0.9, 1.2, 1.5, 1.8]);
        // tau = 3 + 1 - 1 = 3 at theta = 0.5, c = 0; s = 2 converts with psi >= cut.
        s.anchor.state = UserState::pre(2, 0);
        s.anchor.query = QueryDraw { r: 0.5, psi: 0.8 };
        s.market = engagement_boost(&s.market, &s.anchor.query).unwrap().0;
        let r = sweep_scalar(&s).unwrap();
        assert_eq!(r.verdict, Verdict::Verified, "{r:?}");
        assert!(r.points.iter().all(|p| p.one_step.as_ref().unwrap().in_region));
        assert!(r.points.last().unwrap().delta > r.points[0].delta);
    }

    #[test]
    fn csv_has_one_row_per_grid_value() {
        let r = sweep_scalar(&spec(SweepParam::Omega, vec![0.0, 0.2, 0.5])).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "parameter_value,delta,short,long,verdict");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn param_names_round_trip() {
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert!("eta".parse::<SweepParam>().is_err());
    }
}
