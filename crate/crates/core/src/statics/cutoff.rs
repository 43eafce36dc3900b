use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{edge, main_text, solve_type};
use crate::dp::QueryPanel;
use crate::error::{StaticsError, ValidationError};
use crate::io::fmt_f64;
use crate::model::{Action, QueryDraw, UserState, UserType};
use crate::params::MarketParams;
use crate::population::PopulationSpec;

/// Type dimensions a cutoff can be searched along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffAxis {
    Gamma,
    Psi,
    R,
}

impl CutoffAxis {
    pub fn name(&self) -> &'static str {
        match self {
            CutoffAxis::Gamma => "gamma",
            CutoffAxis::Psi => "psi",
            CutoffAxis::R => "r",
        }
    }

    /// True when Ad sits below the cutoff (Ad iff x <= x*); false for r,
    /// where Ad sits above it.
    pub fn ad_below(&self) -> bool {
        !matches!(self, CutoffAxis::R)
    }
}

impl fmt::Display for CutoffAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CutoffAxis {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(CutoffAxis::Gamma),
            "psi" => Ok(CutoffAxis::Psi),
            "r" => Ok(CutoffAxis::R),
            _ => Err(ValidationError::new("axis", "expected one of gamma, psi, r")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSpec {
    pub axis: CutoffAxis,
    pub market: MarketParams,
    pub population: PopulationSpec,
    /// The coordinate along `axis` is overwritten during the search.
    pub user: UserType,
    pub state: UserState,
    pub query: QueryDraw,
    pub lo: f64,
    pub hi: f64,
    pub prescan: usize,
    /// Bisection stops once the bracket is at most this wide.
    pub tol: f64,
}

impl CutoffSpec {
    pub fn new(axis: CutoffAxis, market: MarketParams, user: UserType, state: UserState, query: QueryDraw) -> Self {
        Self {
            axis,
            market,
            population: PopulationSpec::default(),
            user,
            state,
            query,
            lo: 0.0,
            hi: 1.0,
            prescan: 21,
            tol: 1e-3,
        }
    }

    fn validate(&self) -> Result<(), ValidationError> {
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(ValidationError::new("interval", "need 0 <= lo < hi <= 1"));
        }
        if self.prescan < 2 {
            return Err(ValidationError::new("prescan", "pre-scan needs at least two points"));
        }
        if !(self.tol > 0.0) {
            return Err(ValidationError::new("tol", "bisection tolerance must be > 0"));
        }
        if self.state.subscribed {
            return Err(ValidationError::new("state", "state must be pre-subscription"));
        }
        self.population.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffResult {
    pub axis: CutoffAxis,
    /// Midpoint of the final bracket, or an infinite sentinel when the sign
    /// never changes on the interval.
    pub cutoff: f64,
    /// Final sign-change interval; `None` with a sentinel.
    pub bracket: Option<(f64, f64)>,
    pub evaluations: usize,
    /// Pre-scan points as `(x, delta)`.
    pub prescan: Vec<(f64, f64)>,
}

/// Evaluates the edge at a moving coordinate. Query axes share one solve;
/// the gamma axis re-solves per probe.
struct Probe<'a> {
    spec: &'a CutoffSpec,
    market: MarketParams,
    panel: QueryPanel,
    fixed: Option<(crate::dp::TrueModel, crate::dp::ValueTable)>,
}

impl<'a> Probe<'a> {
    fn new(spec: &'a CutoffSpec) -> Result<Self, StaticsError> {
        let market = main_text(&spec.market)?;
        let panel = QueryPanel::for_population(&spec.population, market.n_q, market.query_panel_seed);
        let fixed = match spec.axis {
            CutoffAxis::Gamma => None,
            _ => Some(solve_type(&market, &panel, spec.user)?),
        };
        Ok(Self {
            spec,
            market,
            panel,
            fixed,
        })
    }

    fn delta(&self, x: f64) -> Result<f64, StaticsError> {
        let mut q = self.spec.query;
        match self.spec.axis {
            CutoffAxis::Gamma => {
                let user = UserType {
                    gamma: x,
                    ..self.spec.user
                };
                let (m, t) = solve_type(&self.market, &self.panel, user)?;
                return Ok(edge(&m, &t, &self.spec.state, &q)?.delta);
            }
            CutoffAxis::Psi => q.psi = x,
            CutoffAxis::R => q.r = x,
        }
        let (m, t) = self.fixed.as_ref().expect("query axes solve up front");
        Ok(edge(m, t, &self.spec.state, &q)?.delta)
    }
}

fn is_ad(delta: f64) -> bool {
    delta >= 0.0
}

/// Search for the type cutoff along one axis: a coarse pre-scan whose sign
/// pattern must match the expected one, then bisection of the sign change.
pub fn find_cutoff(spec: &CutoffSpec) -> Result<CutoffResult, StaticsError> {
    spec.validate()?;
    let probe = Probe::new(spec)?;
    let n = spec.prescan;
    let xs: Vec<f64> = (0..n)
        .map(|i| spec.lo + (spec.hi - spec.lo) * i as f64 / (n - 1) as f64)
        .collect();
    let deltas = xs
        .par_iter()
        .map(|&x| probe.delta(x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut evaluations = n;

    // "left" is the action expected at the low end of the axis.
    let left_is_ad = spec.axis.ad_below();
    let on_left: Vec<bool> = deltas.iter().map(|&d| is_ad(d) == left_is_ad).collect();
    if on_left.windows(2).any(|w| !w[0] && w[1]) {
        let pattern = xs
            .iter()
            .zip(&deltas)
            .map(|(x, d)| format!("{}:{}", fmt_f64(*x), if is_ad(*d) { "ad" } else { "free" }))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(StaticsError::NonMonotoneSign {
            axis: spec.axis.name().into(),
            pattern,
        });
    }
    let prescan: Vec<(f64, f64)> = xs.iter().copied().zip(deltas.iter().copied()).collect();
    let n_left = on_left.iter().filter(|&&b| b).count();
    if n_left == n || n_left == 0 {
        // No crossing: the cutoff lies beyond whichever end the sign favours.
        let all_ad = is_ad(deltas[0]);
        let plus = all_ad == left_is_ad;
        return Ok(CutoffResult {
            axis: spec.axis,
            cutoff: if plus { f64::INFINITY } else { f64::NEG_INFINITY },
            bracket: None,
            evaluations,
            prescan,
        });
    }
    let (mut a, mut b) = (xs[n_left - 1], xs[n_left]);
    while b - a > spec.tol {
        let m = 0.5 * (a + b);
        evaluations += 1;
        if is_ad(probe.delta(m)?) == left_is_ad {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(CutoffResult {
        axis: spec.axis,
        cutoff: 0.5 * (a + b),
        bracket: Some((a, b)),
        evaluations,
        prescan,
    })
}

pub const MAX_MAP_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    GammaPsi,
    GammaR,
}

impl Plane {
    pub fn name(&self) -> &'static str {
        match self {
            Plane::GammaPsi => "gamma_psi",
            Plane::GammaR => "gamma_r",
        }
    }
}

impl FromStr for Plane {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma_psi" => Ok(Plane::GammaPsi),
            "gamma_r" => Ok(Plane::GammaR),
            _ => Err(ValidationError::new("plane", "expected gamma_psi or gamma_r")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub plane: Plane,
    pub resolution: usize,
    pub market: MarketParams,
    pub population: PopulationSpec,
    /// Theta is held here; gamma varies along axis 1.
    pub user: UserType,
    pub state: UserState,
    /// The query coordinate not on the plane is taken from here.
    pub query: QueryDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapCell {
    pub axis1: f64,
    pub axis2: f64,
    pub delta: f64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffMap {
    pub plane: Plane,
    pub resolution: usize,
    /// Row-major over axis 1 (gamma), then axis 2.
    pub cells: Vec<MapCell>,
}

pub const MAP_HEADER: [&str; 3] = ["axis1", "axis2", "action"];

impl CutoffMap {
    pub fn cell(&self, i: usize, j: usize) -> &MapCell {
        &self.cells[i * self.resolution + j]
    }

    pub fn ad_count(&self) -> usize {
        self.cells.iter().filter(|c| c.action == Action::Ad).count()
    }

    /// First `(i, j)` where Free at gamma index `i` turns back into Ad at
    /// `i + 1`; `None` when the Free region expands with gamma in every column.
    pub fn gamma_order_violation(&self) -> Option<(usize, usize)> {
        let n = self.resolution;
        (0..n).find_map(|j| {
            (0..n - 1)
                .find(|&i| self.cell(i, j).action == Action::Free && self.cell(i + 1, j).action == Action::Ad)
                .map(|i| (i, j))
        })
    }

    /// Cells that are Ad in `other` but not in `self`. Empty when `other`'s
    /// Ad region is contained in ours.
    pub fn ad_cells_gained(&self, other: &CutoffMap) -> Vec<(usize, usize)> {
        assert_eq!(self.resolution, other.resolution, "maps must share a resolution");
        let n = self.resolution;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if other.cell(i, j).action == Action::Ad && self.cell(i, j).action != Action::Ad {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let rows = self
            .cells
            .iter()
            .map(|c| vec![fmt_f64(c.axis1), fmt_f64(c.axis2), c.action.as_str().to_string()]);
        crate::io::csv_string(&MAP_HEADER, rows)
    }
}

/// Optimal action on a `resolution x resolution` grid of cell centres.
pub fn cutoff_map(spec: &MapSpec) -> Result<CutoffMap, StaticsError> {
    let n = spec.resolution;
    if n == 0 || n > MAX_MAP_RESOLUTION {
        return Err(ValidationError::new("resolution", "resolution must be in 1..=64").into());
    }
    if spec.state.subscribed {
        return Err(ValidationError::new("state", "state must be pre-subscription").into());
    }
    spec.population.validate()?;
    let market = main_text(&spec.market)?;
    let panel = QueryPanel::for_population(&spec.population, market.n_q, market.query_panel_seed);
    let centre = |i: usize| (i as f64 + 0.5) / n as f64;

    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let user = UserType {
                gamma: centre(i),
                ..spec.user
            };
            let (m, t) = solve_type(&market, &panel, user)?;
            (0..n)
                .map(|j| {
                    let mut q = spec.query;
                    match spec.plane {
                        Plane::GammaPsi => q.psi = centre(j),
                        Plane::GammaR => q.r = centre(j),
                    }
                    let e = edge(&m, &t, &spec.state, &q)?;
                    Ok(MapCell {
                        axis1: user.gamma,
                        axis2: centre(j),
                        delta: e.delta,
                        action: crate::dp::optimal_action(&e),
                    })
                })
                .collect::<Result<Vec<_>, StaticsError>>()
        })
        .collect::<Result<Vec<_>, StaticsError>>()?;
    Ok(CutoffMap {
        plane: spec.plane,
        resolution: n,
        cells: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MarketParams {
        let mut m = MarketParams::baseline();
        m.grid.s_max = 8;
        m.grid.c_max = 8;
        m.n_q = 12;
        m
    }

    fn spec(axis: CutoffAxis) -> CutoffSpec {
        CutoffSpec::new(
            axis,
            small(),
            UserType { gamma: 0.5, theta: 0.5 },
            UserState::pre(0, 0),
            QueryDraw { r: 0.5, psi: 0.5 },
        )
    }

    #[test]
    fn huge_revenue_gives_plus_infinity_on_gamma() {
        let mut s = spec(CutoffAxis::Gamma);
        s.market.revenue.b0 = 50.0;
        let r = find_cutoff(&s).unwrap();
        assert_eq!(r.cutoff, f64::INFINITY);
        assert!(r.bracket.is_none());
        assert!(r.prescan.iter().all(|(_, d)| *d > 0.0));
    }

    #[test]
    fn zero_revenue_pushes_r_cutoff_to_plus_infinity() {
        // Ad never pays, so Free everywhere; for r that means r* = +inf.
        let mut s = spec(CutoffAxis::R);
        s.market.revenue = crate::params::RevenueCoeffs {
            b0: 0.0,
            b_r: 0.0,
            b_c: 0.0,
            b_s: 0.0,
        };
        assert_eq!(find_cutoff(&s).unwrap().cutoff, f64::INFINITY);
    }

    #[test]
    fn bisection_brackets_sign_change() {
        let r = find_cutoff(&spec(CutoffAxis::R)).unwrap();
        if let Some((a, b)) = r.bracket {
            assert!(b - a <= 1e-3);
            assert!(r.cutoff > a && r.cutoff < b);
            assert!(r.evaluations > 21);
        }
    }

    #[test]
    fn invalid_interval_rejected() {
        let mut s = spec(CutoffAxis::Psi);
        s.lo = 0.7;
        s.hi = 0.2;
        assert!(matches!(find_cutoff(&s), Err(StaticsError::Invalid(_))));
    }

    #[test]
    fn zero_revenue_map_is_all_free() {
        let mut m = small();
        m.revenue = crate::params::RevenueCoeffs {
            b0: 0.0,
            b_r: 0.0,
            b_c: 0.0,
            b_s: 0.0,
        };
        let map = cutoff_map(&MapSpec {
            plane: Plane::GammaPsi,
            resolution: 6,
            market: m,
            population: PopulationSpec::default(),
            user: UserType { gamma: 0.5, theta: 0.5 },
            state: UserState::pre(0, 0),
            query: QueryDraw { r: 0.5, psi: 0.5 },
        })
        .unwrap();
        assert_eq!(map.ad_count(), 0);
        assert_eq!(map.cells.len(), 36);
        assert!(map.to_csv().starts_with("axis1,axis2,action\n"));
    }

    #[test]
    fn resolution_capped() {
        let spec = MapSpec {
            plane: Plane::GammaR,
            resolution: 65,
            market: small(),
            population: PopulationSpec::default(),
            user: UserType { gamma: 0.5, theta: 0.5 },
            state: UserState::pre(0, 0),
            query: QueryDraw { r: 0.5, psi: 0.5 },
        };
        assert!(cutoff_map(&spec).is_err());
    }
}
