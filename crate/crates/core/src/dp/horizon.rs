use serde::Serialize;

use super::{edge_at, optimal_action, DecisionModel, Solver, ValueTable};
use crate::error::{SolveError, ValidationError};
use crate::model::{QueryDraw, UserState};

/// A decision point where a finite-horizon bound failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonWitness {
    pub s: u32,
    pub c: u32,
    pub r: f64,
    pub psi: f64,
    pub delta_inf: f64,
    pub delta_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonEntry {
    pub horizon: usize,
    /// `||V_inf - V^(T)||`.
    pub value_gap: f64,
    /// `R_max beta^T / (1 - beta)`.
    pub value_bound: f64,
    /// Largest `|Delta_inf - Delta_T|` over the sampled points.
    pub edge_gap: f64,
    /// `2 beta R_max beta^(T-1) / (1 - beta)`; also the indifference band.
    pub band: f64,
    /// Points with `|Delta_inf| > band`.
    pub margin_points: usize,
    pub agreeing: usize,
    /// True when no sampled point clears the band.
    pub vacuous: bool,
    pub violations: Vec<HorizonWitness>,
}

impl HorizonEntry {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
            && self.value_gap <= self.value_bound + SLACK
            && self.edge_gap <= self.band + SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonReport {
    pub r_max: f64,
    pub beta: f64,
    pub entries: Vec<HorizonEntry>,
}

impl HorizonReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(HorizonEntry::passed)
    }
}

/// Absorbs the reference solve's own error (at most `tol * beta / (1 - beta)`).
const SLACK: f64 = 1e-8;

/// Compare `T`-horizon values and decisions against a converged reference.
pub fn horizon_bound_check<M: DecisionModel>(
    solver: &Solver<M>,
    reference: &ValueTable,
    horizons: &[usize],
    points: &[(UserState, QueryDraw)],
) -> Result<HorizonReport, SolveError> {
    if reference.final_residual > 1e-10 {
        return Err(ValidationError::new(
            "reference",
            "reference value table must be converged to a residual <= 1e-10",
        )
        .into());
    }
    let beta = solver.beta();
    let r_max = solver.r_max();
    let model = solver.model();
    let inf_edges = points
        .iter()
        .map(|(st, q)| edge_at(model, reference, st, q))
        .collect::<Result<Vec<_>, _>>()?;

    let mut entries = Vec::with_capacity(horizons.len());
    for &t in horizons {
        if t == 0 {
            return Err(ValidationError::new("horizons", "each horizon must be >= 1").into());
        }
        let v_t = solver.iterate_n(t);
        let v_prev = solver.iterate_n(t - 1);
        let value_gap = reference.sup_distance(&v_t);
        let value_bound = r_max * beta.powi(t as i32) / (1.0 - beta);
        let band = 2.0 * beta * r_max * beta.powi(t as i32 - 1) / (1.0 - beta);

        let mut edge_gap = 0.0f64;
        let mut margin_points = 0;
        let mut agreeing = 0;
        let mut violations = Vec::new();
        for ((st, q), e_inf) in points.iter().zip(&inf_edges) {
            let e_t = edge_at(model, &v_prev, st, q)?;
            let gap = (e_inf.delta - e_t.delta).abs();
            edge_gap = edge_gap.max(gap);
            let witness = HorizonWitness {
                s: st.s,
                c: st.c,
                r: q.r,
                psi: q.psi,
                delta_inf: e_inf.delta,
                delta_t: e_t.delta,
            };
            if gap > band + SLACK {
                violations.push(witness);
            }
            if e_inf.delta.abs() > band + SLACK {
                margin_points += 1;
                if optimal_action(e_inf) == optimal_action(&e_t) {
                    agreeing += 1;
                } else {
                    violations.push(witness);
                }
            }
        }
        entries.push(HorizonEntry {
            horizon: t,
            value_gap,
            value_bound,
            edge_gap,
            band,
            margin_points,
            agreeing,
            vacuous: margin_points == 0,
            violations,
        });
    }
    Ok(HorizonReport {
        r_max,
        beta,
        entries,
    })
}
