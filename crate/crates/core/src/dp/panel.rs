use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::model::QueryDraw;
use crate::population::PopulationSpec;
use crate::rng::Purpose;

/// The query distribution the Bellman operator integrates against: a fixed
/// list of query draws with weights summing to one.
///
/// A Monte Carlo panel is drawn once from a fixed seed and reused across all
/// iterations, so the operator is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPanel {
    queries: Vec<QueryDraw>,
    weights: Vec<f64>,
}

impl QueryPanel {
    pub fn monte_carlo(population: &PopulationSpec, n_q: usize, seed: u64) -> Self {
        let queries: Vec<QueryDraw> = (0..n_q as u64)
            .map(|k| population.sample_query_with(seed, 0, k, Purpose::PanelR, Purpose::PanelPsi))
            .collect();
        let w = 1.0 / n_q as f64;
        Self {
            weights: vec![w; queries.len()],
            queries,
        }
    }

    /// Exact product support when both query marginals are finite.
    pub fn exact(population: &PopulationSpec) -> Option<Self> {
        let rs = population.r.finite_support()?;
        let psis = population.psi.finite_support()?;
        let w = 1.0 / (rs.len() * psis.len()) as f64;
        let queries: Vec<QueryDraw> = rs
            .iter()
            .flat_map(|&r| psis.iter().map(move |&psi| QueryDraw { r, psi }))
            .collect();
        Some(Self {
            weights: vec![w; queries.len()],
            queries,
        })
    }

    /// Exact support when available, otherwise `n_q` Monte Carlo draws.
    pub fn for_population(population: &PopulationSpec, n_q: usize, seed: u64) -> Self {
        Self::exact(population).unwrap_or_else(|| Self::monte_carlo(population, n_q, seed))
    }

    pub fn from_weighted(points: Vec<(QueryDraw, f64)>) -> Result<Self, ValidationError> {
        if points.is_empty() {
            return Err(ValidationError::new("panel", "must contain at least one query"));
        }
        if points.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(ValidationError::new("panel.weights", "must be finite and > 0"));
        }
        let total: f64 = points.iter().map(|(_, w)| w).sum();
        let (queries, weights) = points.into_iter().map(|(q, w)| (q, w / total)).unzip();
        Ok(Self { queries, weights })
    }

    pub fn uniform(queries: Vec<QueryDraw>) -> Result<Self, ValidationError> {
        Self::from_weighted(queries.into_iter().map(|q| (q, 1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[QueryDraw] {
        &self.queries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryDraw, f64)> {
        self.queries.iter().zip(self.weights.iter().copied())
    }
}
