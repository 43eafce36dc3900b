use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::model::{QueryDraw, UserType};
use crate::rng::{Purpose, StreamKey};

/// A distribution on `[0, 1]`.
///
/// `Constant` and `Discrete` are degenerate members used to pin a single user
/// type or to build query distributions whose support is known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UnitDist {
    Uniform,
    Beta { a: f64, b: f64 },
    Constant { value: f64 },
    /// Uniform over the listed points.
    Discrete { support: Vec<f64> },
}

impl UnitDist {
    pub fn validate(&self, field: &str) -> Result<(), ValidationError> {
        match self {
            UnitDist::Uniform => Ok(()),
            UnitDist::Beta { a, b } => {
                if !(a.is_finite() && *a > 0.0 && b.is_finite() && *b > 0.0) {
                    Err(ValidationError::new(
                        field,
                        "beta parameters a and b must be finite and > 0",
                    ))
                } else {
                    Ok(())
                }
            }
            UnitDist::Constant { value } => {
                if (0.0..=1.0).contains(value) {
                    Ok(())
                } else {
                    Err(ValidationError::new(field, "constant must lie in [0, 1]"))
                }
            }
            UnitDist::Discrete { support } => {
                if support.is_empty() {
                    return Err(ValidationError::new(field, "support must be non-empty"));
                }
                if support.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(ValidationError::new(field, "support points must lie in [0, 1]"));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            UnitDist::Uniform => 0.5,
            UnitDist::Beta { a, b } => a / (a + b),
            UnitDist::Constant { value } => *value,
            UnitDist::Discrete { support } => support.iter().sum::<f64>() / support.len() as f64,
        }
    }

    /// Finite support with equal weights, if the distribution has one.
    pub fn finite_support(&self) -> Option<Vec<f64>> {
        match self {
            UnitDist::Constant { value } => Some(vec![*value]),
            UnitDist::Discrete { support } => Some(support.clone()),
            _ => None,
        }
    }

    /// One draw from the stream addressed by `key`.
    pub fn sample(&self, key: StreamKey) -> f64 {
        let mut rng = key.rng();
        let x = match self {
            UnitDist::Uniform => rand::Rng::gen::<f64>(&mut rng),
            UnitDist::Beta { a, b } => Beta::new(*a, *b)
                .expect("validated beta parameters")
                .sample(&mut rng),
            UnitDist::Constant { value } => *value,
            UnitDist::Discrete { support } => {
                support[rand::Rng::gen_range(&mut rng, 0..support.len())]
            }
        };
        x.clamp(0.0, 1.0)
    }
}

/// Distributions of user types and per-period query signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub gamma: UnitDist,
    pub theta: UnitDist,
    pub r: UnitDist,
    pub psi: UnitDist,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            gamma: UnitDist::Uniform,
            theta: UnitDist::Uniform,
            r: UnitDist::Uniform,
            psi: UnitDist::Uniform,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.gamma.validate("population.gamma")?;
        self.theta.validate("population.theta")?;
        self.r.validate("population.r")?;
        self.psi.validate("population.psi")
    }

    /// The fixed latent type of user `user` under `seed`.
    pub fn sample_user(&self, seed: u64, user: u64) -> UserType {
        UserType {
            gamma: self.gamma.sample(StreamKey::new(seed, user, 0, Purpose::TypeGamma)),
            theta: self.theta.sample(StreamKey::new(seed, user, 0, Purpose::TypeTheta)),
        }
    }

    /// The query drawn by `user` in `period`.
    pub fn sample_query(&self, seed: u64, user: u64, period: u64) -> QueryDraw {
        self.sample_query_with(seed, user, period, Purpose::QueryR, Purpose::QueryPsi)
    }

    pub(crate) fn sample_query_with(
        &self,
        seed: u64,
        user: u64,
        period: u64,
        r_purpose: Purpose,
        psi_purpose: Purpose,
    ) -> QueryDraw {
        QueryDraw {
            r: self.r.sample(StreamKey::new(seed, user, period, r_purpose)),
            psi: self.psi.sample(StreamKey::new(seed, user, period, psi_purpose)),
        }
    }
}
