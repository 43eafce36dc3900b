use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::Policy;
use crate::dp::subscribed_value;
use crate::error::{SimError, ValidationError};
use crate::model::{self, Action, UserState, UserType};
use crate::params::MarketParams;
use crate::population::PopulationSpec;
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: u32,
    pub horizon: u32,
    pub seeds: Vec<u64>,
    pub n_bins: u32,
    pub market: MarketParams,
    pub population: PopulationSpec,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.n_users < 1 {
            return Err(ValidationError::new("simulation.n_users", "must be >= 1"));
        }
        if self.horizon < 1 {
            return Err(ValidationError::new("simulation.horizon", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(ValidationError::new("seeds", "must be non-empty"));
        }
        if self.n_bins < 1 {
            return Err(ValidationError::new("simulation.n_bins", "must be >= 1"));
        }
        self.market.validate()?;
        self.population.validate()
    }

    /// Realized types of every user under `seed`.
    pub fn user_types(&self, seed: u64) -> Vec<UserType> {
        (0..self.n_users as u64)
            .map(|i| self.population.sample_user(seed, i))
            .collect()
    }

    /// Realized types across all configured seeds.
    pub fn all_user_types(&self) -> Vec<UserType> {
        self.seeds.iter().flat_map(|&s| self.user_types(s)).collect()
    }
}

/// One display to one active non-subscriber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub user: u32,
    pub t: u32,
    pub action: Action,
    pub engaged: bool,
    /// Flow payoff discounted by `beta^t`.
    pub payoff: f64,
    /// `beta^(t+1) v_sub` on conversion, else 0.
    pub booked_sub: f64,
    pub converted: bool,
    pub churned: bool,
}

/// Everything a run produced, in `(user, t)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub n_users: u32,
    pub horizon: u32,
    pub events: Vec<Event>,
}

fn simulate_user(
    config: &SimConfig,
    policy: &Policy,
    seed: u64,
    user: u32,
    v_sub: f64,
) -> Result<Vec<Event>, SimError> {
    let p = &config.market;
    let ty = config.population.sample_user(seed, user as u64);
    let mut state = UserState::fresh();
    let mut events = Vec::new();
    let mut discount = 1.0;
    for t in 0..config.horizon {
        let period = t as u64;
        let query = config.population.sample_query(seed, user as u64, period);
        let action = policy.decide(&ty, &state, &query)?;
        let key = StreamKey::new(seed, user as u64, period, Purpose::Engage);
        let engaged = key.uniform() < model::engage_prob(p, &ty, &query, &state, action);
        let payoff = discount * model::flow_payoff(p, &query, &state, action, engaged)?;
        let next = model::post_state(p, &ty, &query, &state, action, engaged)?;
        let mut event = Event {
            user,
            t,
            action,
            engaged,
            payoff,
            booked_sub: 0.0,
            converted: false,
            churned: false,
        };
        if next.subscribed {
            event.converted = true;
            event.booked_sub = discount * p.beta * v_sub;
            events.push(event);
            break;
        }
        let retain = key.with_purpose(Purpose::Retain).uniform();
        if retain >= model::retention_prob(p, &next) {
            event.churned = true;
            events.push(event);
            break;
        }
        events.push(event);
        state = next;
        discount *= p.beta;
    }
    Ok(events)
}

/// Simulate one seed. Users are advanced in parallel; the log is assembled in
/// user order, so it does not depend on the thread count.
pub fn simulate_run(config: &SimConfig, policy: &Policy, seed: u64) -> Result<EventLog, SimError> {
    config.validate()?;
    let v_sub = subscribed_value(&config.market)?;
    let per_user = (0..config.n_users)
        .into_par_iter()
        .map(|u| simulate_user(config, policy, seed, u, v_sub))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EventLog {
        n_users: config.n_users,
        horizon: config.horizon,
        events: per_user.into_iter().flatten().collect(),
    })
}
