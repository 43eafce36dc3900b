use serde::Serialize;

use super::cohort::EventLog;
use crate::error::SimError;
use crate::io::{csv_string, fmt_f64, fmt_opt};
use crate::model::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: u32,
    /// Discounted cumulative payoff per user, through the end of period `t`.
    pub cum_payoff: f64,
    /// Retained non-subscribers plus subscribers at the end of period `t`.
    pub active_users: u32,
    pub cum_subscribers: u32,
    /// Share of active non-subscribers shown Free in period `t`.
    pub free_exposure_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub n_users: u32,
    pub rows: Vec<TrajectoryRow>,
    pub final_payoff: f64,
    pub subscribers: u32,
    /// Mean of the defined per-period exposure rates.
    pub free_share: Option<f64>,
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "cum_payoff", "active_users", "cum_subscribers", "free_exposure_rate"];

impl Trajectory {
    pub fn to_csv(&self) -> String {
        csv_string(
            &TRAJECTORY_HEADER,
            self.rows.iter().map(|r| {
                vec![
                    r.t.to_string(),
                    fmt_f64(r.cum_payoff),
                    r.active_users.to_string(),
                    r.cum_subscribers.to_string(),
                    fmt_opt(r.free_exposure_rate),
                ]
            }),
        )
    }
}

pub fn compute_metrics(log: &EventLog) -> Result<Trajectory, SimError> {
    if log.events.is_empty() || log.n_users == 0 {
        return Err(SimError::EmptyLog);
    }
    let horizon = log.horizon as usize;
    let mut payoff = vec![0.0; horizon];
    let mut displays = vec![0u32; horizon];
    let mut free = vec![0u32; horizon];
    let mut conversions = vec![0u32; horizon];
    let mut churns = vec![0u32; horizon];
    for e in &log.events {
        let t = e.t as usize;
        payoff[t] += e.payoff + e.booked_sub;
        displays[t] += 1;
        free[t] += u32::from(e.action == Action::Free);
        conversions[t] += u32::from(e.converted);
        churns[t] += u32::from(e.churned);
    }

    let mut rows = Vec::with_capacity(horizon);
    let (mut cum, mut subs, mut churned) = (0.0, 0, 0);
    for t in 0..horizon {
        cum += payoff[t];
        subs += conversions[t];
        churned += churns[t];
        rows.push(TrajectoryRow {
            t: t as u32,
            cum_payoff: cum / log.n_users as f64,
            active_users: log.n_users - churned,
            cum_subscribers: subs,
            free_exposure_rate: (displays[t] > 0).then(|| free[t] as f64 / displays[t] as f64),
        });
    }
    let rates: Vec<f64> = rows.iter().filter_map(|r| r.free_exposure_rate).collect();
    let last = rows.last().expect("horizon >= 1");
    Ok(Trajectory {
        n_users: log.n_users,
        final_payoff: last.cum_payoff,
        subscribers: last.cum_subscribers,
        free_share: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        rows,
    })
}
