use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LearnError, ValidationError};
use crate::io::fmt_f64;
use crate::model::{self, Action, QueryDraw, UserState, UserType};
use crate::params::MarketParams;
use crate::population::PopulationSpec;
use crate::rng::{Purpose, StreamKey};

/// One logged pre-subscription step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRecord {
    pub user: u64,
    pub gamma: f64,
    pub theta: f64,
    pub r: f64,
    pub psi: f64,
    pub s: u32,
    pub c: u32,
    pub action: Action,
    pub engaged: bool,
    pub payoff: f64,
    pub next_s: u32,
    pub next_c: u32,
    pub next_z: bool,
    /// Active in the next period. Always true after conversion.
    pub returned: bool,
}

impl LogRecord {
    pub fn user_type(&self) -> UserType {
        UserType {
            gamma: self.gamma,
            theta: self.theta,
        }
    }

    pub fn query(&self) -> QueryDraw {
        QueryDraw {
            r: self.r,
            psi: self.psi,
        }
    }

    pub fn state(&self) -> UserState {
        UserState::pre(self.s, self.c)
    }

    pub fn next_state(&self) -> UserState {
        let mut st = UserState::pre(self.next_s, self.next_c);
        st.subscribed = self.next_z;
        st
    }
}

/// Simulate `n_records` independent logged steps.
///
/// Each record draws a fresh user from `population`, a decision state
/// uniformly over the grid and a query; the behaviour policy shows Free with
/// probability `eta` and Ad otherwise, so both propensities are at least
/// `eta`. All draws for record `i` come from streams keyed by `(seed, i)`.
pub fn generate_logs(
    params: &MarketParams,
    population: &PopulationSpec,
    eta: f64,
    n_records: usize,
    seed: u64,
) -> Result<Vec<LogRecord>, ValidationError> {
    if !(eta > 0.0 && eta <= 0.5) {
        return Err(ValidationError::new("learning.eta", "must lie in (0, 0.5]"));
    }
    params.validate()?;
    population.validate()?;
    let grid = params.grid;
    let records = (0..n_records as u64)
        .into_par_iter()
        .map(|i| {
            let user = population.sample_user(seed, i);
            let query = population.sample_query(seed, i, 0);
            let mut srng = StreamKey::new(seed, i, 0, Purpose::LogState).rng();
            let state = UserState::pre(srng.gen_range(0..=grid.s_max), srng.gen_range(0..=grid.c_max));
            let action = if StreamKey::new(seed, i, 0, Purpose::Behavior).uniform() < eta {
                Action::Free
            } else {
                Action::Ad
            };
            let m = model::engage_prob(params, &user, &query, &state, action);
            let engaged = StreamKey::new(seed, i, 0, Purpose::Engage).uniform() < m;
            let payoff = model::flow_payoff(params, &query, &state, action, engaged)
                .expect("logged states are pre-subscription");
            let next = model::post_state(params, &user, &query, &state, action, engaged)
                .expect("logged states are pre-subscription");
            let returned = next.subscribed
                || StreamKey::new(seed, i, 0, Purpose::Retain).uniform() < model::retention_prob(params, &next);
            LogRecord {
                user: i,
                gamma: user.gamma,
                theta: user.theta,
                r: query.r,
                psi: query.psi,
                s: state.s,
                c: state.c,
                action,
                engaged,
                payoff,
                next_s: next.s,
                next_c: next.c,
                next_z: next.subscribed,
                returned,
            }
        })
        .collect();
    Ok(records)
}

pub const LOG_HEADER: [&str; 14] = [
    "user", "gamma", "theta", "r", "psi", "s", "c", "action", "engaged", "payoff", "next_s", "next_c", "next_z",
    "returned",
];

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

pub fn logs_to_csv(records: &[LogRecord]) -> String {
    let rows = records.iter().map(|r| {
        vec![
            r.user.to_string(),
            fmt_f64(r.gamma),
            fmt_f64(r.theta),
            fmt_f64(r.r),
            fmt_f64(r.psi),
            r.s.to_string(),
            r.c.to_string(),
            r.action.as_str().into(),
            flag(r.engaged),
            fmt_f64(r.payoff),
            r.next_s.to_string(),
            r.next_c.to_string(),
            flag(r.next_z),
            flag(r.returned),
        ]
    });
    crate::io::csv_string(&LOG_HEADER, rows)
}

/// Parse logs written by [`logs_to_csv`].
pub fn logs_from_csv(text: &str) -> Result<Vec<LogRecord>, LearnError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| LearnError::Parse { line: 1, reason: e.to_string() })?
        .clone();
    if header.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(LearnError::Parse {
            line: 1,
            reason: format!("expected header {}", LOG_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| LearnError::Parse { line, reason: e.to_string() })?;
        let bad = |col: &str| LearnError::Parse {
            line,
            reason: format!("invalid {col}"),
        };
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(LOG_HEADER[i]));
        let u = |i: usize| rec[i].parse::<u32>().map_err(|_| bad(LOG_HEADER[i]));
        let b = |i: usize| match &rec[i] {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(bad(LOG_HEADER[i])),
        };
        let action = match &rec[7] {
            "ad" => Action::Ad,
            "free" => Action::Free,
            _ => return Err(bad("action")),
        };
        out.push(LogRecord {
            user: rec[0].parse().map_err(|_| bad("user"))?,
            gamma: f(1)?,
            theta: f(2)?,
            r: f(3)?,
            psi: f(4)?,
            s: u(5)?,
            c: u(6)?,
            action,
            engaged: b(8)?,
            payoff: f(9)?,
            next_s: u(10)?,
            next_c: u(11)?,
            next_z: b(12)?,
            returned: b(13)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (MarketParams, PopulationSpec) {
        let mut p = MarketParams::baseline();
        p.grid.s_max = 5;
        p.grid.c_max = 5;
        (p, PopulationSpec::default())
    }

    #[test]
    fn next_state_matches_true_transition() {
        let (p, pop) = setup();
        for rec in generate_logs(&p, &pop, 0.3, 2000, 5).unwrap() {
            let next = model::post_state(&p, &rec.user_type(), &rec.query(), &rec.state(), rec.action, rec.engaged)
                .unwrap();
            assert_eq!(next, rec.next_state());
            if rec.next_z {
                assert!(rec.returned);
            }
        }
    }

    #[test]
    fn free_share_tracks_eta() {
        let (p, pop) = setup();
        let logs = generate_logs(&p, &pop, 0.5, 20_000, 11).unwrap();
        let share = logs.iter().filter(|r| r.action == Action::Free).count() as f64 / logs.len() as f64;
        assert!((share - 0.5).abs() < 0.02, "{share}");
    }

    #[test]
    fn eta_out_of_range_rejected() {
        let (p, pop) = setup();
        assert!(generate_logs(&p, &pop, 0.0, 10, 1).is_err());
        assert!(generate_logs(&p, &pop, 0.6, 10, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (p, pop) = setup();
        let logs = generate_logs(&p, &pop, 0.4, 50, 2).unwrap();
        let back = logs_from_csv(&logs_to_csv(&logs)).unwrap();
        assert_eq!(back.len(), 50);
        for (a, b) in logs.iter().zip(&back) {
            assert_eq!((a.s, a.c, a.action, a.engaged, a.next_z), (b.s, b.c, b.action, b.engaged, b.next_z));
            assert!((a.payoff - b.payoff).abs() <= 1e-8 * a.payoff.abs().max(1.0));
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(logs_from_csv("a,b\n1,2\n"), Err(LearnError::Parse { line: 1, .. })));
    }
}
