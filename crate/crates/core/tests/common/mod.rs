#![allow(dead_code)]

use gemon_core::dp::{QueryPanel, Solver, TrueModel};
use gemon_core::params::GridCaps;
use gemon_core::{MarketParams, PayoffConvention, QueryDraw, UserType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficients redrawn around the default calibration.
pub fn market(rng: &mut ChaCha8Rng, grid: GridCaps) -> MarketParams {
    let mut p = MarketParams::baseline();
    p.beta = rng.gen_range(0.5..0.97);
    p.kappa_free = rng.gen_range(0.0..1.2);
    p.kappa_paid = p.kappa_free + rng.gen_range(0.0..1.5);
    p.price = rng.gen_range(0.5..4.0);
    p.omega = rng.gen_range(0.0..1.0);
    p.utility.w_psi = rng.gen_range(0.0..3.0);
    p.utility.w_r_free = rng.gen_range(-1.5..1.0);
    p.utility.u0_ad = rng.gen_range(-1.0..2.0);
    p.revenue.b_r = rng.gen_range(0.0..2.0);
    p.retention.rho_min = rng.gen_range(0.0..0.6);
    p.conversion.tau0 = rng.gen_range(0.5..5.0);
    p.payoff_convention = if rng.gen_bool(0.5) {
        PayoffConvention::MainText
    } else {
        PayoffConvention::AppendixSim
    };
    p.grid = grid;
    p.validate().expect("valid instance");
    p
}

pub fn user(rng: &mut ChaCha8Rng) -> UserType {
    UserType {
        gamma: rng.gen_range(0.0..=1.0),
        theta: rng.gen_range(0.0..=1.0),
    }
}

pub fn query(rng: &mut ChaCha8Rng) -> QueryDraw {
    QueryDraw {
        r: rng.gen_range(0.0..=1.0),
        psi: rng.gen_range(0.0..=1.0),
    }
}

pub fn panel(rng: &mut ChaCha8Rng, n: usize) -> QueryPanel {
    let pts = (0..n).map(|_| (query(rng), rng.gen_range(0.1..1.0))).collect();
    QueryPanel::from_weighted(pts).unwrap()
}

/// A random instance on an `s_max x c_max` grid.
pub fn solver(seed: u64, cap: u32, n_queries: usize) -> Solver<TrueModel> {
    let mut rng = rng(seed);
    let p = market(&mut rng, GridCaps { s_max: cap, c_max: cap });
    let u = user(&mut rng);
    let panel = panel(&mut rng, n_queries);
    Solver::new(TrueModel::new(p, u), panel)
}
