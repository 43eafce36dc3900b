//! Random but valid model instances.

use gemon_core::dp::{QueryPanel, ValueTable};
use gemon_core::params::GridCaps;
use gemon_core::{MarketParams, PayoffConvention, QueryDraw, UserType};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Every coefficient redrawn from a box around the default calibration.
pub fn market<R: Rng>(rng: &mut R, grid: GridCaps) -> MarketParams {
    let mut p = MarketParams::baseline();
    p.beta = rng.gen_range(0.5..0.97);
    p.kappa_free = rng.gen_range(0.0..1.2);
    p.kappa_paid = p.kappa_free + rng.gen_range(0.0..1.5);
    p.price = rng.gen_range(0.5..4.0);
    p.omega = rng.gen_range(0.0..1.0);
    p.psi_cut = rng.gen_range(0.0..1.0);
    let u = &mut p.utility;
    u.w_psi = rng.gen_range(0.0..3.0);
    u.w_r_free = rng.gen_range(-1.5..1.0);
    u.u0_ad = rng.gen_range(-1.0..2.0);
    u.ur_ad = rng.gen_range(-1.0..2.0);
    u.w_gamma = rng.gen_range(0.0..3.0);
    u.uc_ad = rng.gen_range(0.0..0.5);
    let r = &mut p.revenue;
    r.b0 = rng.gen_range(0.0..1.0);
    r.b_r = rng.gen_range(0.0..2.0);
    r.b_c = rng.gen_range(0.0..0.3);
    r.b_s = rng.gen_range(0.0..0.2);
    let ret = &mut p.retention;
    ret.rho_min = rng.gen_range(0.0..0.6);
    ret.alpha_s = rng.gen_range(0.0..0.8);
    ret.alpha_c = rng.gen_range(0.0..0.6);
    let cv = &mut p.conversion;
    cv.tau0 = rng.gen_range(0.5..5.0);
    cv.tau_p = rng.gen_range(0.0..1.0);
    cv.tau_theta = rng.gen_range(0.0..3.0);
    cv.tau_c = rng.gen_range(0.0..0.5);
    p.payoff_convention = if rng.gen_bool(0.5) {
        PayoffConvention::MainText
    } else {
        PayoffConvention::AppendixSim
    };
    p.grid = grid;
    p.validate().expect("random instance is valid");
    p
}

pub fn user<R: Rng>(rng: &mut R) -> UserType {
    UserType {
        gamma: rng.gen_range(0.0..=1.0),
        theta: rng.gen_range(0.0..=1.0),
    }
}

pub fn query<R: Rng>(rng: &mut R) -> QueryDraw {
    QueryDraw {
        r: rng.gen_range(0.0..=1.0),
        psi: rng.gen_range(0.0..=1.0),
    }
}

/// `n` distinct-looking queries with random positive weights.
pub fn panel<R: Rng>(rng: &mut R, n: usize) -> QueryPanel {
    let points = (0..n).map(|_| (query(rng), rng.gen_range(0.1..1.0))).collect();
    QueryPanel::from_weighted(points).expect("positive weights")
}

/// Arbitrary table with entries in `[-scale, scale]`.
pub fn table<R: Rng>(rng: &mut R, grid: GridCaps, v_sub: f64, user: UserType, scale: f64) -> ValueTable {
    let mut t = ValueTable::zeros(grid, v_sub, user);
    for v in &mut t.values {
        *v = rng.gen_range(-scale..=scale);
    }
    t
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
