#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wprelay_core::linalg::{self, c, cr};
use wprelay_core::wmse::{self, IterState};
use wprelay_core::{channel, CMat, ChannelSet, SystemParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries i.i.d. circularly-symmetric with unit variance.
pub fn rand_cmat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(h * re, h * im)
    })
}

pub fn rand_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
    linalg::hermitian_part(&rand_cmat(rng, n, n))
}

/// Positive semidefinite of the given rank.
pub fn rand_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> CMat {
    let g = rand_cmat(rng, n, rank);
    linalg::hermitian_part(&(&g * g.adjoint()))
}

pub fn rand_hpd<R: Rng>(rng: &mut R, n: usize) -> CMat {
    rand_psd(rng, n, n) + linalg::identity(n) * cr(0.1)
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Powers, split ratio and relay position drawn around the default scenario.
pub fn random_params<R: Rng>(rng: &mut R, r: usize, r_relay: usize) -> SystemParams {
    SystemParams {
        r,
        r_relay,
        p_source: rng.random_range(0.05..0.5),
        p_dest: rng.random_range(0.05..1.0),
        rho: rng.random_range(0.1..0.9),
        ..SystemParams::default()
    }
    .with_geometry(10.0, rng.random_range(0.3..0.9))
}

pub fn random_drop(seed: u64, r: usize, r_relay: usize) -> (ChannelSet, SystemParams) {
    let mut g = rng(seed);
    let p = random_params(&mut g, r, r_relay);
    let ch = channel::make_channel_set(&p, &mut g).unwrap();
    (ch, p)
}

/// Random iterate meeting both power constraints, with `A0` and `W` random too.
pub fn random_state<R: Rng>(rng: &mut R, ch: &ChannelSet, p: &SystemParams, energy_flow: bool) -> IterState {
    let r = ch.r();
    let rr = ch.r_relay();
    let q_d = if energy_flow {
        channel::energy_beamformer_qd(&ch.h_rd, p.p_dest).unwrap()
    } else {
        channel::EnergyCovariance::zero(r)
    };
    let b = rand_cmat(rng, r, r);
    let b_s = &b * cr((rng.random_range(0.3..1.0) * p.p_source).sqrt() / linalg::fro(&b));
    let mut st = IterState {
        a0: rand_hpd(rng, r),
        w: rand_cmat(rng, r, r),
        f: rand_cmat(rng, rr, rr),
        b_s,
        q_d,
    };
    let budget = p.harvest_coeff() * (linalg::re_trace_prod(&(&ch.h_rd * &st.q_d.q), &ch.h_rd.adjoint())
        + linalg::re_trace_prod(&(&ch.h_rs * st.q_s()), &ch.h_rs.adjoint()));
    let used = budget - wmse::relay_power_gap(&st, ch, p).unwrap();
    st.f *= cr((rng.random_range(0.2..1.0) * budget / used).sqrt());
    st
}

/// State after `k` full iterations of the alternating loop, a realistic
/// point for testing a single sub-update.
pub fn warmed_state(seed: u64, r: usize, r_relay: usize, k: usize) -> (IterState, ChannelSet, SystemParams) {
    use wprelay_core::joint::{self, IterConfig, OptScheme};
    let (ch, p) = random_drop(seed, r, r_relay);
    let st = joint::initialize_state(&ch, &p, OptScheme::EfaOpt).unwrap();
    let cfg = IterConfig {
        max_iters: k.max(1),
        ..IterConfig::new(OptScheme::EfaOpt)
    };
    let st = if k == 0 { st } else { joint::run_from(st, &ch, &p, &cfg).unwrap().0 };
    (st, ch, p)
}
