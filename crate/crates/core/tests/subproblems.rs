mod common;

use common::*;
use rand::Rng;
use rand_distr::StandardNormal;
use wprelay_core::joint::{self, IterConfig, OptScheme};
use wprelay_core::linalg::{self, c, cr};
use wprelay_core::sdp::SdpOptions;
use wprelay_core::source::{self, SourceSolver};
use wprelay_core::wmse::{self, IterState};
use wprelay_core::{channel, relay, CMat, CVec, ChannelSet, SystemParams};

fn complex_normal<R: Rng>(g: &mut R, n: usize, var: f64) -> CVec {
    let s = (0.5 * var).sqrt();
    CVec::from_fn(n, |_, _| {
        let re: f64 = g.sample(StandardNormal);
        let im: f64 = g.sample(StandardNormal);
        c(s * re, s * im)
    })
}

/// Draw one realization of the received signal from the physical model:
/// the relay splits, adds its own noise, amplifies, and the destination
/// removes its own energy signal before the receive filter.
fn simulate_error<R: Rng>(g: &mut R, st: &IterState, ch: &ChannelSet, p: &SystemParams) -> CVec {
    let r = ch.r();
    let rr = ch.r_relay();
    let s = complex_normal(g, r, 1.0);
    // x_D = Q_D^{1/2} u.
    let (lam, u) = linalg::eigh(&st.q_d.q);
    let half = &u * linalg::diag_real(&lam.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>()) * u.adjoint();
    let x_d = half * complex_normal(g, r, 1.0);
    let at_relay = (&ch.h_rs * &st.b_s * &s + &ch.h_rd * &x_d) * cr((1.0 - p.rho).sqrt());
    let y_r = at_relay + complex_normal(g, rr, p.noise_power);
    let own = &ch.h_dr * &st.f * &ch.h_rd * &x_d * cr((1.0 - p.rho).sqrt());
    let y_d = &ch.h_dr * &st.f * y_r + complex_normal(g, r, p.noise_power) - own;
    st.w.adjoint() * y_d - s
}

#[test]
fn mse_matrix_matches_simulation() {
    let mut g = rng(21);
    let (ch, p) = random_drop(21, 2, 3);
    let st = random_state(&mut g, &ch, &p, true);
    let e = wmse::mse_matrix(&st, &ch, &p).unwrap();
    let n = 100_000;
    let mut acc = CMat::zeros(2, 2);
    for _ in 0..n {
        let z = simulate_error(&mut g, &st, &ch, &p);
        acc += &z * z.adjoint();
    }
    acc /= cr(n as f64);
    for i in 0..2 {
        for j in 0..2 {
            // For Gaussian errors, Var(z_i z_j^*) = E_ii E_jj, split over re/im off the diagonal.
            let var = e[(i, i)].re * e[(j, j)].re / n as f64;
            let comp = if i == j { var } else { 0.5 * var };
            let sd = comp.sqrt();
            let d = acc[(i, j)] - e[(i, j)];
            assert!(d.re.abs() <= 3.0 * sd && d.im.abs() <= 3.0 * sd, "({i},{j}): {d} vs σ {sd}");
        }
    }
}

#[test]
fn mse_is_psd_and_first_links_descend() {
    let mut g = rng(22);
    for k in 0..500 {
        let (r, rr) = [(1, 1), (2, 2), (2, 3), (3, 3), (4, 4)][k % 5];
        let (ch, p) = random_drop(1000 + k as u64, r, rr);
        let mut st = random_state(&mut g, &ch, &p, k % 2 == 0);
        let e = wmse::mse_matrix(&st, &ch, &p).unwrap();
        assert!(linalg::min_eigenvalue(&e) >= -1e-10);
        let c0 = wmse::wmse_objective(&st, &ch, &p).unwrap();
        st.a0 = wmse::update_a0(&e).unwrap();
        let c1 = wmse::wmse_objective(&st, &ch, &p).unwrap();
        st.w = wmse::update_w(&st, &ch, &p).unwrap();
        let c2 = wmse::wmse_objective(&st, &ch, &p).unwrap();
        assert!(c1 <= c0 + 1e-9 && c2 <= c1 + 1e-9, "{c0} {c1} {c2}");
    }
}

#[test]
fn objective_at_optimal_weights_is_rate() {
    let mut g = rng(23);
    for k in 0..200 {
        let (ch, p) = random_drop(2000 + k, 1 + (k as usize % 4), 4);
        let mut st = random_state(&mut g, &ch, &p, true);
        st.w = wmse::update_w(&st, &ch, &p).unwrap();
        st.a0 = wmse::update_a0(&wmse::mse_matrix(&st, &ch, &p).unwrap()).unwrap();
        let rate = wmse::achievable_rate_nats(&st, &ch, &p).unwrap();
        let obj = wmse::wmse_objective(&st, &ch, &p).unwrap();
        assert!((obj - (ch.r() as f64 - 2.0 * rate)).abs() <= 1e-9, "{obj} vs {rate}");
    }
}

#[test]
fn relay_step_beats_random_feasible_points() {
    let mut g = rng(24);
    for k in 0..100 {
        let (r, rr) = [(2, 2), (2, 3), (3, 3)][k % 3];
        let (ch, p) = random_drop(3000 + k as u64, r, rr);
        let st = random_state(&mut g, &ch, &p, true);
        let q = relay::build_f_qcqp(&st, &ch, &p).unwrap();
        let f = linalg::vec(&relay::relay_step(&st, &ch, &p).unwrap());
        let best = q.objective(&f);
        let scale = 1.0 + best.abs();
        assert!(q.constraint(&f) <= q.budget * (1.0 + 1e-9));
        for _ in 0..100 {
            let cand = complex_normal(&mut g, rr * rr, 1.0);
            let t = (g.random::<f64>() * q.budget / q.constraint(&cand)).sqrt();
            let cand = cand * cr(t);
            assert!(best <= q.objective(&cand) + 1e-9 * scale);
        }
    }
}

#[test]
fn relay_and_source_links_descend() {
    let mut g = rng(25);
    let opts = SdpOptions::default();
    for k in 0..500 {
        let (r, rr) = [(1, 1), (2, 2), (2, 3), (3, 3), (4, 4)][k % 5];
        let (ch, p) = random_drop(4000 + k as u64, r, rr);
        let mut st = random_state(&mut g, &ch, &p, k % 3 != 0);
        let c0 = wmse::wmse_objective(&st, &ch, &p).unwrap();
        st.f = relay::relay_step(&st, &ch, &p).unwrap();
        let c1 = wmse::wmse_objective(&st, &ch, &p).unwrap();
        assert!(c1 <= c0 + 1e-9 * (1.0 + c0.abs()), "relay link {c0} -> {c1}");
        let solver = if k % 10 == 0 { SourceSolver::Sdr } else { SourceSolver::Dual };
        st.b_s = source::update_b(&st, &ch, &p, solver, &opts).unwrap();
        let c2 = wmse::wmse_objective(&st, &ch, &p).unwrap();
        assert!(c2 <= c1 + 1e-9 * (1.0 + c1.abs()), "source link {c1} -> {c2}");
        assert!(wmse::relay_power_gap(&st, &ch, &p).unwrap() >= -1e-9);
        assert!(wmse::source_power_gap(&st, &p) >= -1e-9 * p.p_source);
    }
}

/// Single-antenna rate for relay gain `g = |f|²` and source power `s = |b|²`.
fn scalar_rate(ch: &ChannelSet, p: &SystemParams, g: f64, s: f64) -> f64 {
    let a = ch.h_dr[(0, 0)].norm_sqr();
    let b = ch.h_rs[(0, 0)].norm_sqr();
    let snr = (1.0 - p.rho) * a * g * b * s / (p.noise_power * (a * g + 1.0));
    0.5 * (1.0 + snr).log2()
}

/// Largest relay gain the harvested power allows at source power `s`.
fn scalar_gain_cap(ch: &ChannelSet, p: &SystemParams, s: f64, energy_flow: bool) -> f64 {
    let b = ch.h_rs[(0, 0)].norm_sqr();
    let d = ch.h_rd[(0, 0)].norm_sqr();
    let pd = if energy_flow { p.p_dest } else { 0.0 };
    let harvested = p.harvest_coeff() * (b * s + d * pd);
    harvested / ((1.0 - p.rho) * (b * s + d * pd) + p.noise_power)
}

#[test]
fn single_antenna_case_is_snr_maximization() {
    for seed in 0..20u64 {
        let p = SystemParams { r: 1, r_relay: 1, rho: 0.3 + 0.02 * seed as f64, ..SystemParams::default() };
        let ch = channel::make_channel_set(&p, &mut rng(5000 + seed)).unwrap();
        for (scheme, ef) in [(OptScheme::EfaOpt, true), (OptScheme::NefaOpt, false)] {
            let cfg = IterConfig { epsilon_obj: 1e-13, max_iters: 5000, ..IterConfig::new(scheme) };
            let (_, trace) = joint::run_joint_opt(&ch, &p, &cfg).unwrap();
            let mut grid_best: f64 = 0.0;
            for i in 0..=200 {
                let s = p.p_source * i as f64 / 200.0;
                let cap = scalar_gain_cap(&ch, &p, s, ef);
                for j in 0..=200 {
                    grid_best = grid_best.max(scalar_rate(&ch, &p, cap * j as f64 / 200.0, s));
                }
            }
            let got = trace.final_rate();
            assert!(got <= grid_best + 1e-6, "{got} above grid {grid_best}");
            assert!((got - grid_best).abs() <= 1e-6, "{scheme:?}: {got} vs {grid_best}");
        }
    }
}

/// Squared singular values of `F` restricted to the range of `H_RS`, ascending.
/// By Sylvester's law of inertia these fix the sign pattern of the source
/// constraint matrix: each one below ηρ/(1-ρ) gives `r` negative eigenvalues.
fn relay_gains_on_source_range(ch: &ChannelSet, f: &CMat) -> Vec<f64> {
    let r = ch.r();
    let q = linalg::svd(&ch.h_rs).u.columns(0, r).into_owned();
    let mut s: Vec<f64> = linalg::svd(&(f * q)).singular_values.iter().map(|v| v * v).collect();
    s.sort_by(f64::total_cmp);
    s
}

#[test]
fn source_constraint_inertia_follows_relay_gains() {
    let mut g = rng(26);
    for k in 0..100 {
        let (ch, p) = random_drop(6000 + k, 2, 3);
        let mut st = random_state(&mut g, &ch, &p, true);
        let thr = p.harvest_coeff() / (1.0 - p.rho);
        let gains = relay_gains_on_source_range(&ch, &st.f);
        // Put the threshold between the weakest and strongest relay gain.
        let t2 = thr / (gains[0] * gains[gains.len() - 1]).sqrt();
        st.f *= cr(t2.sqrt());
        let q = source::build_b_qcqp(&st, &ch, &p).unwrap();
        let ev = linalg::eigvalsh(&q.a4);
        assert!(ev[0] < 0.0 && ev[ev.len() - 1] > 0.0, "{ev:?}");
        let below = gains.iter().filter(|&&s| s * t2 < thr).count();
        let neg = ev.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(neg, ch.r() * below);
    }
}

#[test]
fn source_problem_without_relay_or_energy_flow() {
    let mut g = rng(27);
    let (ch, p) = random_drop(27, 2, 3);
    let mut st = random_state(&mut g, &ch, &p, false);
    st.f = CMat::zeros(3, 3);
    let q = source::build_b_qcqp(&st, &ch, &p).unwrap();
    assert!(linalg::fro(&q.a3) == 0.0 && q.a2.norm() == 0.0 && q.c_b == 0.0);
    let expect = linalg::kron(&linalg::identity(2), &(ch.h_rs.adjoint() * &ch.h_rs)) * cr(-p.harvest_coeff());
    assert!(linalg::fro(&(&q.a4 - &expect)) <= 1e-15 * (1.0 + linalg::fro(&expect)));
}
