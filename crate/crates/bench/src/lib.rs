//! Fixed inputs for the solver benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wprelay_core::joint::{self, IterConfig, OptScheme};
use wprelay_core::source::{self, HomogenizedSdp};
use wprelay_core::wmse::IterState;
use wprelay_core::{channel, ChannelSet, SystemParams};

/// One drop of the default scenario with `r = r_R`.
pub fn drop_at(r: usize, seed: u64) -> (ChannelSet, SystemParams) {
    let p = SystemParams {
        r,
        r_relay: r,
        ..SystemParams::default()
    };
    let ch = channel::make_channel_set(&p, &mut ChaCha8Rng::seed_from_u64(seed)).expect("valid parameters");
    (ch, p)
}

/// Iterate after a few rounds of the alternating loop, so the
/// subproblems have realistic conditioning.
pub fn warmed(r: usize, seed: u64) -> (IterState, ChannelSet, SystemParams) {
    let (ch, p) = drop_at(r, seed);
    let cfg = IterConfig {
        max_iters: 3,
        ..IterConfig::new(OptScheme::EfaOpt)
    };
    let (st, _) = joint::run_joint_opt(&ch, &p, &cfg).expect("drop solves");
    (st, ch, p)
}

/// Relaxed source problem at the warmed iterate.
pub fn source_relaxation(r: usize, seed: u64) -> HomogenizedSdp {
    let (st, ch, p) = warmed(r, seed);
    source::homogenize(&source::build_b_qcqp(&st, &ch, &p).expect("dimensions match"))
}
