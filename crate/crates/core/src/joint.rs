//! Alternating WMSE minimization over `(A0, W, F, B_S)`.

use std::io::Write;

use crate::channel::{self, ChannelSet, EnergyCovariance, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat};
use crate::relay;
use crate::sdp::SdpOptions;
use crate::source::{self, SourceSolver};
use crate::wmse::{self, IterState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptScheme {
    /// Destination sends an energy beam (`Q_D` from the strongest mode of `H_RD`).
    EfaOpt,
    /// No energy flow from the destination (`Q_D = 0`).
    NefaOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stopping {
    /// Stop when the objective changes by less than `epsilon_obj`.
    ObjectiveDiff,
    /// Stop when the relative change of the stacked iterate is below `epsilon_minimizer`.
    MinimizerDiff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterConfig {
    pub scheme: OptScheme,
    pub epsilon_obj: f64,
    pub epsilon_minimizer: f64,
    pub max_iters: usize,
    pub stopping: Stopping,
    pub source_solver: SourceSolver,
    pub sdp: SdpOptions,
}

impl IterConfig {
    pub fn new(scheme: OptScheme) -> Self {
        IterConfig {
            scheme,
            epsilon_obj: 1e-4,
            epsilon_minimizer: 1e-4,
            max_iters: 500,
            stopping: Stopping::ObjectiveDiff,
            source_solver: SourceSolver::default(),
            sdp: SdpOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_obj > 0.0 && self.epsilon_minimizer > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "tolerances must be positive and max_iters at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Objective values around the four sub-updates of one iteration:
/// before the `A0` update, then after `A0`, `W`, `F` and `B_S`.
pub type LinkValues = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub links: LinkValues,
    pub rate_bits: f64,
    pub relay_gap: f64,
    pub source_gap: f64,
    pub minimizer_change: f64,
}

impl IterRecord {
    pub fn c_iter(&self) -> f64 {
        self.links[4]
    }

    /// Largest increase of the objective across the four links.
    pub fn max_link_increase(&self) -> f64 {
        self.links
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterTrace {
    /// Objective of the initial state.
    pub initial: f64,
    pub records: Vec<IterRecord>,
    pub converged: bool,
    /// Set when a source update failed and the loop stopped early.
    pub source_failure: Option<String>,
}

impl IterTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_rate(&self) -> f64 {
        self.records.last().map(|r| r.rate_bits).unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,c_iter,rate_bits,relay_gap,source_gap,minimizer_change")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e}",
                r.iteration,
                r.c_iter(),
                r.rate_bits,
                r.relay_gap,
                r.source_gap,
                r.minimizer_change
            )?;
        }
        Ok(())
    }
}

pub fn energy_covariance(ch: &ChannelSet, p: &SystemParams, scheme: OptScheme) -> Result<EnergyCovariance> {
    match scheme {
        OptScheme::EfaOpt => channel::energy_beamformer_qd(&ch.h_rd, p.p_dest),
        OptScheme::NefaOpt => Ok(EnergyCovariance::zero(ch.r())),
    }
}

/// Deterministic feasible start: uniform source power, a scaled identity at
/// the relay using half of the harvested budget, then the matching `W` and `A0`.
pub fn initialize_state(ch: &ChannelSet, p: &SystemParams, scheme: OptScheme) -> Result<IterState> {
    ch.check_dims(p)?;
    let r = ch.r();
    let rr = ch.r_relay();
    let q_d = energy_covariance(ch, p, scheme)?;
    let b_s = linalg::identity(r) * cr((p.p_source / r as f64).sqrt());
    let mut st = IterState {
        a0: linalg::identity(r),
        w: linalg::zeros(r, r),
        f: linalg::identity(rr),
        b_s,
        q_d,
    };
    let rx = wmse::relay_rx_covariance(&st, ch, p);
    let budget = relay::build_f_qcqp(&st, ch, p)?.budget;
    let alpha = (0.5 * budget / rx.trace().re).sqrt();
    st.f = linalg::identity(rr) * cr(alpha);
    st.w = wmse::update_w(&st, ch, p)?;
    st.a0 = wmse::update_a0(&wmse::mse_matrix(&st, ch, p)?)?;
    Ok(st)
}

fn stacked_change(old: &IterState, new: &IterState) -> f64 {
    let d2 = [
        (&new.a0 - &old.a0).norm_squared(),
        (&new.w - &old.w).norm_squared(),
        (&new.f - &old.f).norm_squared(),
        (&new.b_s - &old.b_s).norm_squared(),
    ];
    let n2 = new.a0.norm_squared() + new.w.norm_squared() + new.f.norm_squared() + new.b_s.norm_squared();
    if n2 > 0.0 {
        (d2.iter().sum::<f64>() / n2).sqrt()
    } else {
        0.0
    }
}

/// Source update, with the zero-budget case handled directly.
fn update_source(st: &IterState, ch: &ChannelSet, p: &SystemParams, cfg: &IterConfig) -> Result<CMat> {
    if p.p_source == 0.0 {
        return Ok(linalg::zeros(ch.r(), ch.r()));
    }
    source::update_b(st, ch, p, cfg.source_solver, &cfg.sdp)
}

pub fn run_joint_opt(ch: &ChannelSet, p: &SystemParams, cfg: &IterConfig) -> Result<(IterState, IterTrace)> {
    let st = initialize_state(ch, p, cfg.scheme)?;
    run_from(st, ch, p, cfg)
}

/// Run the alternating loop from a given state.
pub fn run_from(
    mut st: IterState,
    ch: &ChannelSet,
    p: &SystemParams,
    cfg: &IterConfig,
) -> Result<(IterState, IterTrace)> {
    p.validate()?;
    cfg.validate()?;
    st.check_dims(ch)?;
    let mut trace = IterTrace {
        initial: wmse::wmse_objective(&st, ch, p)?,
        ..IterTrace::default()
    };
    let mut prev = trace.initial;
    for k in 0..cfg.max_iters {
        let old = st.clone();
        let mut links = [prev, 0.0, 0.0, 0.0, 0.0];

        let e = wmse::mse_matrix(&st, ch, p)?;
        st.a0 = wmse::update_a0(&e)?;
        links[1] = wmse::wmse_from_mse(&st.a0, &e);
        st.w = wmse::update_w(&st, ch, p)?;
        links[2] = wmse::wmse_objective(&st, ch, p)?;
        st.f = relay::relay_step(&st, ch, p)?;
        links[3] = wmse::wmse_objective(&st, ch, p)?;
        match update_source(&st, ch, p, cfg) {
            Ok(b) => {
                // The previous precoder stays feasible after the relay update,
                // so never accept a worse one from an inexact solve.
                let prev_b = std::mem::replace(&mut st.b_s, b);
                if wmse::wmse_objective(&st, ch, p)? > links[3] {
                    st.b_s = prev_b;
                }
            }
            Err(err) => {
                if k == 0 {
                    return Err(Error::DropFailed(err.to_string()));
                }
                trace.source_failure = Some(err.to_string());
                st = old;
                break;
            }
        }
        links[4] = wmse::wmse_objective(&st, ch, p)?;

        let change = stacked_change(&old, &st);
        trace.records.push(IterRecord {
            iteration: k + 1,
            links,
            rate_bits: wmse::achievable_rate(&st, ch, p)?,
            relay_gap: wmse::relay_power_gap(&st, ch, p)?,
            source_gap: wmse::source_power_gap(&st, p),
            minimizer_change: change,
        });
        let done = match cfg.stopping {
            Stopping::ObjectiveDiff => (prev - links[4]).abs() < cfg.epsilon_obj,
            Stopping::MinimizerDiff => change < cfg.epsilon_minimizer,
        };
        prev = links[4];
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((st, trace))
}
