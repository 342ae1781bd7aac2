//! MSE matrix, closed-form weight/receiver updates and the WMSE surrogate.

use crate::channel::{ChannelSet, EnergyCovariance, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat};

/// Smallest admissible eigenvalue of the MSE matrix before inversion.
pub const MSE_SINGULAR_TOL: f64 = 1e-12;

/// One iterate of the alternating optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct IterState {
    /// Weight matrix, `r × r`.
    pub a0: CMat,
    /// Destination receive filter, `r × r`.
    pub w: CMat,
    /// Relay processing matrix, `r_relay × r_relay`.
    pub f: CMat,
    /// Source precoder, `r × r`.
    pub b_s: CMat,
    pub q_d: EnergyCovariance,
}

impl IterState {
    pub fn check_dims(&self, ch: &ChannelSet) -> Result<()> {
        let r = ch.r();
        let rr = ch.r_relay();
        let ok = self.a0.shape() == (r, r)
            && self.w.shape() == (r, r)
            && self.f.shape() == (rr, rr)
            && self.b_s.shape() == (r, r)
            && self.q_d.q.shape() == (r, r);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "iterate does not match channels with r={r}, r_relay={rr}"
            )))
        }
    }

    pub fn q_s(&self) -> CMat {
        &self.b_s * self.b_s.adjoint()
    }
}

/// `H_DR F H_RS B_S`, the end-to-end signal matrix before the receiver.
fn signal_matrix(st: &IterState, ch: &ChannelSet) -> CMat {
    &ch.h_dr * &st.f * &ch.h_rs * &st.b_s
}

/// Error covariance `E{(W^H y_D − x_S)(W^H y_D − x_S)^H}` with the
/// destination's own energy signal cancelled.
pub fn mse_matrix(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<CMat> {
    st.check_dims(ch)?;
    let r = ch.r();
    let s = (1.0 - p.rho).sqrt();
    let g = &ch.h_dr * &st.f;
    let t = &g * &ch.h_rs * &st.b_s;
    let wh = st.w.adjoint();
    let whg = &wh * &g;
    let wht = &wh * &t;
    let e = &wht * wht.adjoint() * cr(1.0 - p.rho)
        + &whg * whg.adjoint() * cr(p.noise_power)
        + &wh * &st.w * cr(p.noise_power)
        - (&wht + wht.adjoint()) * cr(s)
        + linalg::identity(r);
    Ok(linalg::hermitian_part(&e))
}

/// `A0 = E^{-1}`.
pub fn update_a0(e: &CMat) -> Result<CMat> {
    let lo = linalg::min_eigenvalue(e);
    if !(lo > MSE_SINGULAR_TOL) {
        return Err(Error::SingularMse(lo));
    }
    let inv = linalg::inv_hpd(e).ok_or(Error::SingularMse(lo))?;
    Ok(linalg::hermitian_part(&inv))
}

/// The MMSE receiver for the current `F` and `B_S`.
pub fn update_w(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<CMat> {
    st.check_dims(ch)?;
    let r = ch.r();
    let g = &ch.h_dr * &st.f;
    let t = &g * &ch.h_rs * &st.b_s;
    let k = &t * t.adjoint() * cr(1.0 - p.rho)
        + &g * g.adjoint() * cr(p.noise_power)
        + linalg::identity(r) * cr(p.noise_power);
    let k = linalg::hermitian_part(&k);
    let rhs = t * cr((1.0 - p.rho).sqrt());
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::SingularMse(0.0))?;
    Ok(chol.solve(&rhs))
}

/// `Tr{A0 E} − ln det A0`; `+∞` when `A0` is singular.
pub fn wmse_objective(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<f64> {
    let e = mse_matrix(st, ch, p)?;
    Ok(wmse_from_mse(&st.a0, &e))
}

pub(crate) fn wmse_from_mse(a0: &CMat, e: &CMat) -> f64 {
    match linalg::logdet_hpd(a0) {
        Some(ld) => linalg::re_trace_prod(a0, e) - ld,
        None => f64::INFINITY,
    }
}

/// End-to-end rate in nats per channel use, half-duplex pre-log included.
pub fn achievable_rate_nats(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<f64> {
    st.check_dims(ch)?;
    let r = ch.r();
    let g = &ch.h_dr * &st.f;
    let t = signal_matrix(st, ch);
    let noise = &g * g.adjoint() * cr(p.noise_power) + linalg::identity(r) * cr(p.noise_power);
    let total = &noise + &t * t.adjoint() * cr(1.0 - p.rho);
    let ld_n = linalg::logdet_hpd(&linalg::hermitian_part(&noise)).ok_or(Error::NonFinite)?;
    let ld_t = linalg::logdet_hpd(&linalg::hermitian_part(&total)).ok_or(Error::NonFinite)?;
    Ok((0.5 * (ld_t - ld_n)).max(0.0))
}

/// End-to-end rate in bits per channel use.
pub fn achievable_rate(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<f64> {
    Ok(achievable_rate_nats(st, ch, p)? / std::f64::consts::LN_2)
}

/// Harvested minus consumed relay power; nonnegative when the relay budget holds.
pub fn relay_power_gap(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<f64> {
    st.check_dims(ch)?;
    let rx = relay_rx_covariance(st, ch, p);
    let harvested = p.harvest_coeff()
        * (linalg::re_trace_prod(&(&ch.h_rd * &st.q_d.q), &ch.h_rd.adjoint())
            + linalg::re_trace_prod(&(&ch.h_rs * st.q_s()), &ch.h_rs.adjoint()));
    let consumed = linalg::re_trace_prod(&(&st.f * rx), &st.f.adjoint());
    Ok(harvested - consumed)
}

/// `(1−ρ)(H_RS Q_S H_RS^H + H_RD Q_D H_RD^H) + σ² I`, the covariance the relay amplifies.
pub(crate) fn relay_rx_covariance(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> CMat {
    let rr = ch.r_relay();
    let sig = &ch.h_rs * st.q_s() * ch.h_rs.adjoint() + &ch.h_rd * &st.q_d.q * ch.h_rd.adjoint();
    linalg::hermitian_part(&(sig * cr(1.0 - p.rho) + linalg::identity(rr) * cr(p.noise_power)))
}

/// `P_S − Tr{B_S B_S^H}`.
pub fn source_power_gap(st: &IterState, p: &SystemParams) -> f64 {
    p.p_source - linalg::fro(&st.b_s).powi(2)
}
