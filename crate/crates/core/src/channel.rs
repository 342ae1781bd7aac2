//! Rician channel model with distance path loss, channel reciprocity and the
//! destination's energy beamformer.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, CMat};

/// Path-loss exponent applied to amplitudes: `d^{-3/2}`.
pub const AMPLITUDE_PATH_LOSS_EXP: f64 = 1.5;

/// Physical configuration of one source–relay–destination link.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Antennas at the source and the destination.
    pub r: usize,
    /// Antennas at the relay.
    pub r_relay: usize,
    /// Source power budget (W).
    pub p_source: f64,
    /// Destination (energy flow) power budget (W).
    pub p_dest: f64,
    /// Noise power (W).
    pub noise_power: f64,
    /// Power-splitting ratio routed to the energy harvester.
    pub rho: f64,
    /// Destination–relay distance (m).
    pub d_dr: f64,
    /// Relay–source distance (m).
    pub d_rs: f64,
    /// Rician factor.
    pub rician_k: f64,
    /// RF-to-DC conversion efficiency applied to the harvested power.
    pub eh_efficiency: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            r: 4,
            r_relay: 4,
            p_source: 0.1,
            p_dest: 0.5,
            noise_power: 1e-6,
            rho: 0.5,
            d_dr: 6.5,
            d_rs: 3.5,
            rician_k: 0.0,
            eh_efficiency: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.r < 1 || self.r_relay < self.r {
            return bad("antenna counts must satisfy r_relay >= r >= 1");
        }
        if !(self.p_source >= 0.0 && self.p_dest >= 0.0) {
            return bad("power budgets must be nonnegative");
        }
        if !(self.noise_power > 0.0) {
            return bad("noise power must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("power-splitting ratio must lie in (0, 1)");
        }
        if !(self.d_dr > 0.0) {
            return Err(Error::InvalidDistance(self.d_dr));
        }
        if !(self.d_rs > 0.0) {
            return Err(Error::InvalidDistance(self.d_rs));
        }
        if !(self.rician_k >= 0.0) {
            return bad("Rician factor must be nonnegative");
        }
        if !(self.eh_efficiency > 0.0 && self.eh_efficiency <= 1.0) {
            return bad("harvesting efficiency must lie in (0, 1]");
        }
        Ok(())
    }

    /// Source–destination distance.
    pub fn d_ds(&self) -> f64 {
        self.d_dr + self.d_rs
    }

    /// Coefficient converting received RF power into usable forwarding power.
    pub fn harvest_coeff(&self) -> f64 {
        self.eh_efficiency * self.rho
    }

    /// Fraction of the received signal routed to the information detector.
    pub fn id_fraction(&self) -> f64 {
        1.0 - self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        SystemParams { rho, ..self.clone() }
    }

    /// Place the relay at `ratio = d_DR / d_DS` on a link of total length `d_ds`.
    pub fn with_geometry(&self, d_ds: f64, ratio: f64) -> Self {
        SystemParams {
            d_dr: ratio * d_ds,
            d_rs: (1.0 - ratio) * d_ds,
            ..self.clone()
        }
    }
}

/// The three channel matrices; `h_dr` is always the transpose of `h_rd`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Source to relay, `r_relay × r`.
    pub h_rs: CMat,
    /// Destination to relay, `r_relay × r`.
    pub h_rd: CMat,
    /// Relay to destination, `r × r_relay`.
    pub h_dr: CMat,
}

impl ChannelSet {
    /// Build a channel set from the two drawn links, enforcing reciprocity.
    pub fn new(h_rs: CMat, h_rd: CMat) -> Result<Self> {
        if h_rs.shape() != h_rd.shape() {
            return Err(Error::DimensionMismatch(format!(
                "H_RS is {:?} but H_RD is {:?}",
                h_rs.shape(),
                h_rd.shape()
            )));
        }
        linalg::ensure_finite(&h_rs)?;
        linalg::ensure_finite(&h_rd)?;
        let h_dr = h_rd.transpose();
        Ok(ChannelSet { h_rs, h_rd, h_dr })
    }

    pub fn r(&self) -> usize {
        self.h_rs.ncols()
    }

    pub fn r_relay(&self) -> usize {
        self.h_rs.nrows()
    }

    pub fn check_dims(&self, params: &SystemParams) -> Result<()> {
        if self.r() != params.r || self.r_relay() != params.r_relay {
            return Err(Error::DimensionMismatch(format!(
                "channels are {}x{} but params expect r_relay={} r={}",
                self.r_relay(),
                self.r(),
                params.r_relay,
                params.r
            )));
        }
        Ok(())
    }
}

/// Transmit covariance of the destination's energy flow.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCovariance {
    pub q: CMat,
}

impl EnergyCovariance {
    pub fn zero(r: usize) -> Self {
        EnergyCovariance {
            q: linalg::zeros(r, r),
        }
    }

    pub fn trace(&self) -> f64 {
        self.q.trace().re
    }
}

/// Draw one Rician channel with path loss `d^{-3/2}` and an all-ones line-of-sight part.
pub fn gen_channel<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    d: f64,
    k: f64,
    rng: &mut R,
) -> Result<CMat> {
    if !(d > 0.0) {
        return Err(Error::InvalidDistance(d));
    }
    if !(k >= 0.0) {
        return Err(Error::InvalidParameter(format!("Rician factor {k}")));
    }
    let pl = d.powf(-AMPLITUDE_PATH_LOSS_EXP);
    let (los, nlos) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
    };
    let half = std::f64::consts::FRAC_1_SQRT_2;
    // Draw every entry even when the scattered part is switched off so the
    // stream position does not depend on K.
    Ok(CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(pl * (los + nlos * half * re), pl * nlos * half * im)
    }))
}

/// Draw `H_RS` and `H_RD` for the given geometry; `H_DR = H_RD^T`.
pub fn make_channel_set<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Result<ChannelSet> {
    params.validate()?;
    let h_rs = gen_channel(params.r_relay, params.r, params.d_rs, params.rician_k, rng)?;
    let h_rd = gen_channel(params.r_relay, params.r, params.d_dr, params.rician_k, rng)?;
    ChannelSet::new(h_rs, h_rd)
}

/// Rank-one energy beamformer along the strongest right singular vector of `H_RD`.
pub fn energy_beamformer_qd(h_rd: &CMat, p_dest: f64) -> Result<EnergyCovariance> {
    let r = h_rd.ncols();
    if h_rd.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::ZeroChannel);
    }
    if p_dest == 0.0 {
        return Ok(EnergyCovariance::zero(r));
    }
    let dec = linalg::svd(h_rd);
    let v = dec.v.column(0).into_owned();
    let q = (&v * v.adjoint()) * cr(p_dest);
    Ok(EnergyCovariance {
        q: linalg::hermitian_part(&q),
    })
}

/// Largest squared singular value of a channel matrix.
pub fn max_gain(h: &CMat) -> f64 {
    let s = linalg::svd(h).max_singular_value();
    s * s
}

/// Power collected by the relay's energy harvester.
pub fn harvested_power(channels: &ChannelSet, q_d: &EnergyCovariance, q_s: &CMat, rho: f64) -> f64 {
    let ef = &channels.h_rd * &q_d.q * channels.h_rd.adjoint();
    let info = &channels.h_rs * q_s * channels.h_rs.adjoint();
    (rho * (ef.trace().re + info.trace().re)).max(0.0)
}

const CHANNEL_HEADER: &str = "matrix,row,col,re,im";

/// Write a channel set as a columnar text file with one entry per line.
pub fn write_channels<W: Write>(mut w: W, ch: &ChannelSet) -> Result<()> {
    writeln!(w, "{CHANNEL_HEADER}")?;
    for (name, m) in [("H_RS", &ch.h_rs), ("H_RD", &ch.h_rd), ("H_DR", &ch.h_dr)] {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let z = m[(i, j)];
                writeln!(w, "{name},{i},{j},{},{}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}

/// Read a channel set written by [`write_channels`]; reciprocity is checked exactly.
pub fn read_channels<R: BufRead>(r: R) -> Result<ChannelSet> {
    let mut entries: Vec<(String, usize, usize, f64, f64)> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == CHANNEL_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 fields", lineno + 1)));
        }
        let p = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        let u = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        entries.push((f[0].to_string(), u(f[1])?, u(f[2])?, p(f[3])?, p(f[4])?));
    }
    let build = |name: &str| -> Result<CMat> {
        let mine: Vec<_> = entries.iter().filter(|e| e.0 == name).collect();
        if mine.is_empty() {
            return Err(Error::Parse(format!("missing matrix {name}")));
        }
        let rows = mine.iter().map(|e| e.1).max().unwrap() + 1;
        let cols = mine.iter().map(|e| e.2).max().unwrap() + 1;
        if mine.len() != rows * cols {
            return Err(Error::Parse(format!("matrix {name} is incomplete")));
        }
        let mut m = CMat::zeros(rows, cols);
        for e in mine {
            m[(e.1, e.2)] = c(e.3, e.4);
        }
        Ok(m)
    };
    let h_rs = build("H_RS")?;
    let h_rd = build("H_RD")?;
    let h_dr = build("H_DR")?;
    let set = ChannelSet::new(h_rs, h_rd)?;
    if set.h_dr != h_dr {
        return Err(Error::Parse("H_DR is not the transpose of H_RD".into()));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn los_only_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = gen_channel(3, 2, 4.0, f64::INFINITY, &mut rng).unwrap();
        let expect = 4.0f64.powf(-1.5);
        for z in h.iter() {
            assert!((z.re - expect).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
        // large finite K approaches the same limit
        let h = gen_channel(3, 2, 4.0, 1e12, &mut rng).unwrap();
        for z in h.iter() {
            assert!((z.re - expect).abs() < 1e-5 * expect);
        }
    }

    #[test]
    fn rejects_bad_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gen_channel(2, 2, 0.0, 0.0, &mut rng), Err(Error::InvalidDistance(0.0)));
        assert!(gen_channel(2, 2, -1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn reciprocity_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SystemParams::default();
        for _ in 0..20 {
            let ch = make_channel_set(&p, &mut rng).unwrap();
            assert_eq!(ch.h_dr, ch.h_rd.transpose());
        }
        let scalar = SystemParams {
            r: 1,
            r_relay: 1,
            ..p
        };
        let ch = make_channel_set(&scalar, &mut rng).unwrap();
        assert_eq!(ch.h_dr[(0, 0)].norm(), ch.h_rd[(0, 0)].norm());
    }

    #[test]
    fn beamformer_diagonal_case() {
        let h = linalg::diag_real(&[2.0, 1.0]);
        let q = energy_beamformer_qd(&h, 1.0).unwrap();
        assert!(linalg::fro(&(&q.q - linalg::diag_real(&[1.0, 0.0]))) < 1e-12);
        let got = (&h * &q.q * h.adjoint()).trace().re;
        assert!((got - 4.0).abs() < 1e-12);
        let q0 = energy_beamformer_qd(&h, 0.0).unwrap();
        assert_eq!(q0.q, linalg::zeros(2, 2));
        assert_eq!(
            energy_beamformer_qd(&linalg::zeros(2, 2), 1.0),
            Err(Error::ZeroChannel)
        );
    }

    #[test]
    fn harvested_power_scalar() {
        let one = linalg::from_real_rows(1, 1, &[1.0]);
        let ch = ChannelSet::new(one.clone(), one.clone()).unwrap();
        let qd = EnergyCovariance { q: one.clone() };
        assert!((harvested_power(&ch, &qd, &one, 0.5) - 1.0).abs() < 1e-15);
        assert_eq!(
            harvested_power(&ch, &EnergyCovariance::zero(1), &linalg::zeros(1, 1), 0.5),
            0.0
        );
    }

    #[test]
    fn channel_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SystemParams {
            r: 2,
            r_relay: 3,
            ..SystemParams::default()
        };
        let ch = make_channel_set(&p, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_channels(&mut buf, &ch).unwrap();
        let back = read_channels(buf.as_slice()).unwrap();
        assert_eq!(back, ch);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("matrix,row,col,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 6);
    }

    #[test]
    fn validate_rejects_bad_params() {
        let p = SystemParams::default();
        assert!(p.validate().is_ok());
        assert!(SystemParams { rho: 1.0, ..p.clone() }.validate().is_err());
        assert!(SystemParams { r_relay: 2, ..p.clone() }.validate().is_err());
        assert!(SystemParams { noise_power: 0.0, ..p.clone() }.validate().is_err());
        assert!(SystemParams { d_rs: 0.0, ..p }.validate().is_err());
    }
}
