//! Source-precoder subproblem: a nonconvex QCQP in `b = vec(B_S)` solved
//! exactly through homogenization, semidefinite relaxation and rank reduction.

use crate::channel::{ChannelSet, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, CMat, CVec, RMat};
use crate::sdp::{self, SdpOptions, SdpProblem, SdpSolution, SdpStatus};
use crate::wmse::IterState;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// factoring the relaxed solution.
pub const RANK_TOL: f64 = 1e-9;

/// Second-to-first eigenvalue ratio accepted as rank one.
pub const RANK1_TOL: f64 = 1e-6;

/// `min b^H A3 b − 2 Re(b^H a2)  s.t.  b^H A4 b ≤ C_b,  b^H b ≤ P_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceQcqp {
    pub a3: CMat,
    pub a2: CVec,
    pub a4: CMat,
    pub c_b: f64,
    pub p_s: f64,
}

impl SourceQcqp {
    pub fn objective(&self, b: &CVec) -> f64 {
        (b.adjoint() * &self.a3 * b)[(0, 0)].re - 2.0 * b.dotc(&self.a2).re
    }

    pub fn relay_constraint(&self, b: &CVec) -> f64 {
        (b.adjoint() * &self.a4 * b)[(0, 0)].re
    }
}

/// The homogenized problem over `Φ = [b'; t][b'; t]^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedSdp {
    pub b1: CMat,
    pub b2: CMat,
    pub b3: CMat,
    pub b4: CMat,
    pub c_b: f64,
    pub p_s: f64,
}

impl HomogenizedSdp {
    pub fn dim(&self) -> usize {
        self.b1.nrows()
    }

    pub fn to_sdp(&self) -> Result<SdpProblem> {
        SdpProblem::new(
            self.b1.clone(),
            vec![(self.b2.clone(), self.c_b), (self.b3.clone(), self.p_s)],
            vec![(self.b4.clone(), 1.0)],
        )
    }

    /// `[Tr{B2 X}, Tr{B3 X}, Tr{B4 X}]`.
    pub fn constraint_traces(&self, x: &CMat) -> [f64; 3] {
        [
            linalg::re_trace_prod(&self.b2, x),
            linalg::re_trace_prod(&self.b3, x),
            linalg::re_trace_prod(&self.b4, x),
        ]
    }
}

/// One rank-reduction update.
#[derive(Debug, Clone, PartialEq)]
pub struct RankStep {
    pub rank_before: usize,
    pub rank_after: usize,
    pub traces_before: [f64; 3],
    pub traces_after: [f64; 3],
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Certificate {
    pub x: CMat,
    pub rank_estimate: usize,
    pub constraint_traces: [f64; 3],
    pub objective: f64,
    pub steps: Vec<RankStep>,
}

/// The source QCQP in factored form: `A3 = I ⊗ K`, `a2 = vec(N)`, `A4 = I ⊗ K4`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFactors {
    pub k: CMat,
    pub n: CMat,
    pub k4: CMat,
    pub c_b: f64,
    pub p_s: f64,
}

/// Optimum of the source QCQP recovered from its two-multiplier dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub b_s: CMat,
    /// Multiplier of the relay-power constraint.
    pub lambda_relay: f64,
    /// Multiplier of the source-power constraint.
    pub lambda_power: f64,
    /// Primal objective minus dual value.
    pub gap: f64,
}

impl SourceFactors {
    pub fn build(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<Self> {
        st.check_dims(ch)?;
        // G = H_RS^H F^H H_DR^H W
        let g = ch.h_rs.adjoint() * st.f.adjoint() * ch.h_dr.adjoint() * &st.w;
        let k = linalg::hermitian_part(&(&g * &st.a0 * g.adjoint() * cr(1.0 - p.rho)));
        let n = &g * &st.a0 * cr((1.0 - p.rho).sqrt());
        let fh = &st.f * &ch.h_rs;
        let hh = ch.h_rs.adjoint() * &ch.h_rs;
        let k4 = linalg::hermitian_part(&(fh.adjoint() * &fh * cr(1.0 - p.rho) - hh * cr(p.harvest_coeff())));
        let ef = &ch.h_rd * &st.q_d.q * ch.h_rd.adjoint();
        let c_b = p.harvest_coeff() * ef.trace().re
            - (1.0 - p.rho) * linalg::re_trace_prod(&(&st.f * &ef), &st.f.adjoint())
            - p.noise_power * linalg::fro(&st.f).powi(2);
        Ok(SourceFactors {
            k,
            n,
            k4,
            c_b,
            p_s: p.p_source,
        })
    }

    pub fn expand(&self) -> SourceQcqp {
        let id = linalg::identity(self.k.nrows());
        SourceQcqp {
            a3: linalg::kron(&id, &self.k),
            a2: linalg::vec(&self.n),
            a4: linalg::kron(&id, &self.k4),
            c_b: self.c_b,
            p_s: self.p_s,
        }
    }

    pub fn objective(&self, b: &CMat) -> f64 {
        linalg::re_trace_prod(&(b.adjoint() * &self.k), b) - 2.0 * linalg::re_trace_prod(&b.adjoint(), &self.n)
    }

    pub fn relay_use(&self, b: &CMat) -> f64 {
        linalg::re_trace_prod(&(b.adjoint() * &self.k4), b)
    }

    /// For a fixed relay multiplier, maximize the dual over the power
    /// multiplier (a trust-region secular equation) and return
    /// `(λ_power, B, relay constraint residual)`.
    fn inner(&self, l2: f64) -> Option<(f64, CMat, f64)> {
        let m = &self.k + &self.k4 * cr(l2);
        let (mu, u) = linalg::eigh(&linalg::hermitian_part(&m));
        let nt = u.adjoint() * &self.n;
        let om: Vec<f64> = (0..mu.len()).map(|i| nt.row(i).norm_squared()).collect();
        let total: f64 = om.iter().sum();
        let scale = mu.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        // Modes of M that are singular at multiplier l3 and carry no part of N
        // are dropped, which picks the minimum-norm minimizer.
        let live = |k: usize, l3: f64| mu[k] + l3 > 1e-12 * scale || om[k] > 1e-24 * total;
        let norm2 = |l3: f64| -> f64 {
            (0..mu.len())
                .filter(|&k| live(k, l3))
                .map(|k| om[k] / (mu[k] + l3).powi(2))
                .sum()
        };
        let lo = if -mu[0] <= 1e-12 * scale { 0.0 } else { -mu[0] };
        let singular_at_lo = (0..mu.len()).any(|k| mu[k] + lo <= 1e-12 * scale);
        let weighted_singular = (0..mu.len()).any(|k| mu[k] + lo <= 1e-12 * scale && live(k, lo));
        let l3 = if !weighted_singular && norm2(lo) <= self.p_s {
            if lo > 0.0 && singular_at_lo {
                // The power constraint would need a null-space component: hard case.
                return None;
            }
            lo
        } else {
            let mut lo = lo;
            let mut hi = (total / self.p_s).sqrt() - mu[0];
            if !(hi > lo) {
                hi = lo + scale.max(1.0);
            }
            while norm2(hi) > self.p_s {
                hi = lo + 2.0 * (hi - lo);
            }
            // Bisection on the decreasing function ‖B(λ)‖² − P_S, finishing
            // on the feasible side.
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if norm2(mid) > self.p_s {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            hi
        };
        let d = CMat::from_fn(mu.len(), nt.ncols(), |i, j| {
            if live(i, l3) {
                nt[(i, j)] / (mu[i] + l3)
            } else {
                cr(0.0)
            }
        });
        let b = u * d;
        let g2 = self.relay_use(&b) - self.c_b;
        Some((l3, b, g2))
    }

    /// Solve the QCQP exactly through its Lagrangian dual. Returns `None` in
    /// the degenerate case where the optimal dual Hessian is singular and the
    /// primal point cannot be read off the multipliers.
    pub fn solve_dual(&self) -> Option<DualSolution> {
        let r = self.k.nrows();
        if self.p_s <= 0.0 {
            return None;
        }
        let (mut l3, mut b, g0) = self.inner(0.0)?;
        let mut l2 = 0.0;
        if g0 > 0.0 {
            // The relay constraint binds: the dual derivative in λ_relay is
            // decreasing, so bracket its root and bisect.
            let kn = linalg::fro(&self.k);
            let k4n = linalg::fro(&self.k4);
            if k4n == 0.0 {
                return None;
            }
            let mut lo = 0.0;
            let mut hi = (kn / k4n).max(1e-300);
            let mut at_hi = self.inner(hi)?;
            let mut doublings = 0;
            while !(at_hi.2 <= 0.0) {
                lo = hi;
                hi *= 2.0;
                doublings += 1;
                if doublings > 200 || !hi.is_finite() {
                    return None;
                }
                at_hi = self.inner(hi)?;
            }
            // Illinois regula falsi, falling back to bisection when the
            // bracket stalls; the feasible end is kept.
            let (mut f_lo, mut f_hi) = (g0, at_hi.2);
            let tol = 1e-13 * (self.c_b.abs() + k4n * self.p_s);
            let mut side = 0;
            let mut width_ref = hi - lo;
            for it in 0..200 {
                let stalled = it % 3 == 2 && hi - lo > 0.5 * width_ref;
                if it % 3 == 2 {
                    width_ref = hi - lo;
                }
                let mut x = if stalled {
                    0.5 * (lo + hi)
                } else {
                    (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
                };
                if !(x > lo && x < hi) {
                    x = 0.5 * (lo + hi);
                    if x <= lo || x >= hi {
                        break;
                    }
                }
                let at = self.inner(x)?;
                if at.2 > 0.0 {
                    lo = x;
                    f_lo = at.2;
                    if side == -1 {
                        f_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = x;
                    f_hi = at.2;
                    at_hi = at;
                    if side == 1 {
                        f_lo *= 0.5;
                    }
                    side = 1;
                }
                if hi - lo <= 1e-15 * hi || -at_hi.2 <= tol {
                    break;
                }
            }
            l2 = hi;
            l3 = at_hi.0;
            b = at_hi.1;
        }
        let primal = self.objective(&b);
        let used_p = linalg::fro(&b).powi(2);
        let dual = primal + l2 * (self.relay_use(&b) - self.c_b) + l3 * (used_p - self.p_s);
        debug_assert_eq!(b.shape(), (r, r));
        Some(DualSolution {
            b_s: b,
            lambda_relay: l2,
            lambda_power: l3,
            gap: primal - dual,
        })
    }
}

pub fn build_b_qcqp(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<SourceQcqp> {
    Ok(SourceFactors::build(st, ch, p)?.expand())
}

pub fn homogenize(q: &SourceQcqp) -> HomogenizedSdp {
    let n = q.a2.len();
    let mut b1 = CMat::zeros(n + 1, n + 1);
    b1.view_mut((0, 0), (n, n)).copy_from(&q.a3);
    for i in 0..n {
        b1[(i, n)] = -q.a2[i];
        b1[(n, i)] = -q.a2[i].conj();
    }
    let mut b2 = CMat::zeros(n + 1, n + 1);
    b2.view_mut((0, 0), (n, n)).copy_from(&q.a4);
    let mut b3 = CMat::zeros(n + 1, n + 1);
    for i in 0..n {
        b3[(i, i)] = cr(1.0);
    }
    let mut b4 = CMat::zeros(n + 1, n + 1);
    b4[(n, n)] = cr(1.0);
    HomogenizedSdp {
        b1,
        b2,
        b3,
        b4,
        c_b: q.c_b,
        p_s: q.p_s,
    }
}

/// `X = V V^H` keeping eigenvalues above `RANK_TOL · λ_max`.
fn factor(x: &CMat) -> CMat {
    let (lam, u) = linalg::eigh(x);
    let top = lam.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > RANK_TOL * top && lam[i] > 0.0).collect();
    let mut v = CMat::zeros(x.nrows(), keep.len());
    for (k, &i) in keep.iter().enumerate() {
        v.set_column(k, &(u.column(i) * cr(lam[i].sqrt())));
    }
    v
}

/// Real coordinates of `Tr{M Δ}` over the Hermitian basis
/// `{E_ii} ∪ {E_ij + E_ji} ∪ {i(E_ij − E_ji)}`.
fn trace_row(m: &CMat) -> Vec<f64> {
    let r = m.nrows();
    let mut row = Vec::with_capacity(r * r);
    for i in 0..r {
        row.push(m[(i, i)].re);
    }
    for i in 0..r {
        for j in i + 1..r {
            row.push(2.0 * m[(i, j)].re);
            row.push(2.0 * m[(i, j)].im);
        }
    }
    row
}

fn basis_to_hermitian(x: &[f64], r: usize) -> CMat {
    let mut d = CMat::zeros(r, r);
    for i in 0..r {
        d[(i, i)] = cr(x[i]);
    }
    let mut k = r;
    for i in 0..r {
        for j in i + 1..r {
            let z = c(x[k], x[k + 1]);
            d[(i, j)] = z;
            d[(j, i)] = z.conj();
            k += 2;
        }
    }
    d
}

/// Null direction of the stacked trace equations, sign-normalized.
fn null_direction(rows: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    let mut a = RMat::zeros(rows.len(), dim);
    for (i, row) in rows.iter().enumerate() {
        let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for j in 0..dim {
                a[(i, j)] = row[j] / nrm;
            }
        }
    }
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let (idx, &lo) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    if lo > 1e-12 {
        return None;
    }
    let mut x: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
    let big = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-9 * big) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Some(x)
}

/// Reduce a relaxed optimum to rank one while keeping the three constraint
/// traces and the objective.
pub fn recover_rank1(x: &CMat, h: &HomogenizedSdp) -> Result<Rank1Certificate> {
    let n = h.dim();
    if x.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "relaxed solution is {:?}, expected {n}x{n}",
            x.shape()
        )));
    }
    let mut v = factor(&linalg::hermitian_part(x));
    let mut steps = Vec::new();
    let max_steps = n;
    while v.ncols() > 1 {
        if steps.len() >= max_steps {
            return Err(Error::MaxIterations(steps.len()));
        }
        let rk = v.ncols();
        let xv = &v * v.adjoint();
        let traces_before = h.constraint_traces(&xv);
        let objective_before = linalg::re_trace_prod(&h.b1, &xv);
        let rows: Vec<Vec<f64>> = [&h.b2, &h.b3, &h.b4]
            .iter()
            .map(|b| trace_row(&(v.adjoint() * *b * &v)))
            .collect();
        let coef = null_direction(&rows, rk * rk).ok_or(Error::NoNullDirection(rk))?;
        let delta = basis_to_hermitian(&coef, rk);
        let (dl, _) = linalg::eigh(&delta);
        let d0 = dl
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if d0 == 0.0 {
            return Err(Error::NoNullDirection(rk));
        }
        let shrink = linalg::identity(rk) - delta * cr(1.0 / d0);
        let (sl, su) = linalg::eigh(&linalg::hermitian_part(&shrink));
        let top = sl.last().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..rk).filter(|&i| sl[i] > 1e-10 * top.max(1.0)).collect();
        let mut nv = CMat::zeros(n, keep.len());
        for (k, &i) in keep.iter().enumerate() {
            nv.set_column(k, &(&v * su.column(i) * cr(sl[i].sqrt())));
        }
        v = nv;
        let xa = &v * v.adjoint();
        steps.push(RankStep {
            rank_before: rk,
            rank_after: v.ncols(),
            traces_before,
            traces_after: h.constraint_traces(&xa),
            objective_before,
            objective_after: linalg::re_trace_prod(&h.b1, &xa),
        });
    }
    let xo = &v * v.adjoint();
    Ok(Rank1Certificate {
        rank_estimate: v.ncols(),
        constraint_traces: h.constraint_traces(&xo),
        objective: linalg::re_trace_prod(&h.b1, &xo),
        x: xo,
        steps,
    })
}

/// `b = b'/t` from the dominant eigenpair of a rank-one certificate.
pub fn extract_b(cert: &Rank1Certificate) -> Result<CVec> {
    let x = &cert.x;
    let n = x.nrows();
    let (lam, u) = linalg::eigh(x);
    let l1 = lam[n - 1];
    let l2 = if n > 1 { lam[n - 2] } else { 0.0 };
    if !(l1 > 0.0) {
        return Err(Error::NotRank1(f64::INFINITY));
    }
    if l2 > RANK1_TOL * l1 {
        return Err(Error::NotRank1(l2 / l1));
    }
    let top = u.column(n - 1).into_owned() * cr(l1.sqrt());
    let t = top[n - 1];
    if t.norm() < 1e-12 * top.norm() {
        return Err(Error::Infeasible("homogenizing coordinate vanished".into()));
    }
    Ok(CVec::from_iterator(n - 1, top.iter().take(n - 1).map(|z| z / t)))
}

/// Everything produced by one source update.
#[derive(Debug, Clone)]
pub struct SourceStep {
    pub b_s: CMat,
    pub qcqp: SourceQcqp,
    pub sdp: SdpSolution,
    pub certificate: Rank1Certificate,
}

pub fn source_step(
    st: &IterState,
    ch: &ChannelSet,
    p: &SystemParams,
    opts: &SdpOptions,
) -> Result<SourceStep> {
    let q = build_b_qcqp(st, ch, p)?;
    let h = homogenize(&q);
    let problem = h.to_sdp()?;
    let sol = sdp::solve_sdp(&problem, opts);
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Err(Error::SdpInfeasible),
        SdpStatus::MaxIter => return Err(Error::MaxIterations(sol.iterations)),
    }
    let certificate = recover_rank1(&sol.x, &h)?;
    let b = extract_b(&certificate)?;
    let r = ch.r();
    Ok(SourceStep {
        b_s: linalg::unvec(&b, r, r),
        qcqp: q,
        sdp: sol,
        certificate,
    })
}

/// How the source subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceSolver {
    /// Two-multiplier Lagrangian dual, falling back to the relaxation in the
    /// degenerate case.
    #[default]
    Dual,
    /// Semidefinite relaxation followed by rank-one reduction.
    Sdr,
}

/// New source precoder for the current `(A0, W, F)`.
pub fn update_b(
    st: &IterState,
    ch: &ChannelSet,
    p: &SystemParams,
    solver: SourceSolver,
    opts: &SdpOptions,
) -> Result<CMat> {
    if solver == SourceSolver::Dual {
        let factors = SourceFactors::build(st, ch, p)?;
        if let Some(sol) = factors.solve_dual() {
            return Ok(sol.b_s);
        }
    }
    Ok(source_step(st, ch, p, opts)?.b_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    fn tiny() -> SourceQcqp {
        SourceQcqp {
            a3: identity(2),
            a2: CVec::from_vec(vec![c(1.0, 0.5), cr(-0.3)]),
            a4: crate::linalg::diag_real(&[1.0, -1.0]),
            c_b: 0.2,
            p_s: 1.0,
        }
    }

    fn phi(bp: &CVec, t: crate::linalg::CVec) -> CMat {
        let mut v = CVec::zeros(bp.len() + 1);
        v.rows_mut(0, bp.len()).copy_from(bp);
        v[bp.len()] = t[0];
        &v * v.adjoint()
    }

    #[test]
    fn selectors() {
        let h = homogenize(&tiny());
        let bp = CVec::from_vec(vec![c(0.3, -0.2), c(0.1, 0.7)]);
        let t = CVec::from_vec(vec![c(0.6, 0.8)]);
        let x = phi(&bp, t);
        let tr = h.constraint_traces(&x);
        assert!((tr[2] - 1.0).abs() < 1e-14);
        assert!((tr[1] - bp.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn rank_one_input_unchanged() {
        let h = homogenize(&tiny());
        let bp = CVec::from_vec(vec![c(0.3, -0.2), c(0.1, 0.7)]);
        let x = phi(&bp, CVec::from_vec(vec![cr(1.0)]));
        let cert = recover_rank1(&x, &h).unwrap();
        assert!(cert.steps.is_empty());
        assert_eq!(cert.rank_estimate, 1);
        let b = extract_b(&cert).unwrap();
        assert!((b - bp).norm() < 1e-12);
    }

    #[test]
    fn extraction_ignores_global_phase() {
        let bp = CVec::from_vec(vec![c(0.3, -0.2), c(0.1, 0.7)]);
        for theta in [0.0f64, 0.7, 2.5, -1.9] {
            let t = c(theta.cos(), theta.sin());
            let x = phi(&(&bp * t), CVec::from_vec(vec![t]));
            let cert = Rank1Certificate {
                x,
                rank_estimate: 1,
                constraint_traces: [0.0; 3],
                objective: 0.0,
                steps: vec![],
            };
            assert!((extract_b(&cert).unwrap() - &bp).norm() < 1e-12);
        }
    }

    #[test]
    fn rank_two_reduces_in_one_step() {
        let h = homogenize(&tiny());
        let v1 = CVec::from_vec(vec![c(0.3, 0.1), cr(0.2), cr(0.7)]);
        let v2 = CVec::from_vec(vec![cr(-0.1), c(0.4, -0.2), cr(0.7)]);
        let x = &v1 * v1.adjoint() + &v2 * v2.adjoint();
        let cert = recover_rank1(&x, &h).unwrap();
        assert_eq!(cert.rank_estimate, 1);
        let s = &cert.steps[0];
        for k in 0..3 {
            assert!((s.traces_before[k] - s.traces_after[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_relay_makes_trivial_source_problem() {
        use crate::channel::EnergyCovariance;
        let p = SystemParams {
            r: 2,
            r_relay: 2,
            ..SystemParams::default()
        };
        let h = crate::linalg::from_real_rows(2, 2, &[1.0, 0.5, -0.2, 0.8]);
        let ch = ChannelSet::new(h.clone(), h.clone()).unwrap();
        let st = IterState {
            a0: identity(2),
            w: identity(2),
            f: CMat::zeros(2, 2),
            b_s: identity(2),
            q_d: EnergyCovariance::zero(2),
        };
        let q = build_b_qcqp(&st, &ch, &p).unwrap();
        assert_eq!(q.a3, CMat::zeros(4, 4));
        assert_eq!(q.a2, CVec::zeros(4));
        assert_eq!(q.c_b, 0.0);
        let expect = linalg::kron(&identity(2), &(h.adjoint() * &h * cr(-p.rho)));
        assert!((q.a4 - expect).norm() < 1e-14);
    }

    #[test]
    fn dual_matches_relaxation() {
        use rand::SeedableRng;
        for seed in 0..4 {
            let p = SystemParams {
                r: 2,
                r_relay: 3,
                rho: 0.2 + 0.15 * seed as f64,
                ..SystemParams::default()
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ch = crate::channel::make_channel_set(&p, &mut rng).unwrap();
            let mut st = crate::joint::initialize_state(&ch, &p, crate::joint::OptScheme::EfaOpt).unwrap();
            st.f = crate::relay::relay_step(&st, &ch, &p).unwrap();
            let fac = SourceFactors::build(&st, &ch, &p).unwrap();
            let q = build_b_qcqp(&st, &ch, &p).unwrap();
            assert_eq!(fac.expand(), q);
            let d = fac.solve_dual().unwrap();
            let s = source_step(&st, &ch, &p, &SdpOptions::default()).unwrap();
            let (od, os) = (fac.objective(&d.b_s), fac.objective(&s.b_s));
            assert!((od - os).abs() <= 1e-8 * os.abs(), "{od} vs {os}");
            assert!((od - q.objective(&linalg::vec(&d.b_s))).abs() < 1e-12 * od.abs());
            assert!(fac.relay_use(&d.b_s) <= fac.c_b + 1e-12 * fac.c_b.abs());
            assert!(linalg::fro(&d.b_s).powi(2) <= p.p_source * (1.0 + 1e-12));
            assert!(d.gap.abs() < 1e-12);
        }
    }

    #[test]
    fn dual_with_no_signal_term() {
        let fac = SourceFactors {
            k: identity(2),
            n: CMat::zeros(2, 2),
            k4: identity(2),
            c_b: 1.0,
            p_s: 1.0,
        };
        let d = fac.solve_dual().unwrap();
        assert_eq!(d.b_s, CMat::zeros(2, 2));
        let infeasible_origin = SourceFactors { c_b: -1.0, ..fac };
        assert!(infeasible_origin.solve_dual().is_none());
    }
}
