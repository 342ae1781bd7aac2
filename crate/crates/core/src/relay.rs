//! Relay-matrix subproblem: a convex QCQP in `f = vec(F)` with one
//! ellipsoidal power constraint, solved in closed form up to a scalar
//! multiplier.

use crate::channel::{ChannelSet, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, CVec};
use crate::wmse::IterState;

/// `min f^H A1 f − 2 Re(f^H a1)  s.t.  f^H A2 f ≤ C_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayQcqp {
    pub a1: CMat,
    pub lin: CVec,
    pub a2: CMat,
    pub budget: f64,
}

impl RelayQcqp {
    pub fn objective(&self, f: &CVec) -> f64 {
        (f.adjoint() * &self.a1 * f)[(0, 0)].re - 2.0 * f.dotc(&self.lin).re
    }

    pub fn constraint(&self, f: &CVec) -> f64 {
        (f.adjoint() * &self.a2 * f)[(0, 0)].re
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayStep {
    pub f: CVec,
    /// Multiplier of the power constraint.
    pub xi: f64,
}

pub fn build_f_qcqp(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<RelayQcqp> {
    Ok(RelayFactors::build(st, ch, p)?.expand())
}

/// Solve the relay QCQP through its KKT conditions.
///
/// The unconstrained minimum-norm solution is used when it is feasible;
/// otherwise the multiplier is bisected on the generalized eigenbasis of
/// `(A1, A2)`, where the constraint function is a sum of decreasing terms.
pub fn solve_f_closed(q: &RelayQcqp) -> Result<RelayStep> {
    let n = q.lin.len();
    if q.budget < 0.0 {
        return Err(Error::InfeasibleBudget(q.budget));
    }
    let zero = RelayStep {
        f: CVec::zeros(n),
        xi: 0.0,
    };
    let lin_norm = q.lin.norm();
    if lin_norm == 0.0 {
        return Ok(zero);
    }

    let pinv = linalg::pinv(&q.a1, linalg::PINV_TOL);
    let f0 = &pinv * &q.lin;
    let in_range = (&q.a1 * &f0 - &q.lin).norm() <= 1e-8 * lin_norm;
    if in_range && q.constraint(&f0) < q.budget {
        return Ok(RelayStep { f: f0, xi: 0.0 });
    }
    if q.budget == 0.0 {
        // Only f = 0 is feasible; its multiplier is unbounded, report zero.
        return Ok(zero);
    }

    // A2 = L L^H, K = L^{-1} A1 L^{-H} = U Λ U^H, c = U^H L^{-1} a1.
    let chol = q.a2.clone().cholesky().ok_or(Error::NotHermitian(0.0))?;
    let l = chol.l();
    let mut k = q.a1.clone();
    l.solve_lower_triangular_mut(&mut k);
    let mut kt = k.adjoint();
    l.solve_lower_triangular_mut(&mut kt);
    let (lam, u) = linalg::eigh(&linalg::hermitian_part(&kt));
    let mut la1 = q.lin.clone();
    l.solve_lower_triangular_mut(&mut la1);
    let coef = u.adjoint() * la1;
    let w2: Vec<f64> = coef.iter().map(|z| z.norm_sqr()).collect();
    let lam: Vec<f64> = lam.iter().map(|v| v.max(0.0)).collect();
    let xi = bisect_multiplier(&w2, &lam, q.budget)?;
    let scaled = CVec::from_iterator(n, coef.iter().zip(&lam).map(|(c, l)| c / (l + xi)));
    let mut f = u * scaled;
    l.adjoint().solve_upper_triangular_mut(&mut f);
    Ok(RelayStep { f, xi })
}

/// Root of `Σ w_k / (λ_k + ξ)² = budget` for `ξ > 0`, approached from the
/// feasible side. The left side is strictly decreasing in `ξ`.
fn bisect_multiplier(w2: &[f64], lam: &[f64], budget: f64) -> Result<f64> {
    let g = |xi: f64| -> f64 { w2.iter().zip(lam).map(|(w, l)| w / (l + xi).powi(2)).sum() };
    let mut hi = 1.0;
    while g(hi) >= budget {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InfeasibleBudget(budget));
        }
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    loop {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi || (g(hi) - budget).abs() <= 1e-10 * budget {
            return Ok(hi);
        }
    }
}

/// Relay QCQP kept in Kronecker-factored form:
/// `A1 = P^T ⊗ M`, `a1 = vec(N)`, `A2 = R^T ⊗ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayFactors {
    pub m: CMat,
    pub p: CMat,
    pub n: CMat,
    pub r: CMat,
    pub budget: f64,
}

impl RelayFactors {
    pub fn build(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<Self> {
        st.check_dims(ch)?;
        let rr = ch.r_relay();
        let wa = &st.w * &st.a0;
        let m = linalg::hermitian_part(&(ch.h_dr.adjoint() * &wa * st.w.adjoint() * &ch.h_dr));
        let src = &ch.h_rs * st.q_s() * ch.h_rs.adjoint() * cr(1.0 - p.rho);
        let pm = linalg::hermitian_part(&(src + linalg::identity(rr) * cr(p.noise_power)));
        let n = ch.h_dr.adjoint() * &wa * st.b_s.adjoint() * ch.h_rs.adjoint() * cr((1.0 - p.rho).sqrt());
        let r = crate::wmse::relay_rx_covariance(st, ch, p);
        let budget = p.harvest_coeff()
            * (linalg::re_trace_prod(&(&ch.h_rd * &st.q_d.q), &ch.h_rd.adjoint())
                + linalg::re_trace_prod(&(&ch.h_rs * st.q_s()), &ch.h_rs.adjoint()));
        Ok(RelayFactors {
            m,
            p: pm,
            n,
            r,
            budget: budget.max(0.0),
        })
    }

    /// The same problem with explicit Kronecker products.
    pub fn expand(&self) -> RelayQcqp {
        let k = self.m.nrows();
        RelayQcqp {
            a1: linalg::hermitian_part(&linalg::kron(&self.p.transpose(), &self.m)),
            lin: linalg::vec(&self.n),
            a2: linalg::hermitian_part(&linalg::kron(&self.r.transpose(), &linalg::identity(k))),
            budget: self.budget,
        }
    }

    /// Same contract as [`solve_f_closed`], working on `k × k` factors only.
    pub fn solve(&self) -> Result<(CMat, f64)> {
        let k = self.m.nrows();
        if self.budget < 0.0 {
            return Err(Error::InfeasibleBudget(self.budget));
        }
        let nn = linalg::fro(&self.n);
        if nn == 0.0 {
            return Ok((CMat::zeros(k, k), 0.0));
        }
        // Minimum-norm unconstrained solution in the eigenbases of M and P.
        let (ml, mu) = linalg::eigh(&self.m);
        let (pl, pu) = linalg::eigh(&self.p);
        let thr = linalg::PINV_TOL
            * ml.iter().fold(0.0f64, |a, v| a.max(v.abs()))
            * pl.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let nh = mu.adjoint() * &self.n * &pu;
        let mut y = CMat::zeros(k, k);
        let mut outside = 0.0;
        for i in 0..k {
            for j in 0..k {
                let d = ml[i] * pl[j];
                if d.abs() > thr {
                    y[(i, j)] = nh[(i, j)] / d;
                } else {
                    outside += nh[(i, j)].norm_sqr();
                }
            }
        }
        let f0 = &mu * y * pu.adjoint();
        let in_range = outside.sqrt() <= 1e-8 * nn;
        let used = linalg::re_trace_prod(&(&f0 * &self.r), &f0.adjoint());
        if in_range && used < self.budget {
            return Ok((f0, 0.0));
        }
        if self.budget == 0.0 {
            return Ok((CMat::zeros(k, k), 0.0));
        }
        // F = Y L^{-1} with R = L L^H turns the constraint into ‖Y‖² and the
        // stationarity condition into M Y T + ξ Y = N L^{-H}, T = L^{-1} P L^{-H}.
        let chol = self.r.clone().cholesky().ok_or(Error::NotHermitian(0.0))?;
        let l = chol.l();
        let mut t = self.p.clone();
        l.solve_lower_triangular_mut(&mut t);
        let mut tt = t.adjoint();
        l.solve_lower_triangular_mut(&mut tt);
        let (tl, tu) = linalg::eigh(&linalg::hermitian_part(&tt));
        let mut n2 = self.n.adjoint();
        l.solve_lower_triangular_mut(&mut n2);
        let nh = mu.adjoint() * n2.adjoint() * &tu;
        let mut w2 = Vec::with_capacity(k * k);
        let mut lam = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                w2.push(nh[(i, j)].norm_sqr());
                lam.push((ml[i] * tl[j]).max(0.0));
            }
        }
        let xi = bisect_multiplier(&w2, &lam, self.budget)?;
        let yh = CMat::from_fn(k, k, |i, j| nh[(i, j)] / ((ml[i] * tl[j]).max(0.0) + xi));
        let y = &mu * yh * tu.adjoint();
        // F = Y L^{-1}  ⇔  L^H F^H = Y^H
        let mut fh = y.adjoint();
        l.adjoint().solve_upper_triangular_mut(&mut fh);
        Ok((fh.adjoint(), xi))
    }
}

/// Relay update for the current iterate.
pub fn relay_step(st: &IterState, ch: &ChannelSet, p: &SystemParams) -> Result<CMat> {
    Ok(RelayFactors::build(st, ch, p)?.solve()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    fn unit_problem(a: f64, budget: f64) -> RelayQcqp {
        let mut lin = CVec::zeros(2);
        lin[0] = cr(a);
        RelayQcqp {
            a1: identity(2),
            lin,
            a2: identity(2),
            budget,
        }
    }

    #[test]
    fn zero_linear_term() {
        let mut q = unit_problem(0.0, 1.0);
        q.lin = CVec::zeros(2);
        let s = solve_f_closed(&q).unwrap();
        assert_eq!(s.f, CVec::zeros(2));
        assert_eq!(s.xi, 0.0);
    }

    #[test]
    fn inactive_constraint() {
        let s = solve_f_closed(&unit_problem(1.0, 4.0)).unwrap();
        assert!((s.f[0] - cr(1.0)).norm() < 1e-14 && s.f[1].norm() < 1e-14);
        assert_eq!(s.xi, 0.0);
    }

    #[test]
    fn active_constraint() {
        let s = solve_f_closed(&unit_problem(2.0, 1.0)).unwrap();
        assert!((s.xi - 1.0).abs() < 1e-9);
        assert!((s.f[0] - cr(1.0)).norm() < 1e-9 && s.f[1].norm() < 1e-12);
    }

    #[test]
    fn negative_budget_is_rejected() {
        let mut q = unit_problem(1.0, 1.0);
        q.budget = -1e-3;
        assert!(matches!(solve_f_closed(&q), Err(Error::InfeasibleBudget(_))));
    }

    #[test]
    fn factored_solver_matches_expanded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut rand_c = |k: usize| CMat::from_fn(k, k, |_, _| crate::linalg::c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        for (k, budget) in [(2, 0.05), (3, 10.0), (3, 0.01)] {
            let g = rand_c(k);
            let h = rand_c(k);
            let q = rand_c(k);
            let fac = RelayFactors {
                m: &g * g.adjoint(),
                p: &h * h.adjoint() + identity(k) * cr(0.1),
                n: rand_c(k),
                r: &q * q.adjoint() + identity(k) * cr(0.2),
                budget,
            };
            let (f, xi) = fac.solve().unwrap();
            let s = solve_f_closed(&fac.expand()).unwrap();
            assert!((linalg::vec(&f) - &s.f).norm() < 1e-9 * (1.0 + s.f.norm()));
            assert!((xi - s.xi).abs() < 1e-8 * (1.0 + s.xi));
        }
    }

    #[test]
    fn singular_quadratic_uses_multiplier() {
        // a1 outside range(A1): the unconstrained problem is unbounded.
        let mut q = unit_problem(0.0, 0.5);
        q.a1[(1, 1)] = cr(0.0);
        q.lin[1] = cr(1.0);
        let s = solve_f_closed(&q).unwrap();
        assert!(s.xi > 0.0);
        assert!((q.constraint(&s.f) - 0.5).abs() < 1e-9);
    }
}
