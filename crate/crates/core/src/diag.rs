//! Channel-diagonalized power allocation for `r = r_R`: the two simplified
//! energy-flow schemes (S1, S2) and the simplified scheme without energy flow.

use crate::channel::{self, ChannelSet, EnergyCovariance, SystemParams};
use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMat, RMat, RVec};
use crate::wmse::{self, IterState};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

const BISECT_REL_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;

/// Decomposition that couples the relay's receive and transmit eigenmodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagDecomposition {
    /// `H_DR = U_DR Σ_DR V_DR^H`, columns ordered by ascending singular value.
    pub u_dr: CMat,
    pub sigma_dr: Vec<f64>,
    pub v_dr: CMat,
    /// Squared singular values of `H_DR`, ascending.
    pub lambda_dr: Vec<f64>,
    /// Receive basis at the relay, `conj(V_DR)`.
    pub u_rs: CMat,
    /// `(Ũ_RS^H H_RS)^{-1}`.
    pub h_e: CMat,
    /// Squared column norms of `h_e`.
    pub he_norms2: Vec<f64>,
    /// Pairing of leakage positions to relay modes; the identity once ordered.
    pub perm: Vec<usize>,
    pub lambda_dr_max: f64,
}

pub fn hpm_plm_decompose(ch: &ChannelSet, p: &SystemParams) -> Result<DiagDecomposition> {
    ch.check_dims(p)?;
    let r = ch.r();
    if ch.r_relay() != r {
        return Err(Error::DimensionMismatch(format!(
            "diagonalized schemes need r_relay = r, got {} and {r}",
            ch.r_relay()
        )));
    }
    let dec = linalg::svd(&ch.h_dr);
    let smax = dec.max_singular_value();
    let smin = *dec.singular_values.last().unwrap_or(&0.0);
    if !(smin > RANK_TOL * smax) {
        return Err(Error::RankDeficient(if smax > 0.0 { smin / smax } else { 0.0 }));
    }
    let mut u_dr = CMat::zeros(r, r);
    let mut v_dr = CMat::zeros(r, r);
    let mut sigma_dr = Vec::with_capacity(r);
    for (dst, src) in (0..r).rev().enumerate() {
        u_dr.set_column(dst, &dec.u.column(src));
        v_dr.set_column(dst, &dec.v.column(src));
        sigma_dr.push(dec.singular_values[src]);
    }
    let lambda_dr: Vec<f64> = sigma_dr.iter().map(|s| s * s).collect();
    let u_rs = v_dr.map(|z| z.conj());
    let eff = u_rs.adjoint() * &ch.h_rs;
    let s_eff = linalg::svd(&eff).singular_values;
    let (emax, emin) = (s_eff[0], s_eff[r - 1]);
    if !(emin > RANK_TOL * emax) {
        return Err(Error::RankDeficient(if emax > 0.0 { emin / emax } else { 0.0 }));
    }
    let h_e = eff.try_inverse().ok_or(Error::RankDeficient(0.0))?;
    let he_norms2 = (0..r).map(|m| h_e.column(m).norm_squared()).collect();
    Ok(DiagDecomposition {
        u_dr,
        sigma_dr,
        v_dr,
        lambda_dr_max: lambda_dr[r - 1],
        lambda_dr,
        u_rs,
        h_e,
        he_norms2,
        perm: (0..r).collect(),
    })
}

impl DiagDecomposition {
    pub fn r(&self) -> usize {
        self.lambda_dr.len()
    }

    /// `F = V_DR diag(√λ_f) Ũ_RS^H`.
    pub fn relay_matrix(&self, lambda_f: &[f64]) -> CMat {
        let s: Vec<f64> = lambda_f.iter().map(|v| v.max(0.0).sqrt()).collect();
        &self.v_dr * linalg::diag_real(&s) * self.u_rs.adjoint()
    }

    /// `B_S = H_e diag(√λ̃_RS)`, so that `Q_S = H_e Σ̃² H_e^H`.
    pub fn source_matrix(&self, lambda_rs: &[f64]) -> CMat {
        let s: Vec<f64> = lambda_rs.iter().map(|v| v.max(0.0).sqrt()).collect();
        &self.h_e * linalg::diag_real(&s)
    }
}

/// Per-mode gains of one diagonalized allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub lambda_f: Vec<f64>,
    /// Effective source gains `λ̃_RS`.
    pub lambda_rs: Vec<f64>,
    /// Energy-flow leakage per mode; one nonzero entry `c` at the last index.
    pub beta: Vec<f64>,
    /// Multiplier of the relay budget equality.
    pub nu: f64,
    /// Multiplier of the source equality constraint.
    pub mu: f64,
    /// Multiplier of the source budget.
    pub gamma2: f64,
}

impl PowerAllocation {
    pub fn new(lambda_rs: Vec<f64>, beta: Vec<f64>) -> Self {
        PowerAllocation {
            lambda_f: vec![0.0; lambda_rs.len()],
            lambda_rs,
            beta,
            nu: 0.0,
            mu: 0.0,
            gamma2: 0.0,
        }
    }
}

/// Leakage vector with `c = (1−ρ) P_D λ_DR,max` at the last (strongest) mode.
pub fn leakage(decomp: &DiagDecomposition, p: &SystemParams, energy_flow: bool) -> Vec<f64> {
    let r = decomp.r();
    let mut beta = vec![0.0; r];
    if energy_flow {
        beta[r - 1] = (1.0 - p.rho) * p.p_dest * decomp.lambda_dr_max;
    }
    beta
}

fn ef_power(decomp: &DiagDecomposition, p: &SystemParams, beta: &[f64]) -> f64 {
    if beta.iter().any(|&b| b > 0.0) {
        p.p_dest * decomp.lambda_dr_max
    } else {
        0.0
    }
}

/// High-SNR objective, `−Σ ln((1−ρ) λ̃ λ_f λ_DR / (σ² (1 + λ_f λ_DR)))`.
pub fn diag_objective(lambda_f: &[f64], lambda_rs: &[f64], lambda_dr: &[f64], p: &SystemParams) -> f64 {
    lambda_f
        .iter()
        .zip(lambda_rs)
        .zip(lambda_dr)
        .map(|((&f, &s), &d)| -(((1.0 - p.rho) * s * f * d) / (p.noise_power * (1.0 + f * d))).ln())
        .sum()
}

/// Closed-form relay gain for one mode at multiplier `nu`.
pub fn water_level(lambda_dr: f64, z: f64, nu: f64) -> f64 {
    // Rationalized form of −1/(2a) + ½√(1/a² + 4/(ν a z)); avoids cancellation.
    let q = 4.0 * lambda_dr / (nu * z);
    2.0 / (nu * z * (1.0 + (1.0 + q).sqrt()))
}

/// Relay gains for per-mode loads `z` meeting `Σ λ_f z = budget`, with the multiplier.
pub fn water_fill(lambda_dr: &[f64], z: &[f64], budget: f64) -> (Vec<f64>, f64) {
    if !(budget > 0.0) {
        return (vec![0.0; z.len()], f64::INFINITY);
    }
    let used = |nu: f64| -> f64 { lambda_dr.iter().zip(z).map(|(&a, &zz)| water_level(a, zz, nu) * zz).sum() };
    // used(ν) is decreasing; bracket in log scale.
    let mut lo = 1.0;
    let mut hi = 1.0;
    while used(lo) < budget {
        lo *= 0.5;
    }
    while used(hi) > budget {
        hi *= 2.0;
    }
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..400 {
        nu = 0.5 * (lo + hi);
        let u = used(nu);
        if (u - budget).abs() <= BISECT_REL_TOL * budget || nu <= lo || nu >= hi {
            break;
        }
        if u > budget {
            lo = nu;
        } else {
            hi = nu;
        }
    }
    let mut f: Vec<f64> = lambda_dr.iter().zip(z).map(|(&a, &zz)| water_level(a, zz, nu)).collect();
    // Remove the last rounding so the equality holds to machine precision.
    let scale = budget / used(nu);
    if scale.is_finite() {
        let mut fixed: Vec<f64> = f.iter().map(|v| v * scale).collect();
        let s: f64 = fixed.iter().zip(z).map(|(v, zz)| v * zz).sum();
        if (s - budget).abs() <= (used(nu) - budget).abs() {
            std::mem::swap(&mut f, &mut fixed);
        }
    }
    (f, nu)
}

/// Relay budget: harvested power from the source signal and the energy flow.
fn relay_budget(alloc: &PowerAllocation, decomp: &DiagDecomposition, p: &SystemParams) -> f64 {
    p.harvest_coeff() * (alloc.lambda_rs.iter().sum::<f64>() + ef_power(decomp, p, &alloc.beta))
}

pub fn relay_water_fill(alloc: &PowerAllocation, decomp: &DiagDecomposition, p: &SystemParams) -> PowerAllocation {
    let z: Vec<f64> = alloc
        .lambda_rs
        .iter()
        .zip(&alloc.beta)
        .map(|(s, b)| (1.0 - p.rho) * s + p.noise_power + b)
        .collect();
    let (lambda_f, nu) = water_fill(&decomp.lambda_dr, &z, relay_budget(alloc, decomp, p));
    PowerAllocation {
        lambda_f,
        nu,
        ..alloc.clone()
    }
}

/// `Σ λ_f z − budget` for the current allocation.
pub fn relay_budget_residual(alloc: &PowerAllocation, decomp: &DiagDecomposition, p: &SystemParams) -> f64 {
    let used: f64 = alloc
        .lambda_f
        .iter()
        .zip(&alloc.lambda_rs)
        .zip(&alloc.beta)
        .map(|((f, s), b)| f * ((1.0 - p.rho) * s + p.noise_power + b))
        .sum();
    used - relay_budget(alloc, decomp, p)
}

/// One pairing of base loads to relay modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// `perm[m]` is the index into `l` paired with `λ_DR[m]`.
    pub perm: Vec<usize>,
    /// Index into `l` that carries the leakage `c`.
    pub leak: usize,
    /// `Σ ln(λ_f λ_DR / (1 + λ_f λ_DR))` at the water-filled gains.
    pub objective: f64,
}

/// Pairing-dependent part of the relay objective for a given configuration.
pub fn pairing_objective(lambda_dr: &[f64], l: &[f64], c: f64, budget: f64, perm: &[usize], leak: usize) -> f64 {
    let z: Vec<f64> = perm.iter().map(|&i| l[i] + if i == leak { c } else { 0.0 }).collect();
    let (f, _) = water_fill(lambda_dr, &z, budget);
    f.iter()
        .zip(lambda_dr)
        .map(|(&f, &a)| (f * a / (1.0 + f * a)).ln())
        .sum()
}

/// Exhaustive search over all `r!` pairings and `r` leakage positions.
pub fn best_pairing_bruteforce(lambda_dr: &[f64], l: &[f64], c: f64, budget: f64) -> Result<Pairing> {
    let r = l.len();
    if r > 5 {
        return Err(Error::TooLarge(r));
    }
    if lambda_dr.len() != r {
        return Err(Error::DimensionMismatch("gain vectors differ in length".into()));
    }
    let mut best: Option<Pairing> = None;
    let mut perm: Vec<usize> = (0..r).collect();
    let mut consider = |perm: &[usize]| {
        for leak in 0..r {
            let objective = pairing_objective(lambda_dr, l, c, budget, perm, leak);
            if best.as_ref().is_none_or(|b| objective > b.objective) {
                best = Some(Pairing {
                    perm: perm.to_vec(),
                    leak,
                    objective,
                });
            }
        }
    };
    heap_permutations(&mut perm, r, &mut consider);
    best.ok_or_else(|| Error::InvalidParameter("empty gain vectors".into()))
}

fn heap_permutations(a: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        visit(a);
        return;
    }
    for i in 0..k {
        heap_permutations(a, k - 1, visit);
        let j = if k % 2 == 0 { i } else { 0 };
        if i + 1 < k {
            a.swap(j, k - 1);
        }
    }
}

/// The ordering rule: ascending loads on ascending modes, leakage on the largest load.
pub fn ordered_pairing(lambda_dr: &[f64], l: &[f64], c: f64, budget: f64) -> Pairing {
    let mut perm: Vec<usize> = (0..l.len()).collect();
    perm.sort_by(|&a, &b| l[a].total_cmp(&l[b]));
    let leak = *perm.last().unwrap_or(&0);
    let mut order: Vec<usize> = (0..lambda_dr.len()).collect();
    order.sort_by(|&a, &b| lambda_dr[a].total_cmp(&lambda_dr[b]));
    let mut paired = vec![0; l.len()];
    for (k, &m) in order.iter().enumerate() {
        paired[m] = perm[k];
    }
    let objective = pairing_objective(lambda_dr, l, c, budget, &paired, leak);
    Pairing {
        perm: paired,
        leak,
        objective,
    }
}

/// Linear data of the source problem: `Σ a_m λ̃_m = b` with `a_m = (1−ρ)λ_f − ηρ`.
fn source_equality(alloc: &PowerAllocation, decomp: &DiagDecomposition, p: &SystemParams) -> (Vec<f64>, f64) {
    let a: Vec<f64> = alloc
        .lambda_f
        .iter()
        .map(|f| f * (1.0 - p.rho) - p.harvest_coeff())
        .collect();
    let b = p.harvest_coeff() * ef_power(decomp, p, &alloc.beta)
        - alloc
            .lambda_f
            .iter()
            .zip(&alloc.beta)
            .map(|(f, be)| (p.noise_power + be) * f)
            .sum::<f64>();
    (a, b)
}

/// Solve `min −Σ ln x` s.t. `0 < x_1 ≤ … ≤ x_r`, `w·x ≤ P_S`, `a·x = b` with
/// a log-barrier method on the increments `d_k = x_k − x_{k−1}`.
pub fn source_power_full(alloc: &PowerAllocation, decomp: &DiagDecomposition, p: &SystemParams) -> Result<PowerAllocation> {
    let r = decomp.r();
    let (a, b) = source_equality(alloc, decomp, p);
    let w = &decomp.he_norms2;
    // Suffix sums map x-space rows to d-space rows.
    let suffix = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; r];
        let mut acc = 0.0;
        for k in (0..r).rev() {
            acc += v[k];
            out[k] = acc;
        }
        out
    };
    let (ad, wd) = (suffix(&a), suffix(w));
    let infeasible = || Error::Infeasible("source equality cannot be met within the source budget".into());
    // Smallest budget use over d ≥ 0 on the equality plane.
    let least_use = if b == 0.0 {
        0.0
    } else {
        ad.iter()
            .zip(&wd)
            .filter(|(x, _)| b / **x > 0.0)
            .map(|(x, y)| y * b / x)
            .fold(f64::INFINITY, f64::min)
    };
    if !(least_use <= p.p_source * (1.0 + 1e-9)) {
        return Err(infeasible());
    }
    if least_use >= p.p_source * (1.0 - 1e-12) {
        // The feasible set has no interior; it is the single vertex that
        // meets the equality with the least budget.
        let k = (0..r)
            .filter(|&k| b / ad[k] > 0.0)
            .min_by(|&i, &j| (wd[i] / ad[i] * b).total_cmp(&(wd[j] / ad[j] * b)))
            .ok_or_else(infeasible)?;
        if k > 0 {
            // Would need zero gains on the weakest modes.
            return Err(infeasible());
        }
        return Ok(PowerAllocation {
            lambda_rs: vec![b / ad[0]; r],
            mu: 0.0,
            gamma2: 0.0,
            ..alloc.clone()
        });
    }

    let mut d = start_increments(&alloc.lambda_rs, w, p.p_source);
    let x_of = |d: &[f64]| -> Vec<f64> {
        d.iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    };
    let slack_of = |d: &[f64]| p.p_source - d.iter().zip(&wd).map(|(x, y)| x * y).sum::<f64>();
    let eq_of = |d: &[f64]| ad.iter().zip(d).map(|(x, y)| x * y).sum::<f64>() - b;
    let eq_scale = |d: &[f64]| b.abs() + ad.iter().zip(d).map(|(x, y)| (x * y).abs()).sum::<f64>();
    let inside = |d: &[f64]| d.iter().all(|&v| v > 0.0) && slack_of(d) > 0.0;
    // Barrier function and its gradient at a given t.
    let phi = |d: &[f64], t: f64| -> f64 {
        -t * x_of(d).iter().map(|v| v.ln()).sum::<f64>() - d.iter().map(|v| v.ln()).sum::<f64>() - slack_of(d).ln()
    };
    let grad_of = |d: &[f64], t: f64| -> RVec {
        let x = x_of(d);
        let slack = slack_of(d);
        let mut g = RVec::zeros(r);
        let mut tail = 0.0;
        for k in (0..r).rev() {
            tail += t / x[k];
            g[k] = -tail - 1.0 / d[k] + wd[k] / slack;
        }
        g
    };
    let m_constraints = (r + 1) as f64;
    let mut t = 1.0;
    let mut nu = 0.0;
    loop {
        for _ in 0..100 {
            let x = x_of(&d);
            let slack = slack_of(&d);
            let grad = grad_of(&d, t);
            let mut kkt = RMat::zeros(r + 1, r + 1);
            for m in 0..r {
                // −t ln x_m with x_m = Σ_{k≤m} d_k
                let h = t / (x[m] * x[m]);
                for k in 0..=m {
                    for j in 0..=m {
                        kkt[(k, j)] += h;
                    }
                }
            }
            for k in 0..r {
                kkt[(k, k)] += 1.0 / (d[k] * d[k]);
                for j in 0..r {
                    kkt[(k, j)] += wd[k] * wd[j] / (slack * slack);
                }
                kkt[(k, r)] = ad[k];
                kkt[(r, k)] = ad[k];
            }
            let primal_res = eq_of(&d);
            let mut rhs = RVec::zeros(r + 1);
            for k in 0..r {
                rhs[k] = -grad[k];
            }
            rhs[r] = -primal_res;
            let hess = kkt.view((0, 0), (r, r)).into_owned();
            let sol = kkt.lu().solve(&rhs).ok_or_else(infeasible)?;
            let step = sol.rows(0, r).into_owned();
            let decrement = step.dot(&(&hess * &step));
            let feasible = primal_res.abs() <= 1e-12 * eq_scale(&d);
            if feasible && decrement <= 1e-10 {
                nu = sol[r];
                break;
            }
            let mut s = 1.0;
            let mut moved = false;
            if feasible {
                let f0 = phi(&d, t);
                let slope = grad.dot(&step);
                while s > 1e-12 {
                    let cand: Vec<f64> = d.iter().zip(step.iter()).map(|(x, y)| x + s * y).collect();
                    if inside(&cand) && phi(&cand, t) <= f0 + 0.01 * s * slope {
                        d = cand;
                        moved = true;
                        break;
                    }
                    s *= 0.5;
                }
                nu = sol[r];
            } else {
                let res = |d: &[f64], nu: f64| -> f64 {
                    let g = grad_of(d, t) + RVec::from_column_slice(&ad) * nu;
                    (g.norm_squared() + eq_of(d).powi(2)).sqrt()
                };
                let r0 = res(&d, nu);
                let dnu = sol[r] - nu;
                while s > 1e-12 {
                    let cand: Vec<f64> = d.iter().zip(step.iter()).map(|(x, y)| x + s * y).collect();
                    if inside(&cand) && res(&cand, nu + s * dnu) <= (1.0 - 0.01 * s) * r0 {
                        d = cand;
                        nu += s * dnu;
                        moved = true;
                        break;
                    }
                    s *= 0.5;
                }
            }
            if !moved {
                break;
            }
        }
        if m_constraints / t < 1e-11 {
            break;
        }
        t *= 50.0;
    }
    let x = x_of(&d);
    let eq_res: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() - b;
    let scale = b.abs().max(a.iter().zip(&x).map(|(u, v)| (u * v).abs()).fold(0.0, f64::max));
    if !(eq_res.abs() <= 1e-8 * scale.max(1e-300)) {
        return Err(infeasible());
    }
    Ok(PowerAllocation {
        lambda_rs: x,
        mu: nu / t,
        gamma2: 0.0,
        ..alloc.clone()
    })
}

/// Strictly interior increments near a previous allocation.
fn start_increments(prev: &[f64], w: &[f64], p_s: f64) -> Vec<f64> {
    let r = prev.len();
    let wsum: f64 = w.iter().sum();
    let mut x: Vec<f64> = prev.to_vec();
    if !x.iter().all(|v| v.is_finite() && *v > 0.0) {
        x = vec![p_s / wsum; r];
    }
    let mut d = Vec::with_capacity(r);
    let floor = 1e-3 * x.iter().sum::<f64>() / r as f64;
    let mut last = 0.0;
    for v in &x {
        d.push((v - last).max(floor));
        last = *v;
    }
    let xs: Vec<f64> = d
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let used: f64 = xs.iter().zip(w).map(|(a, b)| a * b).sum();
    let shrink = 0.9 * p_s / used;
    if shrink < 1.0 {
        d.iter_mut().for_each(|v| *v *= shrink);
    }
    d
}

/// Source allocation under the uniform budget weight `h²_e,max`, in closed form.
pub fn source_power_simplified(
    alloc: &PowerAllocation,
    decomp: &DiagDecomposition,
    p: &SystemParams,
) -> Result<PowerAllocation> {
    let r = decomp.r();
    let (a, b) = source_equality(alloc, decomp, p);
    let hmax = decomp.he_norms2.iter().copied().fold(0.0, f64::max);
    let cap = p.p_source / hmax;
    let rf = r as f64;

    // Budget inactive: λ̃_m = 1/(μ a_m) with r/μ = b.
    let same_sign = a.iter().all(|&v| v * b > 0.0);
    if same_sign {
        let mu = rf / b;
        let x: Vec<f64> = a.iter().map(|v| 1.0 / (mu * v)).collect();
        if x.iter().sum::<f64>() <= cap {
            return Ok(PowerAllocation {
                lambda_rs: x,
                mu,
                gamma2: 0.0,
                ..alloc.clone()
            });
        }
    }

    // Budget active: γ₂ = (r − μb)/cap eliminates the budget equation and
    // leaves g(μ) = Σ a_m/(γ₂ + μ a_m) − b, decreasing on its domain.
    let gamma = |mu: f64| (rf - mu * b) / cap;
    let denom = |mu: f64, v: f64| gamma(mu) + mu * v;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut tighten = |coef: f64, c0: f64| {
        // c0 + μ coef > 0
        if coef > 0.0 {
            lo = lo.max(-c0 / coef);
        } else if coef < 0.0 {
            hi = hi.min(-c0 / coef);
        }
    };
    tighten(-b, rf);
    for &v in &a {
        tighten(v - b / cap, rf / cap);
    }
    let g = |mu: f64| a.iter().map(|&v| v / denom(mu, v)).sum::<f64>() - b;
    let dg = |mu: f64| -> f64 {
        a.iter()
            .map(|&v| {
                let dd = denom(mu, v);
                -v * (v - b / cap) / (dd * dd)
            })
            .sum()
    };
    let mut mu = 0.0;
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITERS {
        let gv = g(mu);
        if gv.abs() <= 1e-13 * (b.abs() + a.iter().map(|&v| (v / denom(mu, v)).abs()).sum::<f64>()) {
            converged = true;
            break;
        }
        if gv > 0.0 {
            lo = lo.max(mu);
        } else {
            hi = hi.min(mu);
        }
        let mut next = mu - gv / dg(mu);
        if !(next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 2.0 * (mu - lo).abs().max(1.0),
                (false, true) => hi - 2.0 * (hi - mu).abs().max(1.0),
                (false, false) => next,
            };
        }
        if next == mu {
            converged = true;
            break;
        }
        mu = next;
    }
    let gamma2 = gamma(mu);
    if !converged || !(gamma2 >= 0.0) {
        return Err(Error::NewtonDiverged(NEWTON_MAX_ITERS));
    }
    let x: Vec<f64> = a.iter().map(|&v| 1.0 / denom(mu, v)).collect();
    if !x.iter().all(|v| *v > 0.0 && v.is_finite()) {
        return Err(Error::NewtonDiverged(NEWTON_MAX_ITERS));
    }
    Ok(PowerAllocation {
        lambda_rs: x,
        mu,
        gamma2,
        ..alloc.clone()
    })
}

/// Source power step used by a simplified energy-flow scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagVariant {
    /// Convex source problem with per-mode weights and the ordering constraint.
    S1,
    /// Closed-form source step under the uniform weight.
    S2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagTrace {
    /// Objective after each relay step and after each source step, interleaved.
    pub objective: Vec<f64>,
    /// Relay budget residual after each relay step.
    pub budget_residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Source steps whose output was not ascending.
    pub ordering_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagOutcome {
    pub alloc: PowerAllocation,
    pub rate_bits: f64,
    pub trace: DiagTrace,
    pub f: CMat,
    pub b_s: CMat,
    pub q_d: EnergyCovariance,
}

fn is_ascending(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12))
}

fn outcome(
    alloc: PowerAllocation,
    trace: DiagTrace,
    f: CMat,
    b_s: CMat,
    q_d: EnergyCovariance,
    ch: &ChannelSet,
    p: &SystemParams,
) -> Result<DiagOutcome> {
    let r = ch.r();
    let st = IterState {
        a0: linalg::identity(r),
        w: linalg::identity(r),
        f,
        b_s,
        q_d,
    };
    let rate_bits = wmse::achievable_rate(&st, ch, p)?;
    Ok(DiagOutcome {
        alloc,
        rate_bits,
        trace,
        f: st.f,
        b_s: st.b_s,
        q_d: st.q_d,
    })
}

/// Alternate the relay water-filling and a source step until the objective
/// change across the source step is below `tol`.
pub fn run_efa_s(
    ch: &ChannelSet,
    p: &SystemParams,
    variant: DiagVariant,
    tol: f64,
    max_iters: usize,
) -> Result<DiagOutcome> {
    p.validate()?;
    let decomp = hpm_plm_decompose(ch, p)?;
    let r = decomp.r();
    let q_d = channel::energy_beamformer_qd(&ch.h_rd, p.p_dest)?;
    let beta = leakage(&decomp, p, true);
    // Equal gains at half of the tightest budget, so both variants start from
    // the same strictly feasible point.
    let hmax = decomp.he_norms2.iter().copied().fold(0.0, f64::max);
    let mut alloc = PowerAllocation::new(vec![0.5 * p.p_source / (r as f64 * hmax); r], beta);
    let mut trace = DiagTrace::default();
    if p.p_source == 0.0 {
        alloc.lambda_rs = vec![0.0; r];
        alloc = relay_water_fill(&alloc, &decomp, p);
        let f = decomp.relay_matrix(&alloc.lambda_f);
        let b_s = linalg::zeros(r, r);
        return outcome(alloc, trace, f, b_s, q_d, ch, p);
    }
    for _ in 0..max_iters {
        alloc = relay_water_fill(&alloc, &decomp, p);
        trace.budget_residuals.push(relay_budget_residual(&alloc, &decomp, p));
        let before = diag_objective(&alloc.lambda_f, &alloc.lambda_rs, &decomp.lambda_dr, p);
        trace.objective.push(before);
        let next = match variant {
            DiagVariant::S1 => source_power_full(&alloc, &decomp, p)?,
            DiagVariant::S2 => source_power_simplified(&alloc, &decomp, p)?,
        };
        let after = diag_objective(&next.lambda_f, &next.lambda_rs, &decomp.lambda_dr, p);
        trace.iterations += 1;
        if !is_ascending(&next.lambda_rs) {
            trace.ordering_violations += 1;
        }
        // The previous source gains stay feasible, so keep them if the
        // solve came back marginally worse.
        let (kept, c_new) = if after <= before { (next, after) } else { (alloc.clone(), before) };
        alloc = kept;
        trace.objective.push(c_new);
        if (before - c_new).abs() < tol {
            trace.converged = true;
            break;
        }
    }
    let f = decomp.relay_matrix(&alloc.lambda_f);
    let b_s = decomp.source_matrix(&alloc.lambda_rs);
    outcome(alloc, trace, f, b_s, q_d, ch, p)
}

/// Simplified scheme without energy flow: uniform source power and a single
/// water-filling step at the relay.
pub fn run_nefa_s(ch: &ChannelSet, p: &SystemParams) -> Result<DiagOutcome> {
    p.validate()?;
    let decomp = hpm_plm_decompose(ch, p)?;
    let r = decomp.r();
    let dec = linalg::svd(&ch.h_rs);
    // Ascending order of the source–relay gains.
    let order: Vec<usize> = (0..r).rev().collect();
    let ps = p.p_source / r as f64;
    let lambda_rs: Vec<f64> = order.iter().map(|&k| ps * dec.singular_values[k].powi(2)).collect();
    let mut u_rs = CMat::zeros(r, r);
    let mut v_rs = CMat::zeros(r, r);
    for (dst, &src) in order.iter().enumerate() {
        u_rs.set_column(dst, &dec.u.column(src));
        v_rs.set_column(dst, &dec.v.column(src));
    }
    let alloc = PowerAllocation::new(lambda_rs, vec![0.0; r]);
    let alloc = relay_water_fill(&alloc, &decomp, p);
    let trace = DiagTrace {
        budget_residuals: vec![relay_budget_residual(&alloc, &decomp, p)],
        objective: vec![diag_objective(&alloc.lambda_f, &alloc.lambda_rs, &decomp.lambda_dr, p)],
        iterations: 1,
        converged: true,
        ordering_violations: 0,
    };
    let s: Vec<f64> = alloc.lambda_f.iter().map(|v| v.sqrt()).collect();
    let f = &decomp.v_dr * linalg::diag_real(&s) * u_rs.adjoint();
    let b_s = v_rs * cr(ps.sqrt());
    outcome(alloc, trace, f, b_s, EnergyCovariance::zero(r), ch, p)
}

/// `E{‖y_D‖²}` of the diagonalized relay, energy-flow residue included.
pub fn forwarded_signal_power(
    alloc: &PowerAllocation,
    decomp: &DiagDecomposition,
    p: &SystemParams,
    q_d: &EnergyCovariance,
) -> f64 {
    let ef = decomp.u_dr.transpose() * &q_d.q * decomp.u_dr.map(|z| z.conj());
    (0..decomp.r())
        .map(|m| {
            let g = decomp.lambda_dr[m] * alloc.lambda_f[m];
            (1.0 - p.rho) * g * (alloc.lambda_rs[m] + decomp.lambda_dr[m] * ef[(m, m)].re)
                + p.noise_power * (g + 1.0)
        })
        .sum()
}
