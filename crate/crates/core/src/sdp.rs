//! Small dense semidefinite programs over Hermitian matrices.
//!
//! The complex problem
//!
//! ```text
//! minimize    Re Tr{C X}
//! subject to  Tr{A_i X} <= b_i     (inequalities)
//!             Tr{A_j X}  = b_j     (equalities)
//!             X ⪰ 0
//! ```
//!
//! is mapped onto its real symmetric embedding and solved with an
//! infeasible-start primal–dual path-following method (HKM direction,
//! Mehrotra predictor–corrector). Inequalities get nonnegative scalar slacks.
//! Rows and cost are normalized to unit Frobenius norm before the solve and
//! mapped back afterwards, so callers only ever see complex-domain values.

use std::io::{BufRead, Write};

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, RMat};

const MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub cost: CMat,
    pub ineq: Vec<(CMat, f64)>,
    pub eq: Vec<(CMat, f64)>,
    pub dim: usize,
}

impl SdpProblem {
    pub fn new(cost: CMat, ineq: Vec<(CMat, f64)>, eq: Vec<(CMat, f64)>) -> Result<Self> {
        let dim = cost.nrows();
        let all = std::iter::once(&cost)
            .chain(ineq.iter().map(|(a, _)| a))
            .chain(eq.iter().map(|(a, _)| a));
        for a in all {
            if a.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "SDP matrix is {:?}, expected {dim}x{dim}",
                    a.shape()
                )));
            }
            linalg::ensure_finite(a)?;
            let defect = linalg::hermitian_defect(a);
            if defect > linalg::HERM_TOL * (1.0 + a.camax()) {
                return Err(Error::NotHermitian(defect));
            }
        }
        if ineq.iter().chain(eq.iter()).any(|(_, b)| !b.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(SdpProblem {
            cost: linalg::hermitian_part(&cost),
            ineq: ineq.into_iter().map(|(a, b)| (linalg::hermitian_part(&a), b)).collect(),
            eq: eq.into_iter().map(|(a, b)| (linalg::hermitian_part(&a), b)).collect(),
            dim,
        })
    }

    fn rows(&self) -> impl Iterator<Item = (&CMat, f64, bool)> {
        self.ineq
            .iter()
            .map(|(a, b)| (a, *b, true))
            .chain(self.eq.iter().map(|(a, b)| (a, *b, false)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Relative accuracy the iteration aims for.
    pub target_tol: f64,
    /// Accuracy below which a stalled run still counts as optimal.
    pub accept_tol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_iter: 200,
            target_tol: 1e-12,
            accept_tol: 1e-8,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: CMat,
    /// Dual slack `C - Σ y_i A_i`.
    pub z: CMat,
    /// Multipliers of the inequalities (nonnegative).
    pub ineq_duals: Vec<f64>,
    /// Multipliers of the equalities (free).
    pub eq_duals: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Merit value (complementarity plus infeasibilities) after every iteration.
    pub merit_history: Vec<f64>,
}

/// Residuals of a candidate primal–dual pair, all nonnegative.
///
/// Rows are measured after scaling each constraint to unit Frobenius norm and
/// the dual side after scaling the cost to unit norm. Complementarity is
/// `‖X^{1/2} Z X^{1/2}‖_F` plus the inequality slack products, relative to `1 + ‖X‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub duality_gap: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal_infeasibility
            .max(self.dual_infeasibility)
            .max(self.complementarity)
            .max(self.duality_gap)
    }
}

fn fro_or_one(m: &CMat) -> f64 {
    let n = linalg::fro(m);
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

/// Residual report for `s` as a solution of `p`.
pub fn kkt_residuals(p: &SdpProblem, s: &SdpSolution) -> KktReport {
    let x = linalg::hermitian_part(&s.x);
    let cn = fro_or_one(&p.cost);
    let mut duals: Vec<f64> = s.ineq_duals.iter().map(|d| -d).collect();
    duals.extend_from_slice(&s.eq_duals);

    let mut viol2 = 0.0;
    let mut bnorm2 = 0.0;
    let mut slack_comp = 0.0;
    let mut z = p.cost.clone();
    for ((a, b, is_ineq), &y) in p.rows().zip(duals.iter()) {
        let an = fro_or_one(a);
        let ax = linalg::re_trace_prod(a, &x);
        let v = if is_ineq { (ax - b).max(0.0) } else { (ax - b).abs() };
        viol2 += (v / an).powi(2);
        bnorm2 += (b / an).powi(2);
        if is_ineq {
            slack_comp += (y * (b - ax)).abs() / cn;
        }
        z -= a * linalg::c(y, 0.0);
    }
    let xn = linalg::fro(&x);
    let x_psd = (-linalg::min_eigenvalue(&x)).max(0.0) / (1.0 + xn);
    let primal = (viol2.sqrt() / (1.0 + bnorm2.sqrt())).max(x_psd);

    let z_psd = (-linalg::min_eigenvalue(&z)).max(0.0) / cn;
    let sign = s
        .ineq_duals
        .iter()
        .zip(p.ineq.iter())
        .map(|(d, (a, _))| (-d).max(0.0) * fro_or_one(a) / cn)
        .fold(0.0, f64::max);
    let dual = z_psd.max(sign);

    // ‖X^{1/2} Z X^{1/2}‖ vanishes exactly when XZ = 0 for PSD pairs and,
    // unlike ‖XZ‖, does not pick up a square-root loss near the boundary.
    let (xl, xu) = linalg::eigh(&x);
    let half = &xu * linalg::diag_real(&xl.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>()) * xu.adjoint();
    let xz = linalg::fro(&(&half * &z * &half)) / cn;
    let comp = (xz + slack_comp) / (1.0 + xn);

    let pobj = linalg::re_trace_prod(&p.cost, &x);
    let dobj: f64 = p.rows().zip(duals.iter()).map(|((_, b, _), y)| b * y).sum();
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());

    KktReport {
        primal_infeasibility: primal,
        dual_infeasibility: dual,
        complementarity: comp,
        duality_gap: gap,
    }
}

/// The normalized real problem handed to the interior-point loop.
struct RealSdp {
    c: RMat,
    rows: Vec<RMat>,
    b: Vec<f64>,
    slack_of_row: Vec<Option<usize>>,
    n_slack: usize,
}

struct RealIterate {
    x: RMat,
    xs: Vec<f64>,
    y: Vec<f64>,
    z: RMat,
    zs: Vec<f64>,
}

fn inner(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// Largest step `t` keeping `L L^T + t·d` positive semidefinite.
fn max_psd_step(chol: &Cholesky<f64, nalgebra::Dyn>, d: &RMat) -> f64 {
    let l = chol.l_dirty();
    let mut w = d.clone();
    l.solve_lower_triangular_mut(&mut w);
    let mut wt = w.transpose();
    l.solve_lower_triangular_mut(&mut wt);
    let lam = linalg::eigvalsh_real(&wt);
    let lo = lam.first().copied().unwrap_or(0.0);
    if lo < 0.0 {
        -1.0 / lo
    } else {
        f64::INFINITY
    }
}

fn max_pos_step(v: &[f64], d: &[f64]) -> f64 {
    v.iter()
        .zip(d)
        .filter(|(_, &dd)| dd < 0.0)
        .map(|(&vv, &dd)| -vv / dd)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: RMat,
    dxs: Vec<f64>,
    dy: Vec<f64>,
    dz: RMat,
    dzs: Vec<f64>,
}

struct Residuals {
    rp: Vec<f64>,
    rd: RMat,
    rds: Vec<f64>,
    mu: f64,
    relp: f64,
    reld: f64,
    gap: f64,
}

impl RealSdp {
    fn m(&self) -> usize {
        self.rows.len()
    }

    fn residuals(&self, it: &RealIterate) -> Residuals {
        let n = self.c.nrows();
        let m = self.m();
        let mut rp = vec![0.0; m];
        let mut rd = &self.c - &it.z;
        let mut rds = vec![0.0; self.n_slack];
        for i in 0..m {
            let mut ax = inner(&self.rows[i], &it.x);
            if let Some(k) = self.slack_of_row[i] {
                ax += it.xs[k];
                rds[k] = -it.y[i] - it.zs[k];
            }
            rp[i] = self.b[i] - ax;
            rd -= &self.rows[i] * it.y[i];
        }
        let comp = inner(&it.x, &it.z) + it.xs.iter().zip(&it.zs).map(|(a, b)| a * b).sum::<f64>();
        let mu = comp / (n + self.n_slack) as f64;
        let pobj = inner(&self.c, &it.x);
        let dobj: f64 = self.b.iter().zip(&it.y).map(|(b, y)| b * y).sum();
        let bnorm = self.b.iter().map(|b| b * b).sum::<f64>().sqrt();
        let relp = rp.iter().map(|r| r * r).sum::<f64>().sqrt() / (1.0 + bnorm);
        let rdn = (rd.norm_squared() + rds.iter().map(|r| r * r).sum::<f64>()).sqrt();
        let reld = rdn / (1.0 + self.c.norm());
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        Residuals {
            rp,
            rd,
            rds,
            mu,
            relp,
            reld,
            gap,
        }
    }

    fn merit(r: &Residuals) -> f64 {
        r.mu + r.relp + r.reld
    }

    /// Farkas check: a dual ray with `Σ y_i A_i ⪯ 0`, inequality multipliers
    /// of the right sign and `b^T y > 0` proves primal infeasibility.
    fn dual_ray(&self, y: &[f64]) -> bool {
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny < 1e6 {
            return false;
        }
        let yh: Vec<f64> = y.iter().map(|v| v / ny).collect();
        let by: f64 = self.b.iter().zip(&yh).map(|(b, y)| b * y).sum();
        if by <= 1e-8 {
            return false;
        }
        let mut s = RMat::zeros(self.c.nrows(), self.c.ncols());
        for (a, &yy) in self.rows.iter().zip(&yh) {
            s -= a * yy;
        }
        let sign_ok = self
            .slack_of_row
            .iter()
            .zip(&yh)
            .all(|(k, &yy)| k.is_none() || yy <= 1e-8);
        let lo = linalg::eigvalsh_real(&s).first().copied().unwrap_or(0.0);
        sign_ok && lo >= -1e-6
    }

    fn solve(&self, opts: &SdpOptions) -> (RealIterate, SdpStatus, usize, Vec<f64>) {
        let n = self.c.nrows();
        let m = self.m();
        let ns = self.n_slack;

        // Scaled identity that meets the equality rows on average.
        let mut zeta = 0.0;
        let mut cnt = 0;
        for i in 0..m {
            if self.slack_of_row[i].is_none() {
                let tr = self.rows[i].trace();
                if tr.abs() > 1e-14 && self.b[i] / tr > 0.0 {
                    zeta += self.b[i] / tr;
                    cnt += 1;
                }
            }
        }
        let zeta = if cnt > 0 { zeta / cnt as f64 } else { 1.0 };
        let eta = 1.0_f64.max(self.c.norm());
        let mut it = RealIterate {
            x: RMat::identity(n, n) * zeta,
            xs: vec![zeta; ns],
            y: vec![0.0; m],
            z: RMat::identity(n, n) * eta,
            zs: vec![eta; ns],
        };

        let mut merits = Vec::new();
        let mut status = SdpStatus::MaxIter;
        let mut iters = 0;
        let mut stall = 0;
        let mut probing = false;
        for k in 0..opts.max_iter {
            iters = k;
            let res = self.residuals(&it);
            let merit = Self::merit(&res);
            merits.push(merit);
            if res.relp < opts.target_tol && res.reld < opts.target_tol && res.gap < opts.target_tol {
                status = SdpStatus::Optimal;
                break;
            }
            // Near the accuracy floor steps collapse; stop once five iterations
            // have not reduced the merit by a meaningful fraction.
            if !probing && merits.len() > 5 && merit > 0.99 * merits[merits.len() - 6] {
                let accurate = res.relp < opts.accept_tol && res.reld < opts.accept_tol && res.gap < opts.accept_tol;
                if accurate {
                    break;
                }
            }
            if self.dual_ray(&it.y) && res.relp > opts.accept_tol {
                status = SdpStatus::Infeasible;
                break;
            }

            let (Some(cx), Some(cz)) = (it.x.clone().cholesky(), it.z.clone().cholesky()) else {
                break;
            };
            let zi = cz.inverse();
            let g: Vec<RMat> = self.rows.iter().map(|a| &it.x * a * &zi).collect();
            let mut schur = RMat::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    schur[(i, j)] = inner(&self.rows[i], &g[j]);
                }
                if let Some(s) = self.slack_of_row[i] {
                    schur[(i, i)] += it.xs[s] / it.zs[s];
                }
            }
            let schur_lu = sym(&schur).lu();
            if !schur_lu.is_invertible() {
                break;
            }

            let xz = &it.x * &it.z;
            let xrd = &it.x * &res.rd;
            let direction = |rc: &RMat, rcs: &[f64]| -> Direction {
                let t = (rc - &xrd) * &zi;
                let mut rhs = nalgebra::DVector::zeros(m);
                for i in 0..m {
                    let mut v = res.rp[i] - inner(&self.rows[i], &t);
                    if let Some(s) = self.slack_of_row[i] {
                        v -= rcs[s] / it.zs[s] - it.xs[s] / it.zs[s] * res.rds[s];
                    }
                    rhs[i] = v;
                }
                let dy = schur_lu.solve(&rhs).unwrap_or(rhs);
                let mut dz = res.rd.clone();
                let mut dx = t;
                for j in 0..m {
                    dz -= &self.rows[j] * dy[j];
                    dx += &g[j] * dy[j];
                }
                let dx = sym(&dx);
                let mut dzs = res.rds.clone();
                for i in 0..m {
                    if let Some(s) = self.slack_of_row[i] {
                        dzs[s] -= dy[i];
                    }
                }
                let dxs: Vec<f64> = (0..ns)
                    .map(|s| (rcs[s] - it.xs[s] * dzs[s]) / it.zs[s])
                    .collect();
                Direction {
                    dx,
                    dxs,
                    dy: dy.iter().copied().collect(),
                    dz,
                    dzs,
                }
            };
            let steps = |d: &Direction| -> (f64, f64) {
                let ap = max_psd_step(&cx, &d.dx).min(max_pos_step(&it.xs, &d.dxs));
                let ad = max_psd_step(&cz, &d.dz).min(max_pos_step(&it.zs, &d.dzs));
                ((opts.step_fraction * ap).min(1.0), (opts.step_fraction * ad).min(1.0))
            };

            // predictor
            let rc_aff = -&xz;
            let rcs_aff: Vec<f64> = (0..ns).map(|s| -it.xs[s] * it.zs[s]).collect();
            let aff = direction(&rc_aff, &rcs_aff);
            let (ap, ad) = steps(&aff);
            let x_a = &it.x + &aff.dx * ap;
            let z_a = &it.z + &aff.dz * ad;
            let comp_a = inner(&x_a, &z_a)
                + (0..ns)
                    .map(|s| (it.xs[s] + ap * aff.dxs[s]) * (it.zs[s] + ad * aff.dzs[s]))
                    .sum::<f64>();
            let mu_aff = comp_a / (n + ns) as f64;
            let sigma = (mu_aff / res.mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let rc = RMat::identity(n, n) * (sigma * res.mu) - &xz - &aff.dx * &aff.dz;
            let rcs: Vec<f64> = (0..ns)
                .map(|s| sigma * res.mu - it.xs[s] * it.zs[s] - aff.dxs[s] * aff.dzs[s])
                .collect();
            let dir = direction(&rc, &rcs);

            // Backtrack until the merit decreases. If the corrected direction
            // gives no descent (its second-order term can raise μ), fall back
            // to the plain centered Newton direction along a common step,
            // whose μ and residual slopes are both negative. Steps shorter
            // than MIN_STEP only creep toward the cone boundary.
            let mut accepted = None;
            let try_dir = |d: &Direction, equal: bool, accepted: &mut Option<(RealIterate, f64)>| {
                let (mut ap, mut ad) = steps(d);
                if equal {
                    ap = ap.min(ad);
                    ad = ap;
                }
                for _ in 0..40 {
                    if !probing && ap.min(ad) < MIN_STEP {
                        return;
                    }
                    let cand = RealIterate {
                        x: &it.x + &d.dx * ap,
                        xs: (0..ns).map(|s| it.xs[s] + ap * d.dxs[s]).collect(),
                        y: (0..m).map(|i| it.y[i] + ad * d.dy[i]).collect(),
                        z: &it.z + &d.dz * ad,
                        zs: (0..ns).map(|s| it.zs[s] + ad * d.dzs[s]).collect(),
                    };
                    let r2 = self.residuals(&cand);
                    if probing || Self::merit(&r2) <= merit * (1.0 - 1e-4 * ap.min(ad)) {
                        *accepted = Some((cand, ap.max(ad)));
                        return;
                    }
                    ap *= 0.5;
                    ad *= 0.5;
                }
            };
            try_dir(&dir, false, &mut accepted);
            if accepted.is_none() {
                let sigma_c = sigma.max(0.5);
                let rc = RMat::identity(n, n) * (sigma_c * res.mu) - &xz;
                let rcs: Vec<f64> = (0..ns).map(|s| sigma_c * res.mu - it.xs[s] * it.zs[s]).collect();
                try_dir(&direction(&rc, &rcs), true, &mut accepted);
            }
            let Some((next, step)) = accepted else {
                if res.relp > opts.accept_tol {
                    // No descent step while primal infeasible: let the dual
                    // run free so a diverging ray can certify infeasibility.
                    probing = true;
                    continue;
                }
                break;
            };
            it = next;
            if step < 1e-10 {
                stall += 1;
                if stall > 3 {
                    if probing || res.relp <= opts.accept_tol {
                        break;
                    }
                    probing = true;
                    stall = 0;
                }
            } else {
                stall = 0;
            }
            iters = k + 1;
        }
        if status == SdpStatus::MaxIter {
            let res = self.residuals(&it);
            merits.push(Self::merit(&res));
            if res.relp < opts.accept_tol && res.reld < opts.accept_tol && res.gap < opts.accept_tol {
                status = SdpStatus::Optimal;
            }
        }
        (it, status, iters, merits)
    }
}

/// Solve a Hermitian SDP through its real symmetric embedding.
pub fn solve_sdp(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let cost_re = linalg::embed_unchecked(&p.cost);
    let kappa = {
        let nrm = cost_re.norm();
        if nrm > 0.0 {
            nrm
        } else {
            1.0
        }
    };
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut scale = Vec::new();
    let mut slack_of_row = Vec::new();
    let mut n_slack = 0;
    for (a, bi, is_ineq) in p.rows() {
        let ar = linalg::embed_unchecked(a);
        let an = {
            let nrm = ar.norm();
            if nrm > 0.0 {
                nrm
            } else {
                1.0
            }
        };
        rows.push(ar / an);
        b.push(2.0 * bi / an);
        scale.push(an);
        if is_ineq {
            slack_of_row.push(Some(n_slack));
            n_slack += 1;
        } else {
            slack_of_row.push(None);
        }
    }
    let real = RealSdp {
        c: cost_re / kappa,
        rows,
        b,
        slack_of_row,
        n_slack,
    };
    let (it, status, iterations, merit_history) = real.solve(opts);

    let x = linalg::real_to_herm(&it.x);
    let y: Vec<f64> = it
        .y
        .iter()
        .zip(&scale)
        .map(|(yy, an)| kappa * yy / an)
        .collect();
    let n_ineq = p.ineq.len();
    let mut z = p.cost.clone();
    for ((a, _, _), &yy) in p.rows().zip(&y) {
        z -= a * c(yy, 0.0);
    }
    let primal_objective = linalg::re_trace_prod(&p.cost, &x);
    let dual_objective = p.rows().zip(&y).map(|((_, bi, _), yy)| bi * yy).sum();
    SdpSolution {
        x,
        z,
        ineq_duals: y[..n_ineq].iter().map(|v| -v).collect(),
        eq_duals: y[n_ineq..].to_vec(),
        primal_objective,
        dual_objective,
        status,
        iterations,
        merit_history,
    }
}

fn write_matrix<W: Write>(w: &mut W, m: &CMat) -> Result<()> {
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols())
            .map(|j| format!("{} {}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Dump a problem as plain text: a `dim` line, then `cost`, `ineq <b>` and
/// `eq <b>` headers each followed by `dim` rows of `re im` pairs.
pub fn write_problem<W: Write>(mut w: W, p: &SdpProblem) -> Result<()> {
    writeln!(w, "dim {}", p.dim)?;
    writeln!(w, "cost")?;
    write_matrix(&mut w, &p.cost)?;
    for (a, b) in &p.ineq {
        writeln!(w, "ineq {b}")?;
        write_matrix(&mut w, a)?;
    }
    for (a, b) in &p.eq {
        writeln!(w, "eq {b}")?;
        write_matrix(&mut w, a)?;
    }
    Ok(())
}

/// Parse the format produced by [`write_problem`].
pub fn read_problem<R: BufRead>(r: R) -> Result<SdpProblem> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let perr = |m: &str| Error::Parse(m.to_string());
    let dim: usize = it
        .next()
        .and_then(|l| l.strip_prefix("dim "))
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| perr("missing dim line"))?;
    let read_mat = |it: &mut dyn Iterator<Item = &String>| -> Result<CMat> {
        let mut m = CMat::zeros(dim, dim);
        for i in 0..dim {
            let l = it.next().ok_or_else(|| perr("truncated matrix"))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * dim {
                return Err(perr("wrong row length"));
            }
            for j in 0..dim {
                m[(i, j)] = c(vals[2 * j], vals[2 * j + 1]);
            }
        }
        Ok(m)
    };
    let mut cost = None;
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    while let Some(h) = it.next() {
        let h = h.trim();
        if h == "cost" {
            cost = Some(read_mat(&mut it)?);
        } else if let Some(b) = h.strip_prefix("ineq ") {
            let b: f64 = b.trim().parse().map_err(|_| perr("bad ineq bound"))?;
            ineq.push((read_mat(&mut it)?, b));
        } else if let Some(b) = h.strip_prefix("eq ") {
            let b: f64 = b.trim().parse().map_err(|_| perr("bad eq value"))?;
            eq.push((read_mat(&mut it)?, b));
        } else {
            return Err(Error::Parse(format!("unexpected line `{h}`")));
        }
    }
    SdpProblem::new(cost.ok_or_else(|| perr("missing cost"))?, ineq, eq)
}
