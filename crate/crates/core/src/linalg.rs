//! Dense complex linear-algebra helpers shared by the optimizers.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`, stored column-major, so
//! [`vec`] is a plain copy of the storage. Decompositions come from nalgebra;
//! this module only fixes orderings and conventions (descending singular
//! values, ascending eigenvalues, relative pseudo-inverse cut-off).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Default relative cut-off for [`pinv`].
pub const PINV_TOL: f64 = 1e-10;

/// Hermiticity tolerance used when a matrix is about to enter a Hermitian-only routine.
pub const HERM_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

/// Build a complex matrix from row-major real entries.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| cr(x)))
}

/// Diagonal complex matrix from real entries.
pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    let mut m = CMat::zeros(n, n);
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = cr(x);
    }
    m
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(m: &CMat) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Column-stacking vectorization.
pub fn vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMat::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut blk = out.view_mut((i * rb, j * cb), (rb, cb));
            blk.zip_apply(b, |o, x| *o = s * x);
        }
    }
    out
}

/// `Tr{A B}` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest absolute entry of `m - m^H`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Hermiticity test scaled by the matrix magnitude.
pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    hermitian_defect(m) <= tol * (1.0 + m.camax())
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cr(0.5)
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
///
/// The embedding has every eigenvalue of `H` twice and satisfies
/// `Tr{embed(A) embed(B)} = 2 Re Tr{A B}`.
pub fn herm_to_real(h: &CMat) -> Result<RMat> {
    let defect = hermitian_defect(h);
    if defect > HERM_TOL * (1.0 + h.camax()) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(embed_unchecked(h))
}

pub(crate) fn embed_unchecked(h: &CMat) -> RMat {
    let n = h.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i + n, j)] = z.im;
            out[(i, j + n)] = -z.im;
        }
    }
    out
}

/// Map a real `2n×2n` embedding back to the Hermitian matrix it represents.
///
/// Blocks are averaged, so the result is the projection of an arbitrary
/// symmetric matrix onto the set of valid embeddings.
pub fn real_to_herm(x: &RMat) -> CMat {
    let n = x.nrows() / 2;
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
            let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
            out[(i, j)] = c(re, im);
        }
    }
    hermitian_part(&out)
}

/// Singular value decomposition with singular values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v: CMat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> CMat {
        let s = diag_real(&self.singular_values);
        &self.u * s * self.v.adjoint()
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// Thin SVD, `m = U diag(s) V^H` with `s` descending.
pub fn svd(m: &CMat) -> SvdResult {
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("svd: U requested");
    let vt = dec.v_t.expect("svd: V^T requested");
    let s = dec.singular_values;
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut uu = CMat::zeros(u.nrows(), k);
    let mut vv = CMat::zeros(vt.ncols(), k);
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        uu.set_column(dst, &u.column(src));
        vv.set_column(dst, &vt.row(src).adjoint());
        sv.push(s[src]);
    }
    SvdResult {
        u: uu,
        singular_values: sv,
        v: vv,
    }
}

/// Hermitian eigendecomposition with eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let dec = h.symmetric_eigen();
    let vals = dec.eigenvalues;
    let vecs = dec.eigenvectors;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let mut sorted = CMat::zeros(vecs.nrows(), vecs.ncols());
    let mut sv = Vec::with_capacity(vals.len());
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &vecs.column(src));
        sv.push(vals[src]);
    }
    (sv, sorted)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn eigvalsh_real(m: &RMat) -> Vec<f64> {
    let h = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigvalsh(m).first().copied().unwrap_or(0.0)
}

/// Moore–Penrose pseudo-inverse; singular values below `tol * σ_max` are treated as zero.
pub fn pinv(m: &CMat, tol: f64) -> CMat {
    let dec = svd(m);
    let smax = dec.max_singular_value();
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    if smax == 0.0 {
        return out;
    }
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s > tol * smax {
            let v = dec.v.column(k);
            let u = dec.u.column(k);
            out += (v * u.adjoint()) * cr(1.0 / s);
        }
    }
    out
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn inv_hpd(m: &CMat) -> Option<CMat> {
    hermitian_part(m).cholesky().map(|ch| ch.inverse())
}

/// `ln det` of a Hermitian positive-definite matrix.
pub fn logdet_hpd(m: &CMat) -> Option<f64> {
    let ch = hermitian_part(m).cholesky()?;
    let l = ch.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Some(2.0 * acc)
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real trace of a (nominally Hermitian) product `Tr{A B}`.
pub fn re_trace_prod(a: &CMat, b: &CMat) -> f64 {
    trace_prod(a, b).re
}
