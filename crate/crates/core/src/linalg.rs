//! Dense linear algebra used throughout the crate.
//!
//! Everything here is a pure function of its inputs. Matrices are `nalgebra`
//! types; SVD and symmetric eigendecomposition go through `faer`. This module
//! adds the rank policy, the sign
//! conventions, and the block formulas (Hankel, oblique projection) that the
//! modeling code relies on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative cut for singular values.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Relative asymmetry accepted by [`eig_sym`] before it refuses the input.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// How singular values are truncated by [`pinv`], [`rank`] and [`svd_trunc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RankPolicy {
    /// Keep singular values `>= rel_tol * sigma_max`.
    RelativeThreshold { rel_tol: f64 },
    /// Keep exactly the leading `rank` nonzero singular values.
    FixedRank { rank: usize },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::RelativeThreshold {
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

impl RankPolicy {
    pub fn relative(rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(Error::Contract(format!(
                "rel_tol must be positive, got {rel_tol}"
            )));
        }
        Ok(RankPolicy::RelativeThreshold { rel_tol })
    }

    pub fn fixed(rank: usize) -> Self {
        RankPolicy::FixedRank { rank }
    }

    /// Number of entries of a descending spectrum that survive the policy.
    pub fn retained(&self, singular_values: &[f64]) -> usize {
        let smax = singular_values.first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return 0;
        }
        let positive = singular_values.iter().take_while(|&&s| s > 0.0).count();
        match *self {
            RankPolicy::RelativeThreshold { rel_tol } => singular_values
                .iter()
                .take_while(|&&s| s >= rel_tol * smax && s > 0.0)
                .count(),
            RankPolicy::FixedRank { rank } => rank.min(positive),
        }
    }
}

/// Full SVD with singular values sorted in descending order.
struct SortedSvd {
    u: Matrix,
    s: Vec<f64>,
    v: Matrix,
}

fn sorted_svd(m: &Matrix) -> SortedSvd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return SortedSvd {
            u: Matrix::zeros(rows, 0),
            s: Vec::new(),
            v: Matrix::zeros(cols, 0),
        };
    }
    let (u, sv, v) = match to_faer(m).thin_svd() {
        Ok(svd) => (
            from_faer(svd.U()),
            svd.S().column_vector().iter().copied().collect::<Vec<f64>>(),
            from_faer(svd.V()),
        ),
        Err(_) => {
            // iteration limit hit; fall back to the nalgebra routine
            let svd = m.clone().svd(true, true);
            let vt = svd.v_t.expect("v_t requested");
            (svd.u.expect("u requested"), svd.singular_values.as_slice().to_vec(), vt.transpose())
        }
    };
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort keeps the factorization order for ties, so output is reproducible
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut us = Matrix::zeros(rows, k);
    let mut vs = Matrix::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).clone_owned();
        let mut vcol = v.column(src).clone_owned();
        if sign_flip_needed(ucol.as_slice()) {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        us.set_column(dst, &ucol);
        vs.set_column(dst, &vcol);
        s.push(sv[src].max(0.0));
    }
    SortedSvd { u: us, s, v: vs }
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// True when the entry of largest magnitude is negative (first one wins ties).
fn sign_flip_needed(v: &[f64]) -> bool {
    let mut best = 0.0f64;
    let mut neg = false;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            neg = x < 0.0;
        }
    }
    neg
}

/// Block Hankel matrix of depth `depth`: block `(i, j)` is `w[i + j]`.
pub fn hankel(w: &[Vector], depth: usize) -> Result<Matrix> {
    let t = w.len();
    if depth == 0 || depth > t {
        return Err(Error::Dimension(format!(
            "Hankel depth {depth} must lie in 1..={t}"
        )));
    }
    let q = w[0].len();
    if let Some(bad) = w.iter().position(|v| v.len() != q) {
        return Err(Error::Shape(format!(
            "sample {bad} has dimension {}, expected {q}",
            w[bad].len()
        )));
    }
    let cols = t - depth + 1;
    let mut h = Matrix::zeros(depth * q, cols);
    for i in 0..depth {
        for j in 0..cols {
            h.view_mut((i * q, j), (q, 1)).copy_from(&w[i + j]);
        }
    }
    Ok(h)
}

/// Numerical rank under `policy`.
pub fn rank(m: &Matrix, policy: RankPolicy) -> usize {
    policy.retained(&singular_values(m))
}

/// Singular values, descending.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = match to_faer(m).singular_values() {
        Ok(s) => s,
        Err(_) => m.singular_values().as_slice().to_vec(),
    };
    s.iter_mut().for_each(|x| *x = x.max(0.0));
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Persistency of excitation: `hankel(w, order)` has full row rank.
pub fn is_pe(w: &[Vector], order: usize, policy: RankPolicy) -> Result<bool> {
    let h = hankel(w, order)?;
    Ok(rank(&h, policy) == h.nrows())
}

/// Moore-Penrose pseudoinverse with the policy's singular value cut.
pub fn pinv(m: &Matrix, policy: RankPolicy) -> Matrix {
    let (rows, cols) = m.shape();
    let svd = sorted_svd(m);
    let r = policy.retained(&svd.s);
    let mut out = Matrix::zeros(cols, rows);
    for i in 0..r {
        let v = svd.v.column(i);
        let u = svd.u.column(i);
        out += (v * u.transpose()) / svd.s[i];
    }
    out
}

/// Oblique projection of the row space of `a` onto the row space of `c`
/// along the row space of `b`.
///
/// `a [cᵀ bᵀ] (G†)[:, ..r] c` with `G = [c; b][c; b]ᵀ` and `r = rows(c)`.
pub fn oblique_project(a: &Matrix, b: &Matrix, c: &Matrix, policy: RankPolicy) -> Result<Matrix> {
    let k = a.ncols();
    if b.ncols() != k || c.ncols() != k {
        return Err(Error::Shape(format!(
            "column counts differ: A has {k}, B has {}, C has {}",
            b.ncols(),
            c.ncols()
        )));
    }
    let r = c.nrows();
    let stacked = vstack(&[c, b]);
    let gram = &stacked * stacked.transpose();
    let g_pinv = pinv(&gram, policy);
    let first = g_pinv.columns(0, r).clone_owned();
    Ok(a * stacked.transpose() * first * c)
}

/// Vertical concatenation. All blocks must share a column count.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column mismatch");
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Horizontal concatenation. All blocks must share a row count.
pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row mismatch");
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: Matrix,
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and each
/// eigenvector's largest-magnitude entry made positive.
///
/// Inputs that are symmetric up to `SYMMETRY_TOL * max|M|` are symmetrized
/// first; anything further from symmetric is rejected.
pub fn eig_sym(m: &Matrix) -> Result<SymEigen> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape(format!(
            "eig_sym needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Contract(format!(
            "matrix is not symmetric: max asymmetry {asym:e} vs scale {scale:e}"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let (evals, evecs) = match to_faer(&sym).self_adjoint_eigen(faer::Side::Lower) {
        Ok(e) => (e.S().column_vector().iter().copied().collect::<Vec<f64>>(), from_faer(e.U())),
        Err(_) => {
            let e = sym.symmetric_eigen();
            (e.eigenvalues.as_slice().to_vec(), e.eigenvectors)
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| evals[b].total_cmp(&evals[a]));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = evecs.column(src).clone_owned();
        if sign_flip_needed(v.as_slice()) {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
        values.push(evals[src]);
    }
    Ok(SymEigen { values, vectors })
}

/// Leading singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    /// Strictly positive, descending.
    pub s: Vec<f64>,
    pub v: Matrix,
    /// Complete descending spectrum before truncation.
    pub spectrum: Vec<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let sigma = Matrix::from_diagonal(&Vector::from_column_slice(&self.s));
        &self.u * sigma * self.v.transpose()
    }
}

/// SVD truncated to the rank selected by `policy`.
pub fn svd_trunc(m: &Matrix, policy: RankPolicy) -> TruncatedSvd {
    let svd = sorted_svd(m);
    let r = policy.retained(&svd.s);
    TruncatedSvd {
        u: svd.u.columns(0, r).clone_owned(),
        s: svd.s[..r].to_vec(),
        v: svd.v.columns(0, r).clone_owned(),
        spectrum: svd.s,
    }
}

/// Orthonormal basis of the column space of `m`.
pub fn orth(m: &Matrix, policy: RankPolicy) -> Matrix {
    svd_trunc(m, policy).u
}

/// Sine of the largest principal angle between the column spaces of `a` and `b`.
pub fn max_principal_angle_sin(a: &Matrix, b: &Matrix, policy: RankPolicy) -> f64 {
    let qa = orth(a, policy);
    let qb = orth(b, policy);
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let resid = &qa - &qb * (qb.transpose() * &qa);
    singular_values(&resid).first().copied().unwrap_or(0.0).min(1.0)
}

/// Relative distance of `v` from the column space of `h`: `‖v - h h† v‖ / ‖v‖`.
pub fn range_residual(h: &Matrix, v: &Vector, policy: RankPolicy) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let proj = h * (pinv(h, policy) * v);
    (v - proj).norm() / norm
}

/// Kronecker product.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Stacks a sequence of equally sized vectors into one long vector.
pub fn stack(vs: &[Vector]) -> Vector {
    let len: usize = vs.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(len);
    let mut i = 0;
    for v in vs {
        out.rows_mut(i, v.len()).copy_from(v);
        i += v.len();
    }
    out
}

/// Serde adapter writing a matrix as a list of rows.
pub mod serde_rows {
    use super::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("rows have different lengths".into());
        }
        Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
