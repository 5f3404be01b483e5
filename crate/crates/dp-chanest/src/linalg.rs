//! Complex linear-algebra kernels shared by all estimators.
//!
//! Index conventions are fixed here once and relied on everywhere else:
//!
//! * Linearization is column-major: the first index always varies fastest.
//! * `khatri_rao(A, B)` places the `B` index fastest, so `vec(a b^T) = b ⊗ a`
//!   holds and stacked channel matrices follow mechanically from the
//!   per-block vectorization.
//! * Rank decisions treat singular values below
//!   `sigma_max * max(rows, cols) * f64::EPSILON` as zero.
//!
//! Dense SVD and eigendecompositions are backed by `faer`; everything that
//! depends on an index convention is implemented here directly.

use faer::c64;
use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative cutoff below which singular values count as zero.
pub(crate) fn rank_tolerance(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * rows.max(cols) as f64 * f64::EPSILON
}

fn to_faer(a: &Array2<Complex64>) -> faer::Mat<c64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_faer(m: faer::MatRef<'_, c64>) -> Array2<Complex64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Frobenius norm.
pub fn frob(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Column-wise Kronecker (Khatri-Rao) product.
///
/// Column `k` of the result is `a_k ⊗ b_k`; the row index is `m * N + n`,
/// so the `B` index varies fastest.
pub fn khatri_rao(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "khatri_rao: column counts differ ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    let (m, n, k) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Array2::zeros((m * n, k));
    for col in 0..k {
        for i in 0..m {
            let ai = a[[i, col]];
            for j in 0..n {
                out[[i * n + j, col]] = ai * b[[j, col]];
            }
        }
    }
    Ok(out)
}

/// Column-major vectorization: stacks the columns of `a` top to bottom.
pub fn vec_mat(a: &Array2<Complex64>) -> Array1<Complex64> {
    let (rows, cols) = a.dim();
    let mut v = Array1::zeros(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            v[j * rows + i] = a[[i, j]];
        }
    }
    v
}

/// Inverse of [`vec_mat`]: reshapes a vector into `rows x cols` column-major.
pub fn unvec(v: &Array1<Complex64>, rows: usize, cols: usize) -> Result<Array2<Complex64>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "unvec: length {} does not match {rows}x{cols}",
            v.len()
        )));
    }
    let mut a = Array2::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            a[[i, j]] = v[j * rows + i];
        }
    }
    Ok(a)
}

/// Reshapes a linearized vector into a 3-way tensor, first index fastest.
pub fn tensorize3(
    v: &Array1<Complex64>,
    dims: (usize, usize, usize),
) -> Result<Array3<Complex64>> {
    let (d1, d2, d3) = dims;
    if v.len() != d1 * d2 * d3 {
        return Err(Error::Dimension(format!(
            "tensorize3: length {} does not match {d1}x{d2}x{d3}",
            v.len()
        )));
    }
    let mut t = Array3::zeros((d1, d2, d3));
    for i3 in 0..d3 {
        for i2 in 0..d2 {
            for i1 in 0..d1 {
                t[[i1, i2, i3]] = v[i1 + d1 * (i2 + d2 * i3)];
            }
        }
    }
    Ok(t)
}

/// Inverse of [`tensorize3`].
pub fn flatten3(t: &Array3<Complex64>) -> Array1<Complex64> {
    let (d1, d2, d3) = t.dim();
    let mut v = Array1::zeros(d1 * d2 * d3);
    for i3 in 0..d3 {
        for i2 in 0..d2 {
            for i1 in 0..d1 {
                v[i1 + d1 * (i2 + d2 * i3)] = t[[i1, i2, i3]];
            }
        }
    }
    v
}

/// Thin SVD `A = U diag(s) V^H` with `s` nonincreasing.
pub(crate) fn svd(a: &Array2<Complex64>) -> Result<(Array2<Complex64>, Vec<f64>, Array2<Complex64>)> {
    let m = to_faer(a);
    let svd = m
        .thin_svd()
        .map_err(|_| Error::InvalidArgument("SVD did not converge".into()))?;
    let k = a.nrows().min(a.ncols());
    let u = from_faer(svd.U());
    let v = from_faer(svd.V());
    let s = (0..k).map(|i| svd.S()[i].re).collect();
    Ok((u, s, v))
}

/// Singular values of `A`, nonincreasing.
pub fn singular_values(a: &Array2<Complex64>) -> Result<Vec<f64>> {
    let (_, s, _) = svd(a)?;
    Ok(s)
}

/// The `k` left singular vectors belonging to the `k` largest singular values.
///
/// The returned columns are orthonormal.
pub fn truncated_left_subspace(a: &Array2<Complex64>, k: usize) -> Result<Array2<Complex64>> {
    let min_dim = a.nrows().min(a.ncols());
    if k == 0 || k > min_dim {
        return Err(Error::Dimension(format!(
            "truncated_left_subspace: K = {k} not in 1..={min_dim} for a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let (u, _, _) = svd(a)?;
    Ok(u.slice(ndarray::s![.., ..k]).to_owned())
}

/// Minimum-norm least-squares solution of `min_Z ||Y - A Z||_F`.
///
/// Rank-deficient `A` is handled with pseudoinverse semantics.
pub fn ls_solve(a: &Array2<Complex64>, y: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    if a.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "ls_solve: A has {} rows but Y has {}",
            a.nrows(),
            y.nrows()
        )));
    }
    let (u, s, v) = svd(a)?;
    let tol = rank_tolerance(s.first().copied().unwrap_or(0.0), a.nrows(), a.ncols());
    // Z = V diag(1/s) U^H Y, dropping directions below the rank cutoff.
    let mut w = conj_t(&u).dot(y);
    for (i, &si) in s.iter().enumerate() {
        let scale = if si > tol { 1.0 / si } else { 0.0 };
        for j in 0..w.ncols() {
            w[[i, j]] *= scale;
        }
    }
    Ok(v.dot(&w))
}

/// Conjugate transpose.
pub fn conj_t(a: &Array2<Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((a.ncols(), a.nrows()), |(i, j)| a[[j, i]].conj())
}

/// Eigendecomposition of a general square complex matrix.
///
/// Returns `(values, vectors)` with `A V = V diag(values)`.
pub(crate) fn eig_general(a: &Array2<Complex64>) -> Result<(Array1<Complex64>, Array2<Complex64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "eig_general: matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let m = to_faer(a);
    let eig = m
        .eigen()
        .map_err(|_| Error::InvalidArgument("eigendecomposition did not converge".into()))?;
    let n = a.nrows();
    let vectors = from_faer(eig.U());
    let values = Array1::from_shape_fn(n, |i| eig.S()[i]);
    Ok((values, vectors))
}
