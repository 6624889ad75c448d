//! Dense complex linear-algebra helpers: column-stacking vectorization,
//! multi-site operator embedding, partial transposition, and null spaces.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::error::CoreError;

/// vec(X) with column stacking: vec(X)[i + n*j] = X[i, j].
///
/// Under this convention vec(A X B) = (B^T (x) A) vec(X), which is what
/// [`crate::liouvillian`] relies on when assembling superoperators.
pub fn vec_col(x: &Array2<C64>) -> Array1<C64> {
    let (n, m) = x.dim();
    let mut v = Array1::zeros(n * m);
    for j in 0..m {
        for i in 0..n {
            v[i + n * j] = x[(i, j)];
        }
    }
    v
}

/// Inverse of [`vec_col`] for square matrices.
pub fn unvec_col(v: &Array1<C64>, n: usize) -> Array2<C64> {
    assert_eq!(v.len(), n * n, "unvec_col: length {} != {n}*{n}", v.len());
    let mut x = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            x[(i, j)] = v[i + n * j];
        }
    }
    x
}

/// Identity matrix of dimension `n`.
pub fn eye(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

/// Embed a single-site 2x2 operator at `site` in an `n_sites`-qubit space.
///
/// Site 0 is the leftmost tensor factor (most significant bit of the basis
/// index); basis index bit 1 means "excited" for that site.
pub fn embed_site(op: &Array2<C64>, site: usize, n_sites: usize) -> Array2<C64> {
    assert!(site < n_sites, "embed_site: site {site} out of range {n_sites}");
    assert_eq!(op.dim(), (2, 2), "embed_site: operator must be 2x2");
    let left = eye(1 << site);
    let right = eye(1 << (n_sites - site - 1));
    ndarray::linalg::kron(&ndarray::linalg::kron(&left, op), &right)
}

/// Hermitian part (X + X^dagger)/2.
pub fn hermitize(x: &Array2<C64>) -> Array2<C64> {
    let xd = x.t().mapv(|z| z.conj());
    (x + &xd) / C64::new(2.0, 0.0)
}

/// Trace of a square complex matrix.
pub fn trace(x: &Array2<C64>) -> C64 {
    x.diag().sum()
}

/// Partial transpose of an n-qubit density matrix over the sites in `subset`.
///
/// Indexing matches [`embed_site`]: site 0 is the most significant bit.
pub fn partial_transpose(rho: &Array2<C64>, n_sites: usize, subset: &[usize]) -> Array2<C64> {
    let dim = 1 << n_sites;
    assert_eq!(rho.dim(), (dim, dim), "partial_transpose: dimension mismatch");
    let mut mask = 0usize;
    for &s in subset {
        assert!(s < n_sites, "partial_transpose: site {s} out of range {n_sites}");
        mask |= 1 << (n_sites - s - 1);
    }
    let mut out = Array2::zeros((dim, dim));
    for r in 0..dim {
        for c in 0..dim {
            // Swap the subset bits between row and column index.
            let r2 = (r & !mask) | (c & mask);
            let c2 = (c & !mask) | (r & mask);
            out[(r2, c2)] = rho[(r, c)];
        }
    }
    out
}

/// Eigenvalues of a general complex matrix.
pub fn eigvals_general(m: &Array2<C64>) -> Result<Array1<C64>, CoreError> {
    let (vals, _) = m.eig()?;
    Ok(vals)
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eig_general(m: &Array2<C64>) -> Result<(Array1<C64>, Array2<C64>), CoreError> {
    Ok(m.eig()?)
}

/// Real eigenvalues of a Hermitian matrix (ascending).
pub fn eigvals_hermitian(m: &Array2<C64>) -> Result<Array1<f64>, CoreError> {
    let (vals, _) = m.eigh(UPLO::Lower)?;
    Ok(vals)
}

/// Result of a rank-revealing null-space computation.
pub struct NullSpace {
    /// Right singular vector belonging to the smallest singular value.
    pub vector: Array1<C64>,
    /// All singular values, descending (LAPACK order).
    pub singular_values: Array1<f64>,
}

/// Null space of a square complex matrix via SVD.
pub fn null_space(m: &Array2<C64>) -> Result<NullSpace, CoreError> {
    let (_, s, vt) = m.svd(false, true)?;
    let vt = vt.ok_or_else(|| CoreError::Linalg("SVD returned no V^T".into()))?;
    let last = s.len() - 1;
    let vector = vt.row(last).mapv(|z| z.conj());
    Ok(NullSpace { vector, singular_values: s })
}
