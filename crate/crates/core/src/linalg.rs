//! Dense helpers shared by the solver, certificate and rounding code.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
///
/// Only the lower triangle is trusted; callers symmetrize beforehand when it matters.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry before eigendecomposition".into()));
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite values".into()));
    }
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let s = symmetrize(m);
    let (values, _) = sym_eigen(&s)?;
    Ok(values[0])
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Frobenius inner product.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Euclidean projection of `v` onto `{w >= 0, sum(w) = target}` by sort and threshold.
///
/// Sorting is stable on (value descending, index ascending) so ties resolve the
/// same way every run.
pub fn project_simplex(v: &[f64], target: f64) -> Vec<f64> {
    let tau = simplex_threshold(v, target);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Threshold `tau` such that `sum(max(v - tau, 0)) = target`.
pub fn simplex_threshold(v: &[f64], target: f64) -> f64 {
    simplex_threshold_with(v, target, &mut Vec::with_capacity(v.len()))
}

/// [`simplex_threshold`] reusing a caller-owned sort buffer.
pub fn simplex_threshold_with(v: &[f64], target: f64, sorted: &mut Vec<f64>) -> f64 {
    debug_assert!(target > 0.0);
    sorted.clear();
    sorted.extend_from_slice(v);
    // Equal values are interchangeable in the prefix sums, so sorting values
    // alone under a total order gives the same result as a stable (value, index) sort.
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - target) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    tau
}
