//! Small dense helpers built on the symmetric eigensolver.
//!
//! nalgebra's general SVD loses accuracy on rank-deficient input (singular
//! values off in the third digit at default epsilon), so decompositions here
//! go through `SymmetricEigen` instead.

use nalgebra::{DMatrix, SymmetricEigen};

use super::FactorError;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub(crate) fn sym_eigen_desc(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), FactorError> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0).ok_or(FactorError::NumericalFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(FactorError::NumericalFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Orthogonal polar factor of a square matrix: the `Q` maximizing `tr(Q' B)`.
pub(crate) fn polar_factor(b: &DMatrix<f64>) -> Result<DMatrix<f64>, FactorError> {
    let k = b.ncols();
    let (values, v) = sym_eigen_desc(b.transpose() * b)?;
    let max = values[0].max(0.0);
    if max > 0.0 && values[k - 1] > max * 1e-20 {
        let inv_sqrt = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, values.iter().map(|l| 1.0 / l.sqrt())));
        let q = b * &v * inv_sqrt * v.transpose();
        return Ok(reorthonormalize(q));
    }
    // Near-singular gradient: fall back to the SVD, whose vectors are still usable.
    let svd = b.clone().try_svd(true, true, 0.0, 100_000).ok_or(FactorError::NumericalFailure)?;
    let (u, v_t) = (svd.u.ok_or(FactorError::NumericalFailure)?, svd.v_t.ok_or(FactorError::NumericalFailure)?);
    Ok(reorthonormalize(u * v_t))
}

/// One Newton step toward the nearest orthogonal matrix, removing rounding drift.
fn reorthonormalize(q: DMatrix<f64>) -> DMatrix<f64> {
    let k = q.ncols();
    let qtq = q.transpose() * &q;
    &q * (DMatrix::identity(k, k) * 1.5 - qtq * 0.5)
}
