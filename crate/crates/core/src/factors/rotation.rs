use nalgebra::DMatrix;

use super::linalg::{polar_factor, sym_eigen_desc};
use super::{canonicalize, FactorError, FactorSolution, Rotation, RotationDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarimaxOptions {
    /// Stop once one iteration improves the criterion by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

/// Raw varimax criterion: summed over columns, the variance of squared loadings.
pub fn varimax_criterion(loadings: &DMatrix<f64>) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|col| {
            let sq: f64 = col.iter().map(|v| v * v).sum::<f64>() / p;
            let quad: f64 = col.iter().map(|v| v.powi(4)).sum::<f64>() / p;
            quad - sq * sq
        })
        .sum()
}

/// Orthogonal varimax rotation with Kaiser normalization.
///
/// Each iteration replaces the rotation with the polar factor of the
/// criterion gradient. An update that would lower the criterion is rejected
/// and iteration stops, so the recorded trace never decreases.
pub fn varimax(solution: &FactorSolution, opts: VarimaxOptions) -> Result<FactorSolution, FactorError> {
    let k = solution.k();
    if k < 2 {
        return Err(FactorError::InvalidArgument(format!("varimax needs at least 2 factors, got {k}")));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(FactorError::InvalidArgument("varimax tol and max_iter must be positive".into()));
    }
    let loadings = &solution.pattern;
    let p = loadings.nrows();
    let norms: Vec<f64> = loadings.row_iter().map(|r| r.norm()).collect();
    let x = DMatrix::from_fn(p, k, |i, j| if norms[i] > 0.0 { loadings[(i, j)] / norms[i] } else { 0.0 });

    let mut t = DMatrix::<f64>::identity(k, k);
    let mut current = varimax_criterion(&x);
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let z = &x * &t;
        let col_ss: Vec<f64> = z.column_iter().map(|c| c.norm_squared() / p as f64).collect();
        let g = DMatrix::from_fn(p, k, |i, j| z[(i, j)].powi(3) - z[(i, j)] * col_ss[j]);
        let b = x.transpose() * g;
        let candidate = polar_factor(&b)?;
        let value = varimax_criterion(&(&x * &candidate));
        iterations += 1;
        if value < current {
            converged = true;
            break;
        }
        t = candidate;
        trace.push(value);
        let gain = value - current;
        current = value;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("varimax stopped after {iterations} iterations without converging");
    }

    let rotated = loadings * &t;
    let transform = &solution.transform * &t;
    let (pattern, phi, transform, explained_variance_pct) = canonicalize(rotated, DMatrix::identity(k, k), transform);
    Ok(FactorSolution {
        item_ids: solution.item_ids.clone(),
        pattern,
        factor_correlation: phi,
        explained_variance_pct,
        rotation: Rotation::Varimax,
        transform,
        diagnostics: RotationDiagnostics { iterations, converged, criterion_trace: trace },
    })
}

/// Promax oblique rotation of a varimax solution.
///
/// The target raises each loading to `power` keeping its sign; the
/// least-squares transform onto it is rescaled so the factor correlation
/// matrix has a unit diagonal.
pub fn promax(solution: &FactorSolution, power: f64) -> Result<FactorSolution, FactorError> {
    if solution.rotation != Rotation::Varimax {
        return Err(FactorError::InvalidArgument("promax expects a varimax solution".into()));
    }
    if !(power >= 1.0) || !power.is_finite() {
        return Err(FactorError::InvalidArgument(format!("promax power must be >= 1, got {power}")));
    }
    let x = &solution.pattern;
    let k = x.ncols();
    let target = x.map(|v| v.signum() * v.abs().powf(power));
    let xtx_inv = checked_inverse(&(x.transpose() * x))?;
    let mut u = xtx_inv * x.transpose() * target;
    // The rescaling below cancels any column scale of U, so drop it first; a
    // weak factor's target is tiny and would otherwise look singular.
    for mut col in u.column_iter_mut() {
        let norm = col.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(FactorError::SingularTransform);
        }
        col.unscale_mut(norm);
    }
    let d = checked_inverse(&(u.transpose() * &u))?.diagonal();
    for j in 0..k {
        let s = d[j].sqrt();
        u.column_mut(j).scale_mut(s);
    }
    let phi = checked_inverse(&(u.transpose() * &u))?;
    let pattern = x * &u;
    let transform = &solution.transform * &u;
    let (pattern, phi, transform, explained_variance_pct) = canonicalize(pattern, phi, transform);
    Ok(FactorSolution {
        item_ids: solution.item_ids.clone(),
        pattern,
        factor_correlation: phi,
        explained_variance_pct,
        rotation: Rotation::Promax { power },
        transform,
        diagnostics: solution.diagnostics.clone(),
    })
}

/// Inverse of a small symmetric matrix, refusing near-singular input.
fn checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FactorError> {
    let (values, _) = sym_eigen_desc(m.clone()).map_err(|_| FactorError::SingularTransform)?;
    let (max, min) = (values[0], values[values.len() - 1]);
    if !(max > 0.0) || !max.is_finite() || min <= max * 1e-12 {
        return Err(FactorError::SingularTransform);
    }
    let inv = m.clone().try_inverse().ok_or(FactorError::SingularTransform)?;
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(FactorError::SingularTransform)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unrotated(pattern: DMatrix<f64>) -> FactorSolution {
        let k = pattern.ncols();
        FactorSolution {
            item_ids: (0..pattern.nrows()).map(|i| format!("i{i}")).collect(),
            explained_variance_pct: super::super::explained_variance(&pattern, &DMatrix::identity(k, k)),
            pattern,
            factor_correlation: DMatrix::identity(k, k),
            rotation: Rotation::None,
            transform: DMatrix::identity(k, k),
            diagnostics: RotationDiagnostics::default(),
        }
    }

    fn rotate2(m: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        m * DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn kaiser(m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for mut row in out.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        out
    }

    #[test]
    fn simple_structure_is_a_fixed_point() {
        let l = DMatrix::from_row_slice(4, 2, &[0.8, 0.0, 0.7, 0.0, 0.0, 0.6, 0.0, -0.9]);
        let sol = varimax(&unrotated(l.clone()), VarimaxOptions::default()).unwrap();
        for i in 0..4 {
            let row_abs: Vec<f64> = sol.pattern.row(i).iter().map(|v| v.abs()).collect();
            let orig_abs: Vec<f64> = l.row(i).iter().map(|v| v.abs()).collect();
            let mut a = row_abs.clone();
            let mut b = orig_abs.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_planted_angle() {
        let l = DMatrix::from_row_slice(6, 2, &[0.9, 0.1, 0.8, 0.0, 0.7, -0.1, 0.0, 0.8, 0.1, 0.7, -0.1, 0.9]);
        let mixed = rotate2(&l, 0.4);
        let sol = varimax(&unrotated(mixed), VarimaxOptions::default()).unwrap();
        // Brute force over the Kaiser-normalized loadings.
        let normalized = kaiser(&l);
        let best = (0..15_708)
            .map(|s| varimax_criterion(&rotate2(&normalized, s as f64 * 1e-4)))
            .fold(f64::MIN, f64::max);
        let achieved = varimax_criterion(&kaiser(&sol.pattern));
        assert!((achieved - best).abs() < 1e-6, "{achieved} vs {best}");
        assert!(sol.diagnostics.converged);
    }

    #[test]
    fn promax_on_orthogonal_plant_stays_close() {
        let l = DMatrix::from_row_slice(
            6,
            2,
            &[0.8, 0.05, 0.75, -0.02, 0.7, 0.03, 0.02, 0.8, -0.04, 0.7, 0.01, 0.75],
        );
        let v = varimax(&unrotated(l), VarimaxOptions::default()).unwrap();
        let pm = promax(&v, 4.0).unwrap();
        assert!((&pm.pattern - &v.pattern).amax() < 0.05);
        assert!((pm.factor_correlation[(0, 1)]).abs() < 0.1);
        assert_eq!(pm.factor_correlation[(0, 0)], 1.0);
        assert_eq!(pm.factor_correlation[(0, 1)], pm.factor_correlation[(1, 0)]);
    }

    #[test]
    fn promax_rejects_degenerate_columns() {
        let l = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.7, 0.0, 0.2, 0.0]);
        let mut v = unrotated(l);
        v.rotation = Rotation::Varimax;
        assert_eq!(promax(&v, 4.0).unwrap_err(), FactorError::SingularTransform);
    }

    #[test]
    fn promax_handles_a_very_weak_factor() {
        // Third column's fourth powers are ~1e-8; the transform is still well defined.
        let mut vals = Vec::new();
        for i in 0..12 {
            let weak = 0.01 * ((i % 5) as f64 - 2.0);
            vals.extend_from_slice(&match i % 2 {
                0 => [0.8, 0.05, weak],
                _ => [0.05, 0.8, weak],
            });
        }
        let mut v = unrotated(DMatrix::from_row_slice(12, 3, &vals));
        v.rotation = Rotation::Varimax;
        let pm = promax(&v, 4.0).unwrap();
        assert!(pm.factor_correlation.clone().cholesky().is_some());
        assert!(pm.pattern.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn promax_requires_varimax_input() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(promax(&unrotated(l), 4.0), Err(FactorError::InvalidArgument(_))));
    }

    proptest! {
        #[test]
        fn trace_is_monotone_and_fit_preserved(vals in proptest::collection::vec(-1.0f64..1.0, 60)) {
            let l = DMatrix::from_row_slice(20, 3, &vals);
            prop_assume!(l.column_iter().all(|c| c.norm() > 0.1));
            let base = unrotated(l);
            let v = varimax(&base, VarimaxOptions::default()).unwrap();
            for w in v.diagnostics.criterion_trace.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            let t = &v.transform;
            prop_assert!((t.transpose() * t - DMatrix::identity(3, 3)).amax() < 1e-10);
            prop_assert!((v.common_variance() - base.common_variance()).amax() < 1e-8);
            if let Ok(pm) = promax(&v, 4.0) {
                prop_assert!((pm.common_variance() - base.common_variance()).amax() < 1e-8);
                prop_assert!(pm.factor_correlation.clone().cholesky().is_some());
                prop_assert!(pm.explained_variance_pct.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
