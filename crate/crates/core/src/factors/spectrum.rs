use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::sym_eigen_desc;
use super::{canonicalize, explained_variance, FactorError, FactorSolution, IpsatisedMatrix, Rotation, RotationDiagnostics};

/// Eigenvalues of the item correlation matrix, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    /// The `min(n, p)` leading eigenvalues; the remaining `p - min(n, p)` are zero.
    pub eigenvalues: Vec<f64>,
    /// Number of items, the trace of the correlation matrix.
    pub total_variance: f64,
}

impl EigenSpectrum {
    /// Eigenvalues above a relative numerical floor.
    pub fn rank(&self) -> usize {
        let floor = 1e-10 * self.total_variance.max(1.0);
        self.eigenvalues.iter().take_while(|&&l| l > floor).count()
    }

    pub fn explained_variance_pct(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| 100.0 * l / self.total_variance).collect()
    }
}

/// Eigen-decomposition of the item correlation matrix.
///
/// When items outnumber agents the n x n Gram matrix of the standardized
/// data is decomposed instead, so the p x p matrix is never formed.
#[derive(Debug, Clone)]
pub struct PrincipalComponents {
    pub item_ids: Vec<String>,
    pub spectrum: EigenSpectrum,
    /// Items x r eigenvectors, columns matching `spectrum.eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl PrincipalComponents {
    pub fn new(data: &IpsatisedMatrix) -> Result<Self, FactorError> {
        let (n, p) = (data.n_agents(), data.n_items());
        if n < 2 {
            return Err(FactorError::TooSmall { what: "agents", needed: 2, got: n });
        }
        if p < 2 {
            return Err(FactorError::TooSmall { what: "items", needed: 2, got: p });
        }
        let z = standardize_columns(&data.values);
        let scale = (n - 1) as f64;
        let (eigenvalues, eigenvectors) = if p <= n {
            let (values, vectors) = sym_eigen_desc(z.transpose() * &z / scale)?;
            (values.into_iter().map(|l| l.max(0.0)).collect::<Vec<_>>(), vectors)
        } else {
            // Wide data: decompose the n x n Gram matrix and map its
            // eigenvectors back through Z'.
            let (values, u) = sym_eigen_desc(&z * z.transpose() / scale)?;
            let values: Vec<f64> = values.into_iter().map(|l| l.max(0.0)).collect();
            let floor = 1e-12 * p as f64;
            let mut v = z.transpose() * u;
            for (j, &l) in values.iter().enumerate() {
                if l > floor {
                    v.column_mut(j).scale_mut(1.0 / (scale * l).sqrt());
                } else {
                    v.column_mut(j).fill(0.0);
                }
            }
            (values, v)
        };
        Ok(Self {
            item_ids: data.item_ids.clone(),
            spectrum: EigenSpectrum { eigenvalues, total_variance: p as f64 },
            eigenvectors,
        })
    }

    /// Unrotated principal-component loadings for the first `k` components.
    pub fn loadings(&self, k: usize) -> Result<FactorSolution, FactorError> {
        let rank = self.spectrum.rank();
        if k == 0 || k > rank {
            return Err(FactorError::RankError { k, rank });
        }
        let p = self.eigenvectors.nrows();
        let pattern = DMatrix::from_fn(p, k, |i, j| self.eigenvectors[(i, j)] * self.spectrum.eigenvalues[j].sqrt());
        let identity = DMatrix::identity(k, k);
        let (pattern, phi, transform, _) = canonicalize(pattern, identity.clone(), identity);
        let explained_variance_pct = explained_variance(&pattern, &phi);
        Ok(FactorSolution {
            item_ids: self.item_ids.clone(),
            pattern,
            factor_correlation: phi,
            explained_variance_pct,
            rotation: Rotation::None,
            transform,
            diagnostics: RotationDiagnostics { converged: true, ..Default::default() },
        })
    }
}

/// Columns scaled to mean 0 and unbiased SD 1; constant columns become zero.
pub(crate) fn standardize_columns(values: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows() as f64;
    let mut z = values.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        if sd > 1e-12 {
            col /= sd;
        } else {
            col.fill(0.0);
        }
    }
    z
}

pub fn eigen_spectrum(data: &IpsatisedMatrix) -> Result<EigenSpectrum, FactorError> {
    Ok(PrincipalComponents::new(data)?.spectrum)
}

pub fn extract_loadings(data: &IpsatisedMatrix, k: usize) -> Result<FactorSolution, FactorError> {
    PrincipalComponents::new(data)?.loadings(k)
}
