//! Ipsatisation, principal components and factor rotation.
//!
//! All functions are pure. Matrices are `nalgebra::DMatrix<f64>` with agents
//! (respondents) as rows and items as columns; loading matrices are items x
//! factors.

mod ipsatise;
mod linalg;
mod rotation;
mod scores;
mod spectrum;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ipsatise::{ipsatise, ipsatise_with, IpsatiseSteps, IpsatisedMatrix};
pub use rotation::{promax, varimax, varimax_criterion, VarimaxOptions};
pub use scores::{align_factors, congruence, factor_scores, solution_sweep, FactorMatch, FactorScores, SweepEntry, SweepReport};
pub use spectrum::{eigen_spectrum, extract_loadings, EigenSpectrum, PrincipalComponents};

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("need at least {needed} {what}, got {got}")]
    TooSmall { what: &'static str, needed: usize, got: usize },
    #[error("decomposition did not converge")]
    NumericalFailure,
    #[error("requested {k} factors but only {rank} positive eigenvalues")]
    RankError { k: usize, rank: usize },
    #[error("promax transform is singular; varimax loadings are column-degenerate")]
    SingularTransform,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero vector in congruence")]
    ZeroVector,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rotation {
    None,
    Varimax,
    Promax { power: f64 },
}

/// Iteration record of an iterative rotation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RotationDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Varimax criterion before the first and after every iteration.
    pub criterion_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSolution {
    pub item_ids: Vec<String>,
    /// Items x k pattern loadings.
    pub pattern: DMatrix<f64>,
    /// k x k factor correlations; identity for orthogonal solutions.
    pub factor_correlation: DMatrix<f64>,
    pub explained_variance_pct: Vec<f64>,
    pub rotation: Rotation,
    /// Maps unrotated loadings onto this pattern: `pattern = unrotated * T`.
    pub transform: DMatrix<f64>,
    pub diagnostics: RotationDiagnostics,
}

impl FactorSolution {
    pub fn k(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn n_items(&self) -> usize {
        self.pattern.nrows()
    }

    /// Common variance reproduced by the solution, `P * Phi * P'`.
    pub fn common_variance(&self) -> DMatrix<f64> {
        &self.pattern * &self.factor_correlation * self.pattern.transpose()
    }

    pub fn cumulative_variance_pct(&self) -> f64 {
        self.explained_variance_pct.iter().sum()
    }

    /// Column `j` as `(item, loading)` pairs.
    pub fn column_terms(&self, j: usize) -> Vec<(String, f64)> {
        self.item_ids.iter().cloned().zip(self.pattern.column(j).iter().copied()).collect()
    }
}

/// Percent of total variance per factor: `100 * diag(Phi * P'P) / p`.
///
/// For orthogonal solutions this is the column sum of squared loadings; for
/// oblique ones the entries still sum to the common variance `tr(P Phi P')`.
pub(crate) fn explained_variance(pattern: &DMatrix<f64>, phi: &DMatrix<f64>) -> Vec<f64> {
    let p = pattern.nrows() as f64;
    let ss = phi * (pattern.transpose() * pattern);
    (0..pattern.ncols()).map(|j| 100.0 * ss[(j, j)] / p).collect()
}

/// Flips each column so its largest-magnitude entry is positive (first on ties).
pub(crate) fn column_signs(pattern: &DMatrix<f64>) -> Vec<f64> {
    pattern
        .column_iter()
        .map(|col| {
            let mut best = 0.0f64;
            for &v in col.iter() {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
            if best < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect()
}

/// Applies the sign convention and orders factors by explained variance.
pub(crate) fn canonicalize(
    pattern: DMatrix<f64>,
    phi: DMatrix<f64>,
    transform: DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let k = pattern.ncols();
    let signs = column_signs(&pattern);
    let variance = explained_variance(&pattern, &phi);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| variance[b].total_cmp(&variance[a]).then(a.cmp(&b)));
    let new_pattern = DMatrix::from_fn(pattern.nrows(), k, |i, j| pattern[(i, order[j])] * signs[order[j]]);
    let new_transform = DMatrix::from_fn(transform.nrows(), k, |i, j| transform[(i, order[j])] * signs[order[j]]);
    let mut new_phi = DMatrix::from_fn(k, k, |a, b| phi[(order[a], order[b])] * signs[order[a]] * signs[order[b]]);
    for a in 0..k {
        new_phi[(a, a)] = 1.0;
        for b in 0..a {
            let avg = 0.5 * (new_phi[(a, b)] + new_phi[(b, a)]);
            new_phi[(a, b)] = avg;
            new_phi[(b, a)] = avg;
        }
    }
    let variance = order.iter().map(|&j| variance[j]).collect();
    (new_pattern, new_phi, new_transform, variance)
}
