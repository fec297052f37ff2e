use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use super::spectrum::{standardize_columns, PrincipalComponents};
use super::{promax, varimax, FactorError, FactorSolution, IpsatisedMatrix, VarimaxOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    pub agent_ids: Vec<u32>,
    /// Agents x k weighted sums.
    pub raw: DMatrix<f64>,
    /// `raw` with every column at mean 0 and SD 1; constant columns are zero.
    pub standardized: DMatrix<f64>,
}

/// Scores each agent as their ipsatised row times the pattern.
///
/// With `top_n`, only the `top_n` largest-magnitude loadings of each factor
/// are kept and the rest count as zero.
pub fn factor_scores(
    data: &IpsatisedMatrix,
    solution: &FactorSolution,
    top_n: Option<usize>,
) -> Result<FactorScores, FactorError> {
    if data.item_ids != solution.item_ids {
        return Err(FactorError::ShapeMismatch(format!(
            "matrix has {} items, solution has {} (or different order)",
            data.n_items(),
            solution.n_items()
        )));
    }
    let mut weights = solution.pattern.clone();
    if let Some(n) = top_n {
        for mut col in weights.column_iter_mut() {
            let mut order: Vec<usize> = (0..col.len()).collect();
            order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
            for &i in order.iter().skip(n) {
                col[i] = 0.0;
            }
        }
    }
    let raw = &data.values * weights;
    let standardized = if raw.nrows() >= 2 { standardize_columns(&raw) } else { DMatrix::zeros(raw.nrows(), raw.ncols()) };
    Ok(FactorScores { agent_ids: data.agent_ids.clone(), raw, standardized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    /// Per-factor reliability in solution order; `None` where undefined.
    pub reliabilities: Vec<Option<f64>>,
    /// Mean over the defined reliabilities.
    pub average: Option<f64>,
    pub explained_variance_pct: Vec<f64>,
    /// Unrotated cumulative explained variance of the first k components.
    pub cumulative_variance_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Smallest k with the highest average reliability.
    pub best_k: Option<usize>,
}

impl SweepReport {
    pub fn entry(&self, k: usize) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

/// Extracts, rotates and scores reliability for every k in the range.
///
/// `reliability` receives each promax solution and returns one value per factor.
pub fn solution_sweep<F>(
    data: &IpsatisedMatrix,
    k_range: RangeInclusive<usize>,
    power: f64,
    mut reliability: F,
) -> Result<SweepReport, FactorError>
where
    F: FnMut(&FactorSolution) -> Vec<Option<f64>>,
{
    if k_range.is_empty() {
        return Err(FactorError::InvalidArgument("empty k range".into()));
    }
    let pcs = PrincipalComponents::new(data)?;
    let mut entries = Vec::new();
    for k in k_range {
        let unrotated = pcs.loadings(k)?;
        let rotated = promax(&varimax(&unrotated, VarimaxOptions::default())?, power)?;
        let reliabilities = reliability(&rotated);
        let defined: Vec<f64> = reliabilities.iter().flatten().copied().filter(|v| v.is_finite()).collect();
        let average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        entries.push(SweepEntry {
            k,
            reliabilities,
            average,
            explained_variance_pct: rotated.explained_variance_pct.clone(),
            cumulative_variance_pct: unrotated.cumulative_variance_pct(),
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for e in &entries {
        if let Some(avg) = e.average {
            if best.map_or(true, |(_, b)| avg > b) {
                best = Some((e.k, avg));
            }
        }
    }
    Ok(SweepReport { entries, best_k: best.map(|(k, _)| k) })
}

/// Tucker congruence coefficient of two loading vectors.
pub fn congruence(a: &[f64], b: &[f64]) -> Result<f64, FactorError> {
    if a.len() != b.len() {
        return Err(FactorError::ShapeMismatch(format!("{} vs {} loadings", a.len(), b.len())));
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|y| y * y).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(FactorError::ZeroVector);
    }
    Ok((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorMatch {
    pub reference: usize,
    pub candidate: usize,
    /// Signed congruence; negative means the candidate is reflected.
    pub congruence: f64,
}

/// Pairs the columns of two loading matrices by repeatedly taking the
/// largest remaining |congruence|. Returns one match per column of the
/// narrower matrix, ordered by reference column.
pub fn align_factors(reference: &DMatrix<f64>, candidate: &DMatrix<f64>) -> Result<Vec<FactorMatch>, FactorError> {
    if reference.nrows() != candidate.nrows() {
        return Err(FactorError::ShapeMismatch(format!("{} vs {} items", reference.nrows(), candidate.nrows())));
    }
    let col = |m: &DMatrix<f64>, j: usize| -> Vec<f64> { DVectorView::from(m.column(j)).iter().copied().collect() };
    let mut pairs = Vec::new();
    for r in 0..reference.ncols() {
        for c in 0..candidate.ncols() {
            pairs.push((r, c, congruence(&col(reference, r), &col(candidate, c))?));
        }
    }
    pairs.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut used_r = vec![false; reference.ncols()];
    let mut used_c = vec![false; candidate.ncols()];
    let mut matches = Vec::new();
    for (r, c, phi) in pairs {
        if !used_r[r] && !used_c[c] {
            used_r[r] = true;
            used_c[c] = true;
            matches.push(FactorMatch { reference: r, candidate: c, congruence: phi });
        }
    }
    matches.sort_by_key(|m| m.reference);
    Ok(matches)
}
