use nalgebra::DMatrix;

use super::FactorError;
use crate::survey::ResponseMatrix;

/// Which standardization steps to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpsatiseSteps {
    pub within: bool,
    pub between: bool,
}

impl Default for IpsatiseSteps {
    fn default() -> Self {
        Self { within: true, between: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpsatisedMatrix {
    pub agent_ids: Vec<u32>,
    pub item_ids: Vec<String>,
    /// Agents x items, every cell filled.
    pub values: DMatrix<f64>,
    /// Row-major observation mask of the source matrix.
    pub observed: Vec<bool>,
    pub within_done: bool,
    pub between_done: bool,
    /// Agents whose observed ratings had no spread; their rows are zero.
    pub degenerate_rows: Vec<u32>,
    /// Items with no spread after the within step; their columns are zero.
    pub degenerate_items: Vec<String>,
}

impl IpsatisedMatrix {
    pub fn n_agents(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.n_items() + col]
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let n = self.n_agents();
        let values = DMatrix::from_fn(n, cols.len(), |r, c| self.values[(r, cols[c])]);
        let observed = (0..n).flat_map(|r| cols.iter().map(move |&c| (r, c))).map(|(r, c)| self.is_observed(r, c)).collect();
        Self {
            agent_ids: self.agent_ids.clone(),
            item_ids: cols.iter().map(|&c| self.item_ids[c].clone()).collect(),
            values,
            observed,
            within_done: self.within_done,
            between_done: self.between_done,
            degenerate_rows: self.degenerate_rows.clone(),
            degenerate_items: self.degenerate_items.iter().filter(|i| cols.iter().any(|&c| &self.item_ids[c] == *i)).cloned().collect(),
        }
    }
}

/// Within-person then between-person standardization.
pub fn ipsatise(matrix: &ResponseMatrix) -> Result<IpsatisedMatrix, FactorError> {
    ipsatise_with(matrix, IpsatiseSteps::default())
}

/// Standardizes ratings in up to two steps, with `n - 1` standard deviations.
///
/// Within step: each agent's observed ratings become z-scores. Agents with
/// fewer than two observations or no spread are flagged and zeroed.
/// Masked cells are then filled with their item's mean over observed cells.
/// Between step: every item column becomes a z-score over all agents.
pub fn ipsatise_with(matrix: &ResponseMatrix, steps: IpsatiseSteps) -> Result<IpsatisedMatrix, FactorError> {
    let (n, p) = (matrix.n_agents(), matrix.n_items());
    if n == 0 || p == 0 {
        return Err(FactorError::TooSmall { what: "agents and items", needed: 1, got: n.min(p) });
    }
    let mut values = DMatrix::<f64>::zeros(n, p);
    let mut observed = vec![false; n * p];
    let mut degenerate_rows = Vec::new();

    for r in 0..n {
        let row = matrix.row(r);
        for (c, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                values[(r, c)] = *v;
                observed[r * p + c] = true;
            }
        }
        if !steps.within {
            continue;
        }
        let obs: Vec<f64> = row.iter().flatten().copied().collect();
        match standardize(&obs) {
            Some((mean, sd)) => {
                for c in 0..p {
                    if observed[r * p + c] {
                        values[(r, c)] = (values[(r, c)] - mean) / sd;
                    }
                }
            }
            None => {
                degenerate_rows.push(matrix.agent_ids[r]);
                for c in 0..p {
                    values[(r, c)] = 0.0;
                }
            }
        }
    }

    for c in 0..p {
        let obs: Vec<f64> = (0..n).filter(|&r| observed[r * p + c]).map(|r| values[(r, c)]).collect();
        let fill = if obs.is_empty() { 0.0 } else { obs.iter().sum::<f64>() / obs.len() as f64 };
        for r in 0..n {
            if !observed[r * p + c] {
                values[(r, c)] = fill;
            }
        }
    }

    let mut degenerate_items = Vec::new();
    if steps.between {
        for c in 0..p {
            let col: Vec<f64> = values.column(c).iter().copied().collect();
            match standardize(&col) {
                Some((mean, sd)) => {
                    for r in 0..n {
                        values[(r, c)] = (values[(r, c)] - mean) / sd;
                    }
                }
                None => {
                    degenerate_items.push(matrix.item_ids[c].clone());
                    values.column_mut(c).fill(0.0);
                }
            }
        }
    }

    Ok(IpsatisedMatrix {
        agent_ids: matrix.agent_ids.clone(),
        item_ids: matrix.item_ids.clone(),
        values,
        observed,
        within_done: steps.within,
        between_done: steps.between,
        degenerate_rows,
        degenerate_items,
    })
}

/// Mean and unbiased SD, or `None` when there is no spread to divide by.
fn standardize(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    // Spread below rounding noise counts as none.
    (sd > 1e-12 * mean.abs().max(1.0)).then_some((mean, sd))
}
