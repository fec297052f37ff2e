//! Agents x items response grids with a missing-cell mask.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::{ResponseStatus, ResponseStore};
use super::SurveyError;
use crate::likert::LikertScale;

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub agent_ids: Vec<u32>,
    pub item_ids: Vec<String>,
    /// Row-major; `None` marks a masked cell.
    cells: Vec<Option<f64>>,
    pub scale: LikertScale,
}

impl ResponseMatrix {
    pub fn new(
        agent_ids: Vec<u32>,
        item_ids: Vec<String>,
        cells: Vec<Option<f64>>,
        scale: LikertScale,
    ) -> Result<Self, SurveyError> {
        if cells.len() != agent_ids.len() * item_ids.len() {
            return Err(SurveyError::Shape(format!(
                "{} cells for {} agents x {} items",
                cells.len(),
                agent_ids.len(),
                item_ids.len()
            )));
        }
        Ok(Self { agent_ids, item_ids, cells, scale })
    }

    pub fn from_rows(
        agent_ids: Vec<u32>,
        item_ids: Vec<String>,
        rows: &[Vec<Option<f64>>],
        scale: LikertScale,
    ) -> Result<Self, SurveyError> {
        if rows.iter().any(|r| r.len() != item_ids.len()) {
            return Err(SurveyError::Shape("ragged rows".into()));
        }
        Self::new(agent_ids, item_ids, rows.concat(), scale)
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.n_items() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let p = self.n_items();
        &self.cells[row * p..(row + 1) * p]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_agents()).map(move |r| self.get(r, col))
    }

    pub fn masked_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn item_index(&self, item: &str) -> Option<usize> {
        self.item_ids.iter().position(|i| i == item)
    }

    pub fn agent_index(&self, agent: u32) -> Option<usize> {
        self.agent_ids.iter().position(|&a| a == agent)
    }

    /// Keeps the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let cells = (0..self.n_agents())
            .flat_map(|r| cols.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Self {
            agent_ids: self.agent_ids.clone(),
            item_ids: cols.iter().map(|&c| self.item_ids[c].clone()).collect(),
            cells,
            scale: self.scale.clone(),
        }
    }

    /// CSV with an `agent_id` column then one column per item; empty cells are masked.
    pub fn write_csv(&self, path: &Path) -> Result<(), SurveyError> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| SurveyError::csv(path, e))?;
        let mut header = vec!["agent_id".to_string()];
        header.extend(self.item_ids.iter().cloned());
        writer.write_record(&header).map_err(|e| SurveyError::csv(path, e))?;
        for (r, agent) in self.agent_ids.iter().enumerate() {
            let mut row = vec![agent.to_string()];
            row.extend(self.row(r).iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
            writer.write_record(&row).map_err(|e| SurveyError::csv(path, e))?;
        }
        writer.flush().map_err(|e| SurveyError::io(path, e))
    }

    pub fn read_csv(path: &Path, scale: LikertScale) -> Result<Self, SurveyError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| SurveyError::csv(path, e))?;
        let headers = reader.headers().map_err(|e| SurveyError::csv(path, e))?.clone();
        let item_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut agent_ids = Vec::new();
        let mut cells = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| SurveyError::csv(path, e))?;
            let agent = row.get(0).unwrap_or_default().trim().parse().map_err(|_| SurveyError::Format {
                path: path.display().to_string(),
                detail: format!("bad agent id {:?}", row.get(0)),
            })?;
            agent_ids.push(agent);
            for field in row.iter().skip(1) {
                let field = field.trim();
                cells.push(if field.is_empty() {
                    None
                } else {
                    Some(field.parse().map_err(|_| SurveyError::Format {
                        path: path.display().to_string(),
                        detail: format!("bad cell {field:?}"),
                    })?)
                });
            }
        }
        Self::new(agent_ids, item_ids, cells, scale)
    }
}

/// Assembles a matrix in the given agent and item order.
///
/// Only `Ok` records fill cells; every other status, and every cell without
/// a record, stays masked. Records for agents or items outside the given
/// lists are ignored.
pub fn build_matrix(store: &ResponseStore, agent_ids: &[u32], item_ids: &[String]) -> Result<ResponseMatrix, SurveyError> {
    let scale = LikertScale::new(store.header().scale.clone()).map_err(|e| SurveyError::Format {
        path: store.path().display().to_string(),
        detail: e.to_string(),
    })?;
    let rows: HashMap<u32, usize> = agent_ids.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let cols: HashMap<&str, usize> = item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let p = item_ids.len();
    let mut cells = vec![None; agent_ids.len() * p];
    for record in store.records() {
        if record.status != ResponseStatus::Ok {
            continue;
        }
        if let (Some(&r), Some(&c)) = (rows.get(&record.agent_id), cols.get(record.item_id.as_str())) {
            cells[r * p + c] = record.parsed_value.map(f64::from);
        }
    }
    ResponseMatrix::new(agent_ids.to_vec(), item_ids.to_vec(), cells, scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    Requested,
    ZeroVariance,
    NoObservations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub item_id: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub removed: Vec<Exclusion>,
}

impl ExclusionReport {
    pub fn items_with(&self, reason: ExclusionReason) -> Vec<&str> {
        self.removed.iter().filter(|e| e.reason == reason).map(|e| e.item_id.as_str()).collect()
    }
}

/// Drops the named items, then every item whose observed values are all equal.
pub fn filter_items(
    matrix: &ResponseMatrix,
    drop_items: &[String],
    drop_zero_variance: bool,
) -> Result<(ResponseMatrix, ExclusionReport), SurveyError> {
    let requested: HashSet<&str> = drop_items.iter().map(String::as_str).collect();
    if let Some(unknown) = requested.iter().find(|i| matrix.item_index(i).is_none()) {
        return Err(SurveyError::UnknownItem(unknown.to_string()));
    }
    let mut report = ExclusionReport::default();
    let mut keep = Vec::new();
    for (c, item) in matrix.item_ids.iter().enumerate() {
        let reason = if requested.contains(item.as_str()) {
            Some(ExclusionReason::Requested)
        } else if drop_zero_variance {
            let mut observed = matrix.column(c).flatten();
            match observed.next() {
                None => Some(ExclusionReason::NoObservations),
                Some(first) => observed.all(|v| v == first).then_some(ExclusionReason::ZeroVariance),
            }
        } else {
            None
        };
        match reason {
            Some(reason) => report.removed.push(Exclusion { item_id: item.clone(), reason }),
            None => keep.push(c),
        }
    }
    Ok((matrix.select_columns(&keep), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<Option<f64>>]) -> ResponseMatrix {
        let items = (0..rows[0].len()).map(|i| format!("i{i}")).collect();
        ResponseMatrix::from_rows((0..rows.len() as u32).collect(), items, rows, LikertScale::lexical()).unwrap()
    }

    #[test]
    fn constant_column_removed() {
        let m = matrix(&[
            vec![Some(1.0), Some(3.0), Some(2.0)],
            vec![Some(1.0), Some(4.0), None],
            vec![Some(1.0), Some(5.0), Some(2.0)],
        ]);
        let (filtered, report) = filter_items(&m, &[], true).unwrap();
        assert_eq!(filtered.item_ids, vec!["i1"]);
        assert_eq!(report.items_with(ExclusionReason::ZeroVariance), vec!["i0", "i2"]);
        let (again, report2) = filter_items(&filtered, &[], true).unwrap();
        assert_eq!(again, filtered);
        assert!(report2.removed.is_empty());
    }

    #[test]
    fn requested_items_removed_first() {
        let m = matrix(&[vec![Some(1.0), Some(3.0)], vec![Some(2.0), Some(4.0)]]);
        let (filtered, report) = filter_items(&m, &["i0".into()], true).unwrap();
        assert_eq!(filtered.item_ids, vec!["i1"]);
        assert_eq!(report.removed, vec![Exclusion { item_id: "i0".into(), reason: ExclusionReason::Requested }]);
        assert!(matches!(filter_items(&m, &["nope".into()], true), Err(SurveyError::UnknownItem(_))));
    }

    #[test]
    fn fully_masked_column_removed() {
        let m = matrix(&[vec![None, Some(3.0)], vec![None, Some(4.0)]]);
        let (_, report) = filter_items(&m, &[], true).unwrap();
        assert_eq!(report.items_with(ExclusionReason::NoObservations), vec!["i0"]);
        let (kept, _) = filter_items(&m, &[], false).unwrap();
        assert_eq!(kept.n_items(), 2);
    }

    #[test]
    fn csv_round_trip_keeps_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = matrix(&[vec![Some(1.0), None], vec![Some(9.0), Some(4.0)]]);
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "agent_id,i0,i1\n0,1,\n1,9,4\n");
        assert_eq!(ResponseMatrix::read_csv(&path, LikertScale::lexical()).unwrap(), m);
    }
}
