//! Reliability, similarity, consistency and validity measures.

mod consistency;
mod similarity;
mod validity;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consistency::{
    consistency_report, consistency_score, AgentConsistency, AntonymPairSet, ConsistencyReport, ConsistencySummary,
    PairConsistency,
};
pub use similarity::{
    load_embeddings, random_baseline_similarity, symmetric_semantic_similarity, truncate_top, weighted_jaccard,
    weighted_jaccard_unsigned, within_set_similarity, EmbeddingTable, ReferenceLoadings, WithinSimilarity,
};
pub use validity::{
    biography_length_correlation, convergent_validity, score_pir, DimensionScores, LengthCorrelation, ValidityEntry,
    ValidityTable,
};

use crate::factors::{FactorSolution, IpsatisedMatrix};

#[derive(Debug, Error)]
pub enum PsychometricsError {
    #[error("scale has no total-score variance")]
    DegenerateScale,
    #[error("need at least {needed} {what}, got {got}")]
    TooSmall { what: &'static str, needed: usize, got: usize },
    #[error("empty term set")]
    EmptySet,
    #[error("terms without embeddings: {0:?}")]
    MissingTerm(Vec<String>),
    #[error("items missing from the scale key: {0:?}")]
    KeyGap(Vec<String>),
    #[error("{0} is constant")]
    ConstantColumn(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file {path}: {detail}")]
    Format { path: String, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PsychometricsError {
    pub(crate) fn format(path: &Path, detail: impl Into<String>) -> Self {
        Self::Format { path: path.display().to_string(), detail: detail.into() }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        Self::format(path, e.to_string())
    }
}

/// The six HEXACO dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    H,
    E,
    X,
    A,
    C,
    O,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [Dimension::H, Dimension::E, Dimension::X, Dimension::A, Dimension::C, Dimension::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::H => "Honesty-Humility",
            Dimension::E => "Emotionality",
            Dimension::X => "Extraversion",
            Dimension::A => "Agreeableness",
            Dimension::C => "Conscientiousness",
            Dimension::O => "Openness to Experience",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Dimension {
    type Err = String;

    /// Accepts the letter or the full name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Dimension::ALL
            .into_iter()
            .find(|d| s.eq_ignore_ascii_case(&d.to_string()) || s.eq_ignore_ascii_case(d.name()))
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub item_id: String,
    pub dimension: Dimension,
    pub reversed: bool,
}

/// Questionnaire scoring key; each item appears once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleKey {
    entries: Vec<KeyEntry>,
    index: HashMap<String, usize>,
}

impl ScaleKey {
    pub fn new(entries: Vec<KeyEntry>) -> Result<Self, PsychometricsError> {
        let mut index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.item_id.clone(), i).is_some() {
                return Err(PsychometricsError::InvalidArgument(format!("item {} keyed twice", e.item_id)));
            }
        }
        Ok(Self { entries, index })
    }

    /// CSV with `item_id,dimension,reversed`; `reversed` accepts true/false, 1/0, yes/no, R.
    pub fn load(path: &Path) -> Result<Self, PsychometricsError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| PsychometricsError::csv(path, e))?;
        let mut entries = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| PsychometricsError::csv(path, e))?;
            let field = |i: usize| row.get(i).unwrap_or_default().trim();
            let dimension = field(1).parse().map_err(|e: String| PsychometricsError::format(path, e))?;
            let reversed = match field(2).to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "r" => true,
                "false" | "0" | "no" | "" => false,
                other => return Err(PsychometricsError::format(path, format!("bad reversed flag {other:?}"))),
            };
            entries.push(KeyEntry { item_id: field(0).to_string(), dimension, reversed });
        }
        Self::new(entries).map_err(|e| PsychometricsError::format(path, e.to_string()))
    }

    pub fn entries(&self) -> &[KeyEntry] {
        &self.entries
    }

    pub fn get(&self, item_id: &str) -> Option<&KeyEntry> {
        self.index.get(item_id).map(|&i| &self.entries[i])
    }
}

/// Cronbach's alpha of the columns of `data` (agents x items).
///
/// Each column is multiplied by its `keying` entry first. Returns exactly 1
/// when all keyed columns are identical and non-constant.
pub fn cronbach_alpha(data: &DMatrix<f64>, keying: &[f64]) -> Result<f64, PsychometricsError> {
    let (n, k) = data.shape();
    if keying.len() != k {
        return Err(PsychometricsError::ShapeMismatch(format!("{} keys for {k} items", keying.len())));
    }
    if k < 2 {
        return Err(PsychometricsError::TooSmall { what: "items", needed: 2, got: k });
    }
    if n < 2 {
        return Err(PsychometricsError::TooSmall { what: "agents", needed: 2, got: n });
    }
    let keyed = DMatrix::from_fn(n, k, |r, c| data[(r, c)] * keying[c]);
    let column_var = |c: usize| crate::stats::variance(keyed.column(c).as_slice()).unwrap_or(0.0);
    let totals: Vec<f64> = keyed.row_iter().map(|r| r.sum()).collect();
    let total_var = crate::stats::variance(&totals).unwrap_or(0.0);
    if total_var <= 0.0 {
        return Err(PsychometricsError::DegenerateScale);
    }
    if (1..k).all(|c| keyed.column(c) == keyed.column(0)) {
        return Ok(1.0);
    }
    let item_var: f64 = (0..k).map(column_var).sum();
    let kf = k as f64;
    Ok(kf / (kf - 1.0) * (1.0 - item_var / total_var))
}

/// Whether scale items are reverse-keyed by loading sign before scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    #[default]
    Keyed,
    Unkeyed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleItems {
    /// Item positions in the solution, strongest loading first.
    pub indices: Vec<usize>,
    pub item_ids: Vec<String>,
    pub loadings: Vec<f64>,
    /// +1 or -1 per item so every item points at the factor's positive pole.
    pub keying: Vec<f64>,
}

/// The `top_n` items with the largest |loading| on factor `j`.
pub fn scale_items_for_factor(solution: &FactorSolution, j: usize, top_n: usize) -> ScaleItems {
    let col = solution.pattern.column(j);
    let mut order: Vec<usize> = (0..col.len()).collect();
    order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
    order.truncate(top_n);
    ScaleItems {
        item_ids: order.iter().map(|&i| solution.item_ids[i].clone()).collect(),
        loadings: order.iter().map(|&i| col[i]).collect(),
        keying: order.iter().map(|&i| if col[i] < 0.0 { -1.0 } else { 1.0 }).collect(),
        indices: order,
    }
}

/// Alpha of each factor's top-loading items, computed on the ipsatised data.
///
/// Undefined values (degenerate scales) come back as `None`.
pub fn factor_alphas(
    data: &IpsatisedMatrix,
    solution: &FactorSolution,
    top_n: usize,
    mode: AlphaMode,
) -> Result<Vec<Option<f64>>, PsychometricsError> {
    if data.item_ids != solution.item_ids {
        return Err(PsychometricsError::ShapeMismatch("solution items differ from matrix items".into()));
    }
    (0..solution.k())
        .map(|j| {
            let scale = scale_items_for_factor(solution, j, top_n);
            let slice = DMatrix::from_fn(data.n_agents(), scale.indices.len(), |r, c| data.values[(r, scale.indices[c])]);
            let keying = match mode {
                AlphaMode::Keyed => scale.keying,
                AlphaMode::Unkeyed => vec![1.0; scale.indices.len()],
            };
            match cronbach_alpha(&slice, &keying) {
                Ok(a) => Ok(Some(a)),
                Err(PsychometricsError::DegenerateScale) | Err(PsychometricsError::TooSmall { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Lower-cased, trimmed term used for every cross-source comparison.
pub(crate) fn norm_term(s: &str) -> String {
    s.trim().to_lowercase()
}

pub(crate) fn dedupe<'a>(terms: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    terms.into_iter().map(norm_term).filter(|t| seen.insert(t.clone())).collect()
}
