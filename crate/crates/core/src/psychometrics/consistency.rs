use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{norm_term, PsychometricsError};
use crate::survey::ResponseMatrix;

/// Agreement of two 9-point ratings of antonyms: `1 - |a + b - 10| / 8`.
///
/// Ratings that mirror each other around the midpoint score 1.
///
/// # Panics
/// If either rating is outside 1..=9.
pub fn consistency_score(a: u8, b: u8) -> f64 {
    assert!((1..=9).contains(&a) && (1..=9).contains(&b), "ratings must be in 1..=9, got ({a}, {b})");
    let d = (a as i32 + b as i32 - 10).abs();
    1.0 - d as f64 / 8.0
}

/// Adjective/antonym pairs, unique in either order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AntonymPairSet {
    pairs: Vec<(String, String)>,
}

impl AntonymPairSet {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self, PsychometricsError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b) in pairs {
            let (a, b) = (norm_term(&a), norm_term(&b));
            if a.is_empty() || b.is_empty() || a == b {
                return Err(PsychometricsError::InvalidArgument(format!("bad antonym pair ({a:?}, {b:?})")));
            }
            let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            if !seen.insert(key) {
                return Err(PsychometricsError::InvalidArgument(format!("pair ({a}, {b}) listed twice")));
            }
            out.push((a, b));
        }
        Ok(Self { pairs: out })
    }

    /// CSV with two columns, adjective then antonym.
    pub fn load(path: &Path) -> Result<Self, PsychometricsError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| PsychometricsError::csv(path, e))?;
        let pairs = reader
            .deserialize::<(String, String)>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PsychometricsError::csv(path, e))?;
        Self::new(pairs).map_err(|e| PsychometricsError::format(path, e.to_string()))
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConsistency {
    pub adjective: String,
    pub antonym: String,
    /// `None` when no agent rated both.
    pub mean: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConsistency {
    pub agent_id: u32,
    pub mean: Option<f64>,
    pub n: usize,
}

/// Distribution of the defined per-pair means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub pairs_scored: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of scored pairs with mean at least 0.75.
    pub share_at_least_075: f64,
    /// Mean of the defined per-agent means.
    pub agent_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub per_pair: Vec<PairConsistency>,
    pub per_agent: Vec<AgentConsistency>,
    pub summary: ConsistencySummary,
}

/// Scores every pair for every agent who rated both members.
pub fn consistency_report(matrix: &ResponseMatrix, pairs: &AntonymPairSet) -> Result<ConsistencyReport, PsychometricsError> {
    if matrix.scale.points() != 9 {
        return Err(PsychometricsError::InvalidArgument(format!(
            "consistency needs a 9-point scale, got {}",
            matrix.scale.points()
        )));
    }
    let mut columns = Vec::with_capacity(pairs.len());
    let mut absent = Vec::new();
    for (a, b) in pairs.pairs() {
        match (matrix.item_index(a), matrix.item_index(b)) {
            (Some(i), Some(j)) => columns.push((i, j)),
            (x, y) => {
                if x.is_none() {
                    absent.push(a.clone());
                }
                if y.is_none() {
                    absent.push(b.clone());
                }
            }
        }
    }
    if !absent.is_empty() {
        return Err(PsychometricsError::MissingTerm(absent));
    }

    let n = matrix.n_agents();
    let mut pair_sums = vec![(0.0, 0usize); columns.len()];
    let mut agent_sums = vec![(0.0, 0usize); n];
    for r in 0..n {
        for (p, &(i, j)) in columns.iter().enumerate() {
            if let (Some(x), Some(y)) = (matrix.get(r, i), matrix.get(r, j)) {
                let s = consistency_score(x.round() as u8, y.round() as u8);
                pair_sums[p].0 += s;
                pair_sums[p].1 += 1;
                agent_sums[r].0 += s;
                agent_sums[r].1 += 1;
            }
        }
    }
    let avg = |(sum, count): (f64, usize)| (count > 0).then(|| sum / count as f64);
    let per_pair: Vec<PairConsistency> = pairs
        .pairs()
        .iter()
        .zip(&pair_sums)
        .map(|((a, b), &acc)| PairConsistency { adjective: a.clone(), antonym: b.clone(), mean: avg(acc), n: acc.1 })
        .collect();
    let per_agent: Vec<AgentConsistency> = matrix
        .agent_ids
        .iter()
        .zip(&agent_sums)
        .map(|(&agent_id, &acc)| AgentConsistency { agent_id, mean: avg(acc), n: acc.1 })
        .collect();

    let scored: Vec<f64> = per_pair.iter().filter_map(|p| p.mean).collect();
    let agent_means: Vec<f64> = per_agent.iter().filter_map(|a| a.mean).collect();
    let summary = ConsistencySummary {
        pairs_scored: scored.len(),
        mean: crate::stats::mean(&scored),
        sd: crate::stats::std_dev(&scored).unwrap_or(0.0),
        min: scored.iter().copied().fold(f64::NAN, f64::min),
        max: scored.iter().copied().fold(f64::NAN, f64::max),
        share_at_least_075: if scored.is_empty() {
            f64::NAN
        } else {
            scored.iter().filter(|&&m| m >= 0.75).count() as f64 / scored.len() as f64
        },
        agent_mean: crate::stats::mean(&agent_means),
    };
    Ok(ConsistencyReport { per_pair, per_agent, summary })
}
