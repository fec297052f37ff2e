use serde::{Deserialize, Serialize};

use super::{Dimension, PsychometricsError, ScaleKey};
use crate::factors::FactorScores;
use crate::persona::Population;
use crate::stats::{pearson, pearson_p_value};
use crate::survey::ResponseMatrix;

use super::AgentConsistency;

/// Per-agent questionnaire scores, one slot per HEXACO dimension in `Dimension::ALL` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub agent_ids: Vec<u32>,
    /// `None` where the agent answered none of the dimension's items.
    pub scores: Vec<[Option<f64>; 6]>,
}

impl DimensionScores {
    pub fn column(&self, d: Dimension) -> Vec<Option<f64>> {
        self.scores.iter().map(|row| row[d.index()]).collect()
    }
}

/// Scores the questionnaire: reversed items map `v` to `points + 1 - v`, and
/// each dimension is the mean of its answered items.
pub fn score_pir(matrix: &ResponseMatrix, key: &ScaleKey) -> Result<DimensionScores, PsychometricsError> {
    let gaps: Vec<String> = matrix.item_ids.iter().filter(|i| key.get(i).is_none()).cloned().collect();
    if !gaps.is_empty() {
        return Err(PsychometricsError::KeyGap(gaps));
    }
    let flip = matrix.scale.points() as f64 + 1.0;
    let entries: Vec<_> = matrix.item_ids.iter().map(|i| key.get(i).expect("checked above")).collect();
    let scores = (0..matrix.n_agents())
        .map(|r| {
            let mut sums = [(0.0, 0usize); 6];
            for (c, entry) in entries.iter().enumerate() {
                if let Some(v) = matrix.get(r, c) {
                    let v = if entry.reversed { flip - v } else { v };
                    let slot = &mut sums[entry.dimension.index()];
                    slot.0 += v;
                    slot.1 += 1;
                }
            }
            sums.map(|(s, n)| (n > 0).then(|| s / n as f64))
        })
        .collect();
    Ok(DimensionScores { agent_ids: matrix.agent_ids.clone(), scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityEntry {
    pub factor: usize,
    pub dimension: Dimension,
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityTable {
    /// One entry per mapped (factor, dimension) pair.
    pub entries: Vec<ValidityEntry>,
    /// 6 x k correlations of every dimension with every factor; `None` if undefined.
    pub cross: Vec<Vec<Option<f64>>>,
}

/// Pearson correlations of lexical factor scores with questionnaire scores.
///
/// Agents lacking a dimension score are dropped from that dimension's
/// correlations only.
pub fn convergent_validity(
    lexical: &FactorScores,
    pir: &DimensionScores,
    mapping: &[(usize, Dimension)],
) -> Result<ValidityTable, PsychometricsError> {
    if lexical.agent_ids != pir.agent_ids {
        return Err(PsychometricsError::ShapeMismatch("factor scores and questionnaire scores list different agents".into()));
    }
    let k = lexical.standardized.ncols();
    let correlate = |factor: usize, d: Dimension| -> (Option<f64>, usize) {
        let (x, y): (Vec<f64>, Vec<f64>) = pir
            .column(d)
            .iter()
            .enumerate()
            .filter_map(|(r, v)| v.map(|v| (lexical.standardized[(r, factor)], v)))
            .unzip();
        (pearson(&x, &y), x.len())
    };
    let mut entries = Vec::new();
    for &(factor, dimension) in mapping {
        if factor >= k {
            return Err(PsychometricsError::InvalidArgument(format!("factor {factor} out of range for k = {k}")));
        }
        let (r, n) = correlate(factor, dimension);
        let r = r.ok_or_else(|| PsychometricsError::ConstantColumn(format!("factor {factor} or {dimension}")))?;
        entries.push(ValidityEntry { factor, dimension, r, p: pearson_p_value(r, n), n });
    }
    let cross = Dimension::ALL.iter().map(|&d| (0..k).map(|f| correlate(f, d).0).collect()).collect();
    Ok(ValidityTable { entries, cross })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthCorrelation {
    pub r: f64,
    pub p: f64,
    /// `(agent_id, biography length, consistency mean)` for plotting.
    pub points: Vec<(u32, usize, f64)>,
}

/// Correlates biography length with per-agent consistency.
pub fn biography_length_correlation(
    per_agent: &[AgentConsistency],
    population: &Population,
) -> Result<LengthCorrelation, PsychometricsError> {
    let mut points = Vec::new();
    for a in per_agent {
        let bio = population
            .get(a.agent_id)
            .ok_or_else(|| PsychometricsError::InvalidArgument(format!("agent {} not in population", a.agent_id)))?;
        if let Some(mean) = a.mean {
            points.push((a.agent_id, bio.length(), mean));
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.1 as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.2).collect();
    let r = match pearson(&x, &y) {
        Some(r) => r,
        None if crate::stats::variance(&x).unwrap_or(0.0) == 0.0 => {
            return Err(PsychometricsError::ConstantColumn("biography length".into()))
        }
        None => return Err(PsychometricsError::ConstantColumn("consistency".into())),
    };
    Ok(LengthCorrelation { r, p: pearson_p_value(r, points.len()), points })
}
