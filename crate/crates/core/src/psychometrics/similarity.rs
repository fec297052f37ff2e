use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dedupe, norm_term, PsychometricsError};

/// Top `n` entries by |loading|, earlier entries first on ties.
pub fn truncate_top(terms: &[(String, f64)], n: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..terms.len()).collect();
    order.sort_by(|&a, &b| terms[b].1.abs().total_cmp(&terms[a].1.abs()).then(a.cmp(&b)));
    order.into_iter().take(n).map(|i| terms[i].clone()).collect()
}

/// Lower-cases terms and keeps the strongest entry of any duplicate.
fn term_map(terms: &[(String, f64)]) -> Result<BTreeMap<String, f64>, PsychometricsError> {
    if terms.is_empty() {
        return Err(PsychometricsError::EmptySet);
    }
    let mut map: BTreeMap<String, f64> = BTreeMap::new();
    for (t, l) in terms {
        let entry = map.entry(norm_term(t)).or_insert(*l);
        if l.abs() > entry.abs() {
            *entry = *l;
        }
    }
    Ok(map)
}

/// Sign-aware weighted Jaccard similarity of two loading lists.
///
/// The factor may be read at either pole, so both orientations are scored
/// and the higher kept. A shared term adds `min(|a|, |b|)` to the numerator
/// only when its signs agree under the orientation. The denominator sums
/// `max(|a|, |b|)` over the union, with absent terms counting as 0.
pub fn weighted_jaccard(factor: &[(String, f64)], reference: &[(String, f64)]) -> Result<f64, PsychometricsError> {
    jaccard(factor, reference, true)
}

/// The same ratio with signs ignored.
pub fn weighted_jaccard_unsigned(factor: &[(String, f64)], reference: &[(String, f64)]) -> Result<f64, PsychometricsError> {
    jaccard(factor, reference, false)
}

fn jaccard(a: &[(String, f64)], b: &[(String, f64)], signed: bool) -> Result<f64, PsychometricsError> {
    let (a, b) = (term_map(a)?, term_map(b)?);
    let mut denominator = 0.0;
    let (mut same, mut flipped) = (0.0, 0.0);
    for (term, &la) in &a {
        match b.get(term) {
            Some(&lb) => {
                denominator += la.abs().max(lb.abs());
                let overlap = la.abs().min(lb.abs());
                if !signed || la.signum() == lb.signum() {
                    same += overlap;
                }
                if !signed || la.signum() == -lb.signum() {
                    flipped += overlap;
                }
            }
            None => denominator += la.abs(),
        }
    }
    denominator += b.iter().filter(|(t, _)| !a.contains_key(*t)).map(|(_, l)| l.abs()).sum::<f64>();
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok((same.max(flipped) / denominator).clamp(0.0, 1.0))
}

/// Reference factor definitions: dimension name to signed adjective loadings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceLoadings {
    /// In file order.
    pub dimensions: Vec<(String, Vec<(String, f64)>)>,
}

impl ReferenceLoadings {
    /// CSV with `dimension,adjective,loading` columns.
    pub fn load(path: &Path) -> Result<Self, PsychometricsError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| PsychometricsError::csv(path, e))?;
        let mut out = Self::default();
        for row in reader.deserialize::<(String, String, f64)>() {
            let (dimension, adjective, loading) = row.map_err(|e| PsychometricsError::csv(path, e))?;
            if loading == 0.0 || !loading.is_finite() {
                return Err(PsychometricsError::format(path, format!("loading for {adjective:?} must be nonzero")));
            }
            let dimension = dimension.trim().to_string();
            let pos = match out.dimensions.iter().position(|(d, _)| *d == dimension) {
                Some(p) => p,
                None => {
                    out.dimensions.push((dimension, Vec::new()));
                    out.dimensions.len() - 1
                }
            };
            out.dimensions[pos].1.push((norm_term(&adjective), loading));
        }
        Ok(out)
    }

    pub fn names(&self) -> Vec<&str> {
        self.dimensions.iter().map(|(d, _)| d.as_str()).collect()
    }
}

/// Unit-length word vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table from raw vectors, normalizing each; zero vectors are dropped.
    pub fn from_vectors(dim: usize, vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, PsychometricsError> {
        let mut table = Self { dim, vectors: HashMap::new() };
        for (term, v) in vectors {
            if v.len() != dim {
                return Err(PsychometricsError::ShapeMismatch(format!("{term:?} has {} components, expected {dim}", v.len())));
            }
            if let Some(u) = normalized(v) {
                table.vectors.insert(term, u);
            }
        }
        Ok(table)
    }

    pub fn get(&self, term: &str) -> Option<&[f64]> {
        self.vectors.get(term).or_else(|| self.vectors.get(&norm_term(term))).map(Vec::as_slice)
    }

    pub fn contains(&self, term: &str) -> bool {
        self.get(term).is_some()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn cosine(&self, a: &str, b: &str) -> f64 {
        let (a, b) = (self.get(a).expect("checked term"), self.get(b).expect("checked term"));
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn require<'a>(&self, terms: impl IntoIterator<Item = &'a String>) -> Result<(), PsychometricsError> {
        let missing: Vec<String> = terms.into_iter().filter(|t| !self.contains(t)).cloned().collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PsychometricsError::MissingTerm(missing))
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn parts(term: &str) -> Vec<&str> {
    term.split(|c: char| c == '-' || c == '_' || c.is_whitespace()).filter(|p| !p.is_empty()).collect()
}

/// Reads vectors for `vocabulary` from a word-vector text file.
///
/// The first line holds `count dim`; each further line is a token and `dim`
/// numbers. Tokens match exactly or after lower-casing. A term not in the
/// file whose hyphen- or space-separated parts all are gets the normalized
/// mean of the part vectors. Terms that cannot be resolved are returned as
/// the second element.
pub fn load_embeddings(path: &Path, vocabulary: &[String]) -> Result<(EmbeddingTable, Vec<String>), PsychometricsError> {
    let file = std::fs::File::open(path).map_err(|e| PsychometricsError::Io { path: path.to_path_buf(), source: e })?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| PsychometricsError::Io { path: path.to_path_buf(), source: e })?,
        None => return Err(PsychometricsError::format(path, "empty file")),
    };
    let dim: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [count, dim] if count.parse::<usize>().is_ok() => {
            dim.parse().map_err(|_| PsychometricsError::format(path, format!("bad header {header:?}")))?
        }
        _ => return Err(PsychometricsError::format(path, format!("bad header {header:?}"))),
    };
    if dim == 0 {
        return Err(PsychometricsError::format(path, "dimension must be positive"));
    }

    let mut wanted: HashSet<String> = HashSet::new();
    for term in vocabulary {
        wanted.insert(term.clone());
        wanted.insert(norm_term(term));
        for p in parts(term) {
            wanted.insert(p.to_string());
            wanted.insert(norm_term(p));
        }
    }
    let mut raw: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| PsychometricsError::Io { path: path.to_path_buf(), source: e })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        if !wanted.contains(token) || raw.contains_key(token) {
            continue;
        }
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| PsychometricsError::format(path, format!("line {}: bad number", i + 2)))?;
        if values.len() != dim {
            return Err(PsychometricsError::format(path, format!("line {}: {} values, expected {dim}", i + 2, values.len())));
        }
        raw.insert(token.to_string(), values);
    }
    let lookup = |t: &str| raw.get(t).or_else(|| raw.get(&norm_term(t)));

    let mut vectors = Vec::new();
    let mut missing = Vec::new();
    for term in vocabulary {
        if let Some(v) = lookup(term) {
            vectors.push((term.clone(), v.clone()));
            continue;
        }
        let pieces: Option<Vec<Vec<f64>>> = parts(term).iter().map(|p| lookup(p).cloned().and_then(normalized)).collect();
        match pieces {
            Some(pieces) if pieces.len() > 1 => {
                let mut mean = vec![0.0; dim];
                for p in &pieces {
                    mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / pieces.len() as f64);
                }
                vectors.push((term.clone(), mean));
            }
            _ => missing.push(term.clone()),
        }
    }
    let table = EmbeddingTable::from_vectors(dim, vectors)?;
    let dropped: Vec<String> = vocabulary.iter().filter(|t| !table.contains(t) && !missing.contains(t)).cloned().collect();
    missing.extend(dropped);
    Ok((table, missing))
}

/// Cross-set similarity: mean best-match cosine from A to B, averaged with B to A.
pub fn symmetric_semantic_similarity(a: &[String], b: &[String], table: &EmbeddingTable) -> Result<f64, PsychometricsError> {
    let (a, b) = (dedupe(a.iter().map(String::as_str)), dedupe(b.iter().map(String::as_str)));
    if a.is_empty() || b.is_empty() {
        return Err(PsychometricsError::EmptySet);
    }
    table.require(a.iter().chain(&b))?;
    let directed = |from: &[String], to: &[String]| {
        from.iter()
            .map(|x| to.iter().map(|y| table.cosine(x, y)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (directed(&a, &b) + directed(&b, &a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinSimilarity {
    pub value: f64,
    /// Set when there are no distinct pairs and `value` is the 1.0 convention.
    pub degenerate: bool,
}

/// Mean cosine over unordered pairs of distinct terms.
pub fn within_set_similarity(terms: &[String], table: &EmbeddingTable) -> Result<WithinSimilarity, PsychometricsError> {
    let terms = dedupe(terms.iter().map(String::as_str));
    if terms.is_empty() {
        return Err(PsychometricsError::EmptySet);
    }
    table.require(&terms)?;
    if terms.len() == 1 {
        return Ok(WithinSimilarity { value: 1.0, degenerate: true });
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            sum += table.cosine(&terms[i], &terms[j]);
            pairs += 1;
        }
    }
    Ok(WithinSimilarity { value: sum / pairs as f64, degenerate: false })
}

/// Within-set similarity of random lexicon samples: `(mean, sd)` over iterations.
///
/// Only lexicon terms present in the table are sampled. The SD is 0 for a
/// single iteration.
pub fn random_baseline_similarity(
    lexicon: &[String],
    table: &EmbeddingTable,
    set_size: usize,
    iterations: usize,
    seed: u64,
) -> Result<(f64, f64), PsychometricsError> {
    let pool: Vec<String> = dedupe(lexicon.iter().map(String::as_str)).into_iter().filter(|t| table.contains(t)).collect();
    if set_size == 0 || iterations == 0 {
        return Err(PsychometricsError::InvalidArgument("set_size and iterations must be positive".into()));
    }
    if pool.len() < set_size {
        return Err(PsychometricsError::TooSmall { what: "embedded lexicon terms", needed: set_size, got: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let draw: Vec<String> = sample(&mut rng, pool.len(), set_size).into_iter().map(|i| pool[i].clone()).collect();
        values.push(within_set_similarity(&draw, table)?.value);
    }
    Ok((crate::stats::mean(&values), crate::stats::std_dev(&values).unwrap_or(0.0)))
}
