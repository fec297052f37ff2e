//! End-to-end analyses behind the command-line tool.
//!
//! Every function writes its bundle into a staging directory inside the
//! output directory and moves the files into place only once everything
//! succeeded, so a failed run leaves no partial bundle behind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{
    extract_loadings, factor_scores, ipsatise_with, promax, solution_sweep, varimax, EigenSpectrum, FactorError,
    FactorScores, FactorSolution, IpsatiseSteps, IpsatisedMatrix, PrincipalComponents, SweepReport, VarimaxOptions,
};
use crate::persona::Population;
use crate::psychometrics::{
    biography_length_correlation, consistency_report, convergent_validity, factor_alphas, random_baseline_similarity,
    scale_items_for_factor, score_pir, symmetric_semantic_similarity, truncate_top, weighted_jaccard,
    weighted_jaccard_unsigned, within_set_similarity, AlphaMode, AntonymPairSet, ConsistencyReport, Dimension,
    EmbeddingTable, PsychometricsError, ReferenceLoadings, ScaleKey, ValidityTable,
};
use crate::report::{self, fmt_num, ReportError};
use crate::stats::format_p;
use crate::survey::{filter_items, ExclusionReport, ResponseMatrix, SurveyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no usable responses: {0}")]
    NoUsableResponses(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error(transparent)]
    Psychometrics(#[from] PsychometricsError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl PipelineError {
    /// 1 configuration, 2 empty or unusable data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Report(_) => 1,
            PipelineError::Factor(FactorError::NumericalFailure | FactorError::SingularTransform) => 3,
            PipelineError::Survey(SurveyError::Io { .. } | SurveyError::StoreMismatch { .. }) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    pub k_min: usize,
    pub k_max: usize,
    /// Use this k instead of the sweep's best.
    pub k: Option<usize>,
    pub promax_power: f64,
    /// Items per factor for alpha, tables, similarity and Jaccard.
    pub top_n: usize,
    pub alpha_mode: AlphaMode,
    pub drop_items: Vec<String>,
    pub drop_zero_variance: bool,
    pub within_step: bool,
    pub between_step: bool,
    /// Restrict factor scoring to each factor's strongest items.
    pub score_top_n: Option<usize>,
    pub varimax_tol: f64,
    pub varimax_max_iter: usize,
    pub baseline_set_size: usize,
    pub baseline_iterations: usize,
    pub scree_components: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            k_min: 5,
            k_max: 12,
            k: None,
            promax_power: 4.0,
            top_n: 30,
            alpha_mode: AlphaMode::Keyed,
            drop_items: Vec::new(),
            drop_zero_variance: true,
            within_step: true,
            between_step: true,
            score_top_n: None,
            varimax_tol: 1e-8,
            varimax_max_iter: 500,
            baseline_set_size: 25,
            baseline_iterations: 10,
            scree_components: 50,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(PipelineError::Config(format!("bad k range {}..={}", self.k_min, self.k_max)));
        }
        if self.k.is_some_and(|k| k < 2) {
            return Err(PipelineError::Config("k must be at least 2".into()));
        }
        if !(self.promax_power >= 1.0) {
            return Err(PipelineError::Config("promax_power must be >= 1".into()));
        }
        if self.top_n < 2 {
            return Err(PipelineError::Config("top_n must be at least 2".into()));
        }
        Ok(())
    }

    fn varimax_options(&self) -> VarimaxOptions {
        VarimaxOptions { tol: self.varimax_tol, max_iter: self.varimax_max_iter }
    }
}

/// Output files collected in a hidden directory and published on commit.
struct Staging {
    out: PathBuf,
    dir: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, PipelineError> {
        let io = |e: std::io::Error| ReportError::Io { path: out.to_path_buf(), source: e };
        std::fs::create_dir_all(out).map_err(io)?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(io)?;
        }
        std::fs::create_dir(&dir).map_err(io)?;
        Ok(Self { out: out.to_path_buf(), dir, files: Vec::new(), committed: false })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn commit(mut self) -> Result<Vec<PathBuf>, PipelineError> {
        let mut published = Vec::new();
        for name in &self.files {
            let target = self.out.join(name);
            std::fs::rename(self.dir.join(name), &target).map_err(|e| ReportError::Io { path: target.clone(), source: e })?;
            published.push(target);
        }
        self.committed = true;
        let _ = std::fs::remove_dir_all(&self.dir);
        Ok(published)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

/// A filtered, ipsatised lexical matrix ready for factoring.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: ResponseMatrix,
    pub exclusions: ExclusionReport,
    pub ipsatised: IpsatisedMatrix,
}

pub fn prepare(matrix: &ResponseMatrix, params: &AnalysisParams) -> Result<Prepared, PipelineError> {
    let observed = matrix.n_agents() * matrix.n_items() - matrix.masked_count();
    if observed == 0 {
        return Err(PipelineError::NoUsableResponses("the response matrix has no parsed ratings".into()));
    }
    let (filtered, exclusions) = filter_items(matrix, &params.drop_items, params.drop_zero_variance)?;
    if filtered.n_items() < 2 || filtered.n_agents() < 2 {
        return Err(PipelineError::NoUsableResponses(format!(
            "{} agents and {} items remain after filtering",
            filtered.n_agents(),
            filtered.n_items()
        )));
    }
    let steps = IpsatiseSteps { within: params.within_step, between: params.between_step };
    let ipsatised = ipsatise_with(&filtered, steps)?;
    Ok(Prepared { matrix: filtered, exclusions, ipsatised })
}

/// Sweep over the configured k range, clipped to the data's rank.
pub fn run_sweep(prepared: &Prepared, params: &AnalysisParams) -> Result<(EigenSpectrum, SweepReport), PipelineError> {
    let pcs = PrincipalComponents::new(&prepared.ipsatised)?;
    let rank = pcs.spectrum.rank();
    let k_max = params.k_max.min(rank);
    if k_max < params.k_min {
        return Err(PipelineError::NoUsableResponses(format!("data rank {rank} is below k_min {}", params.k_min)));
    }
    let data = &prepared.ipsatised;
    let report = solution_sweep(data, params.k_min..=k_max, params.promax_power, |sol| {
        factor_alphas(data, sol, params.top_n, params.alpha_mode).unwrap_or_else(|_| vec![None; sol.k()])
    })?;
    Ok((pcs.spectrum, report))
}

/// Unrotated, varimax and promax solutions for one k.
pub fn solve(data: &IpsatisedMatrix, k: usize, params: &AnalysisParams) -> Result<[FactorSolution; 3], PipelineError> {
    let unrotated = extract_loadings(data, k)?;
    let rotated = varimax(&unrotated, params.varimax_options())?;
    let oblique = promax(&rotated, params.promax_power)?;
    Ok([unrotated, rotated, oblique])
}

/// Chosen k: the fixed one, else the sweep's best, else the range start.
fn choose_k(params: &AnalysisParams, sweep: &SweepReport) -> (usize, &'static str) {
    match (params.k, sweep.best_k) {
        (Some(k), _) => (k, "fixed"),
        (None, Some(k)) => (k, "sweep"),
        (None, None) => (params.k_min, "fallback"),
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisExtras<'a> {
    pub reference: Option<&'a ReferenceLoadings>,
    pub embeddings: Option<&'a EmbeddingTable>,
    /// Terms for the random similarity baseline; defaults to the analyzed items.
    pub baseline_lexicon: Option<&'a [String]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub agents: usize,
    pub items_surveyed: usize,
    pub items_analyzed: usize,
    pub masked_cells: usize,
    pub exclusions: ExclusionReport,
    pub degenerate_rows: Vec<u32>,
    pub within_step: bool,
    pub between_step: bool,
    pub k: usize,
    pub k_source: &'static str,
    pub unrotated_cumulative_variance_pct: f64,
    pub promax_explained_variance_pct: Vec<f64>,
    pub alpha_mode: AlphaMode,
    pub alphas: Vec<Option<f64>>,
    pub average_alpha: Option<f64>,
    pub promax_power: f64,
    pub varimax_iterations: usize,
    pub varimax_converged: bool,
    pub similarity_baseline: Option<(f64, f64)>,
    pub terms_without_embedding: Vec<String>,
    pub files: Vec<String>,
}

/// Full lexical analysis bundle.
pub fn analyze(
    matrix: &ResponseMatrix,
    extras: &AnalysisExtras<'_>,
    params: &AnalysisParams,
    seed: u64,
    out: &Path,
) -> Result<AnalysisSummary, PipelineError> {
    params.validate()?;
    let prepared = prepare(matrix, params)?;
    let (spectrum, sweep) = run_sweep(&prepared, params)?;
    let (k, k_source) = choose_k(params, &sweep);
    let data = &prepared.ipsatised;
    let [unrotated, rotated, solution] = solve(data, k, params)?;
    let alphas = factor_alphas(data, &solution, params.top_n, params.alpha_mode)?;
    let defined: Vec<f64> = alphas.iter().flatten().copied().collect();
    let scores = factor_scores(data, &solution, params.score_top_n)?;

    let mut staging = Staging::new(out)?;
    report::write_scree_csv(&staging.path("scree.csv"), &spectrum)?;
    report::write_text(&staging.path("scree.svg"), &report::scree_svg(&spectrum, params.scree_components))?;
    report::write_json(&staging.path("sweep.json"), &sweep)?;
    report::write_loadings_csv(&staging.path("loadings.csv"), &solution)?;
    report::write_loadings_csv(&staging.path("loadings_varimax.csv"), &rotated)?;
    report::write_factor_correlation_csv(&staging.path("factor_correlations.csv"), &solution)?;
    report::write_top_items_csv(&staging.path("top_items.csv"), &solution, params.top_n)?;
    report::write_scores_csv(&staging.path("scores.csv"), &scores)?;
    let factor_rows = (0..k).map(|j| {
        vec![format!("F{}", j + 1), fmt_num(solution.explained_variance_pct[j]), alphas[j].map(fmt_num).unwrap_or_default()]
    });
    report::write_rows(
        &staging.path("factors.csv"),
        &["factor", "explained_variance_pct", "alpha"],
        factor_rows.collect::<Vec<_>>(),
    )?;

    let labels: Vec<String> = (1..=k).map(|j| format!("F{j}")).collect();
    let top_terms: Vec<Vec<(String, f64)>> = (0..k)
        .map(|j| {
            let s = scale_items_for_factor(&solution, j, params.top_n);
            s.item_ids.into_iter().zip(s.loadings).collect()
        })
        .collect();

    if let Some(reference) = extras.reference {
        let names: Vec<String> = reference.names().iter().map(|s| s.to_string()).collect();
        let mut signed = Vec::new();
        let mut unsigned = Vec::new();
        for terms in &top_terms {
            let mut row_s = Vec::new();
            let mut row_u = Vec::new();
            for (_, ref_terms) in &reference.dimensions {
                let ref_top = truncate_top(ref_terms, params.top_n);
                row_s.push(Some(weighted_jaccard(terms, &ref_top)?));
                row_u.push(Some(weighted_jaccard_unsigned(terms, &ref_top)?));
            }
            signed.push(row_s);
            unsigned.push(row_u);
        }
        report::write_grid_csv(&staging.path("jaccard.csv"), "factor", &labels, &names, &signed)?;
        report::write_grid_csv(&staging.path("jaccard_unsigned.csv"), "factor", &labels, &names, &unsigned)?;
        report::write_text(&staging.path("jaccard.svg"), &report::heatmap_svg("Weighted Jaccard", &labels, &names, &signed))?;
    }

    let mut similarity_baseline = None;
    let mut terms_without_embedding = Vec::new();
    if let Some(table) = extras.embeddings {
        let sets: Vec<Vec<String>> = top_terms
            .iter()
            .map(|terms| {
                let (found, lost): (Vec<String>, Vec<String>) =
                    terms.iter().map(|(t, _)| t.clone()).partition(|t| table.contains(t));
                terms_without_embedding.extend(lost);
                found
            })
            .collect();
        terms_without_embedding.sort();
        terms_without_embedding.dedup();
        let mut rows = Vec::new();
        let mut cross = Vec::new();
        for (j, set) in sets.iter().enumerate() {
            let within = if set.is_empty() { None } else { Some(within_set_similarity(set, table)?) };
            rows.push(vec![
                labels[j].clone(),
                set.len().to_string(),
                within.map(|w| fmt_num(w.value)).unwrap_or_default(),
                within.map(|w| w.degenerate.to_string()).unwrap_or_default(),
            ]);
            let mut row = Vec::new();
            for (i, other) in sets.iter().enumerate() {
                row.push(if set.is_empty() || other.is_empty() {
                    None
                } else if i == j {
                    within.map(|w| w.value)
                } else {
                    Some(symmetric_semantic_similarity(set, other, table)?)
                });
            }
            cross.push(row);
        }
        report::write_rows(&staging.path("similarity.csv"), &["factor", "terms", "within_similarity", "degenerate"], rows)?;
        report::write_grid_csv(&staging.path("similarity_cross.csv"), "factor", &labels, &labels, &cross)?;
        report::write_text(
            &staging.path("similarity_cross.svg"),
            &report::heatmap_svg("Semantic similarity", &labels, &labels, &cross),
        )?;
        let lexicon = extras.baseline_lexicon.unwrap_or(&prepared.matrix.item_ids);
        similarity_baseline = match random_baseline_similarity(
            lexicon,
            table,
            params.baseline_set_size,
            params.baseline_iterations,
            seed,
        ) {
            Ok(v) => Some(v),
            Err(PsychometricsError::TooSmall { .. }) => None,
            Err(e) => return Err(e.into()),
        };
    }

    let mut summary = AnalysisSummary {
        agents: prepared.matrix.n_agents(),
        items_surveyed: matrix.n_items(),
        items_analyzed: prepared.matrix.n_items(),
        masked_cells: prepared.matrix.masked_count(),
        exclusions: prepared.exclusions.clone(),
        degenerate_rows: data.degenerate_rows.clone(),
        within_step: data.within_done,
        between_step: data.between_done,
        k,
        k_source,
        unrotated_cumulative_variance_pct: unrotated.cumulative_variance_pct(),
        promax_explained_variance_pct: solution.explained_variance_pct.clone(),
        alpha_mode: params.alpha_mode,
        average_alpha: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        alphas,
        promax_power: params.promax_power,
        varimax_iterations: rotated.diagnostics.iterations,
        varimax_converged: rotated.diagnostics.converged,
        similarity_baseline,
        terms_without_embedding,
        files: Vec::new(),
    };
    let summary_path = staging.path("summary.json");
    summary.files = staging.files.clone();
    report::write_json(&summary_path, &summary)?;
    staging.commit()?;
    Ok(summary)
}

/// Scree data and the k sweep only.
pub fn sweep(matrix: &ResponseMatrix, params: &AnalysisParams, out: &Path) -> Result<SweepReport, PipelineError> {
    params.validate()?;
    let prepared = prepare(matrix, params)?;
    let (spectrum, report) = run_sweep(&prepared, params)?;
    let mut staging = Staging::new(out)?;
    report::write_scree_csv(&staging.path("scree.csv"), &spectrum)?;
    report::write_text(&staging.path("scree.svg"), &report::scree_svg(&spectrum, params.scree_components))?;
    report::write_json(&staging.path("sweep.json"), &report)?;
    let rows = report.entries.iter().map(|e| {
        vec![
            e.k.to_string(),
            e.average.map(fmt_num).unwrap_or_default(),
            fmt_num(e.cumulative_variance_pct),
            e.reliabilities.iter().map(|r| r.map(fmt_num).unwrap_or_default()).collect::<Vec<_>>().join(";"),
        ]
    });
    report::write_rows(
        &staging.path("sweep.csv"),
        &["k", "average_alpha", "cumulative_variance_pct", "alphas"],
        rows.collect::<Vec<_>>(),
    )?;
    staging.commit()?;
    Ok(report)
}

/// Lexical factor scores for the agents of a matrix, using the analysis settings.
pub fn lexical_scores(matrix: &ResponseMatrix, params: &AnalysisParams) -> Result<(FactorSolution, FactorScores), PipelineError> {
    params.validate()?;
    let prepared = prepare(matrix, params)?;
    let k = match params.k {
        Some(k) => k,
        None => {
            let (_, report) = run_sweep(&prepared, params)?;
            choose_k(params, &report).0
        }
    };
    let [_, _, solution] = solve(&prepared.ipsatised, k, params)?;
    let scores = factor_scores(&prepared.ipsatised, &solution, params.score_top_n)?;
    Ok((solution, scores))
}

/// Pairs each dimension with a distinct factor by greedy largest |r|.
pub fn auto_mapping(cross: &[Vec<Option<f64>>]) -> Vec<(usize, Dimension)> {
    let mut cells = Vec::new();
    for (d, row) in cross.iter().enumerate() {
        for (f, r) in row.iter().enumerate() {
            if let Some(r) = r {
                cells.push((r.abs(), d, f));
            }
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let (mut used_d, mut used_f) = (Vec::new(), Vec::new());
    let mut mapping = Vec::new();
    for (_, d, f) in cells {
        if !used_d.contains(&d) && !used_f.contains(&f) {
            used_d.push(d);
            used_f.push(f);
            mapping.push((f, Dimension::ALL[d]));
        }
    }
    mapping.sort_by_key(|(_, d)| d.index());
    mapping
}

/// Convergent validity of lexical factors against questionnaire scores.
///
/// Both matrices are restricted to the agents they share, in lexical order.
pub fn validity(
    lexical: &ResponseMatrix,
    pir: &ResponseMatrix,
    key: &ScaleKey,
    mapping: Option<&[(usize, Dimension)]>,
    params: &AnalysisParams,
    out: &Path,
) -> Result<ValidityTable, PipelineError> {
    let shared: Vec<u32> = lexical.agent_ids.iter().copied().filter(|a| pir.agent_index(*a).is_some()).collect();
    if shared.len() < 3 {
        return Err(PipelineError::NoUsableResponses(format!("{} agents answered both instruments", shared.len())));
    }
    let lexical = restrict_rows(lexical, &shared)?;
    let pir = restrict_rows(pir, &shared)?;
    let (_, scores) = lexical_scores(&lexical, params)?;
    let dims = score_pir(&pir, key)?;
    let k = scores.standardized.ncols();
    let provisional = convergent_validity(&scores, &dims, &[])?;
    let mapping: Vec<(usize, Dimension)> = match mapping {
        Some(m) => m.to_vec(),
        None => auto_mapping(&provisional.cross),
    };
    let table = convergent_validity(&scores, &dims, &mapping)?;

    let mut staging = Staging::new(out)?;
    let rows = table.entries.iter().map(|e| {
        vec![
            e.dimension.name().to_string(),
            format!("F{}", e.factor + 1),
            fmt_num(e.r),
            fmt_num(e.p),
            format_p(e.p),
            e.n.to_string(),
        ]
    });
    report::write_rows(&staging.path("validity.csv"), &["dimension", "factor", "r", "p", "p_display", "n"], rows.collect::<Vec<_>>())?;
    let dim_labels: Vec<String> = Dimension::ALL.iter().map(|d| d.name().to_string()).collect();
    let factor_labels: Vec<String> = (1..=k).map(|j| format!("F{j}")).collect();
    report::write_grid_csv(&staging.path("validity_cross.csv"), "dimension", &dim_labels, &factor_labels, &table.cross)?;
    report::write_text(
        &staging.path("validity_cross.svg"),
        &report::heatmap_svg("Factor scores vs questionnaire", &dim_labels, &factor_labels, &table.cross),
    )?;
    let dim_rows = dims.agent_ids.iter().zip(&dims.scores).map(|(id, s)| {
        let mut row = vec![id.to_string()];
        row.extend(s.iter().map(|v| v.map(fmt_num).unwrap_or_default()));
        row
    });
    report::write_rows(&staging.path("pir_scores.csv"), &["agent_id", "H", "E", "X", "A", "C", "O"], dim_rows.collect::<Vec<_>>())?;
    report::write_scores_csv(&staging.path("scores.csv"), &scores)?;
    report::write_json(&staging.path("validity.json"), &table)?;
    staging.commit()?;
    Ok(table)
}

fn restrict_rows(matrix: &ResponseMatrix, agents: &[u32]) -> Result<ResponseMatrix, PipelineError> {
    let mut cells = Vec::with_capacity(agents.len() * matrix.n_items());
    for a in agents {
        let r = matrix.agent_index(*a).expect("shared agent");
        cells.extend_from_slice(matrix.row(r));
    }
    Ok(ResponseMatrix::new(agents.to_vec(), matrix.item_ids.clone(), cells, matrix.scale.clone())?)
}

/// Antonym consistency, with the biography-length correlation when a population is given.
pub fn consistency(
    matrix: &ResponseMatrix,
    pairs: &AntonymPairSet,
    population: Option<&Population>,
    out: &Path,
) -> Result<ConsistencyReport, PipelineError> {
    if matrix.n_agents() * matrix.n_items() == matrix.masked_count() {
        return Err(PipelineError::NoUsableResponses("the response matrix has no parsed ratings".into()));
    }
    let report = consistency_report(matrix, pairs)?;
    let mut staging = Staging::new(out)?;
    let pair_rows = report.per_pair.iter().map(|p| {
        vec![p.adjective.clone(), p.antonym.clone(), p.mean.map(fmt_num).unwrap_or_default(), p.n.to_string()]
    });
    report::write_rows(&staging.path("consistency_pairs.csv"), &["adjective", "antonym", "mean", "n"], pair_rows.collect::<Vec<_>>())?;
    let agent_rows = report
        .per_agent
        .iter()
        .map(|a| vec![a.agent_id.to_string(), a.mean.map(fmt_num).unwrap_or_default(), a.n.to_string()]);
    report::write_rows(&staging.path("consistency_agents.csv"), &["agent_id", "mean", "n"], agent_rows.collect::<Vec<_>>())?;
    let mut summary = serde_json::json!({ "summary": report.summary });
    if let Some(pop) = population {
        let corr = biography_length_correlation(&report.per_agent, pop)?;
        let rows = corr.points.iter().map(|(id, len, mean)| vec![id.to_string(), len.to_string(), fmt_num(*mean)]);
        report::write_rows(&staging.path("length_consistency.csv"), &["agent_id", "biography_length", "consistency"], rows.collect::<Vec<_>>())?;
        let points: Vec<(f64, f64)> = corr.points.iter().map(|p| (p.1 as f64, p.2)).collect();
        report::write_text(
            &staging.path("length_consistency.svg"),
            &report::scatter_svg("Biography length vs consistency", "Biography length (characters)", "Mean consistency", &points),
        )?;
        summary["length_correlation"] = serde_json::json!({ "r": corr.r, "p": corr.p, "p_display": format_p(corr.p), "n": corr.points.len() });
    }
    report::write_json(&staging.path("consistency.json"), &summary)?;
    staging.commit()?;
    Ok(report)
}
