use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hexlex::gateway::{BackendConfig, GatewayConfig};
use hexlex::pipeline::AnalysisParams;
use serde::Deserialize;

/// Run configuration. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub backend: Option<GatewayConfig>,
    /// Backend for the questionnaire when it differs from `backend`.
    pub pir_backend: Option<GatewayConfig>,
    pub population: Option<PathBuf>,
    pub generation: Option<GenerationConfig>,
    pub lexicon: Option<PathBuf>,
    pub pir_items: Option<PathBuf>,
    pub pir_key: Option<PathBuf>,
    pub lexical_store: Option<PathBuf>,
    pub pir_store: Option<PathBuf>,
    pub survey: SurveyConfig,
    pub reference_loadings: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub antonyms: Option<PathBuf>,
    pub analysis: AnalysisParams,
    /// Dimension letter to 1-based factor number; greedy matching when absent.
    pub validity_mapping: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// `group,proportion` CSV.
    pub census: PathBuf,
    /// JSON object mapping each group to its occupations.
    pub occupations: PathBuf,
    pub agents: usize,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub substantive_flaw: bool,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveyConfig {
    pub lexical_id: String,
    pub pir_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sync_writes: bool,
    pub workers: Option<usize>,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            lexical_id: "lexical".into(),
            pir_id: "pir".into(),
            temperature: hexlex::gateway::DEFAULT_TEMPERATURE,
            max_tokens: 200,
            sync_writes: true,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config.analysis.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.out,
            &mut self.population,
            &mut self.lexicon,
            &mut self.pir_items,
            &mut self.pir_key,
            &mut self.lexical_store,
            &mut self.pir_store,
            &mut self.reference_loadings,
            &mut self.embeddings,
            &mut self.antonyms,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(g) = &mut self.generation {
            fix(&mut g.census);
            fix(&mut g.occupations);
        }
        for backend in [&mut self.backend, &mut self.pir_backend].into_iter().flatten() {
            match &mut backend.backend {
                BackendConfig::Scripted { path } => fix(path),
                BackendConfig::Synthetic(files) => {
                    fix(&mut files.traits_path);
                    fix(&mut files.key_path);
                }
                BackendConfig::Http(_) => {}
            }
        }
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        match value {
            Some(p) => Ok(p),
            None => bail!("config is missing `{name}`"),
        }
    }
}
