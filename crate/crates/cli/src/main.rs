mod config;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use hexlex::gateway::{Gateway, GatewayConfig};
use hexlex::persona::{generate_population, population_stats, CensusTargets, GenerationOptions, Population};
use hexlex::pipeline::{self, AnalysisExtras, PipelineError};
use hexlex::psychometrics::{load_embeddings, AntonymPairSet, Dimension, ReferenceLoadings, ScaleKey};
use hexlex::survey::{
    build_matrix, load_pir_items, run_lexical_survey, run_pir_survey, AdjectiveLexicon, ResponseMatrix, ResponseStore,
    SurveyError, SurveyOptions,
};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "hexlex", version, about = "Lexical personality-structure experiments on simulated agents")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a census-curated population of biographies.
    Generate,
    /// Administer a survey to the population, resuming any existing store.
    Survey {
        #[arg(long, value_enum, default_value_t = Which::Lexical)]
        instrument: Which,
    },
    /// Full lexical analysis bundle.
    Analyze,
    /// Convergent validity of lexical factors against the questionnaire.
    Validity,
    /// Antonym-pair consistency.
    Consistency,
    /// Scree data and the k sweep only.
    Sweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Lexical,
    Pir,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self { code: 1, error: e.into() }
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    Failure { code: e.exit_code() as u8, error: e.into() }
}

fn survey_failure(e: SurveyError) -> Failure {
    let code = match e {
        SurveyError::StoreCorrupt { .. } | SurveyError::Shape(_) => 2,
        _ => 1,
    };
    Failure { code, error: e.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out = Some(out);
    }
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Generate => generate(&config, &out),
        Command::Survey { instrument } => survey(&config, instrument),
        Command::Analyze => analyze(&config, &out),
        Command::Validity => validity(&config, &out),
        Command::Consistency => consistency(&config, &out),
        Command::Sweep => sweep(&config, &out),
    }
}

fn gateway(config: &Option<GatewayConfig>) -> Result<Gateway, Failure> {
    let cfg = config.as_ref().ok_or_else(|| anyhow!("config is missing `backend`"))?;
    Ok(Gateway::from_config(cfg)?)
}

fn generate(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let gen = config.generation.as_ref().ok_or_else(|| anyhow!("config is missing `generation`"))?;
    let gateway = gateway(&config.backend)?;
    let targets = CensusTargets::from_csv(&gen.census, gen.agents)?;
    let pool: HashMap<String, Vec<String>> = serde_json::from_str(
        &std::fs::read_to_string(&gen.occupations).with_context(|| format!("reading {}", gen.occupations.display()))?,
    )
    .with_context(|| format!("parsing {}", gen.occupations.display()))?;
    let target = config.population.clone().unwrap_or_else(|| out.join("population.json"));
    let mut options = GenerationOptions {
        population_name: gen.name.clone().unwrap_or_else(|| stem(&target)),
        substantive_flaw: gen.substantive_flaw,
        ..GenerationOptions::default()
    };
    if let Some(t) = gen.temperature {
        options.temperature = t;
    }
    if let Some(n) = gen.max_attempts {
        options.max_attempts = n;
    }
    let (population, log) = generate_population(&targets, &pool, &gateway, config.seed, &options)?;
    if let Some(parent) = target.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    population.save(&target)?;
    let stats = population_stats(&population, None)?;
    let stats_path = target.with_extension("stats.json");
    let stats_json = serde_json::json!({ "stats": stats, "attempts": log.attempts });
    std::fs::write(&stats_path, format!("{}\n", serde_json::to_string_pretty(&stats_json)?))?;
    log::info!("wrote {} agents to {}", population.agents.len(), target.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "population".into())
}

fn survey(config: &RunConfig, which: Which) -> Result<(), Failure> {
    let population = Population::load(RunConfig::require(&config.population, "population")?)?;
    let s = &config.survey;
    let summary = match which {
        Which::Lexical => {
            let gateway = gateway(&config.backend)?;
            let lexicon = AdjectiveLexicon::load(RunConfig::require(&config.lexicon, "lexicon")?).map_err(survey_failure)?;
            let store = RunConfig::require(&config.lexical_store, "lexical_store")?;
            let mut options = SurveyOptions::new(&s.lexical_id);
            apply(&mut options, s);
            run_lexical_survey(&population, &lexicon, &gateway, store, &options).map_err(survey_failure)?
        }
        Which::Pir => {
            let gateway = gateway(if config.pir_backend.is_some() { &config.pir_backend } else { &config.backend })?;
            let items = load_pir_items(RunConfig::require(&config.pir_items, "pir_items")?).map_err(survey_failure)?;
            let store = RunConfig::require(&config.pir_store, "pir_store")?;
            let mut options = SurveyOptions::new(&s.pir_id);
            apply(&mut options, s);
            run_pir_survey(&population, &items, &gateway, store, &options).map_err(survey_failure)?
        }
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn apply(options: &mut SurveyOptions, s: &config::SurveyConfig) {
    options.temperature = s.temperature;
    options.max_tokens = s.max_tokens;
    options.sync_writes = s.sync_writes;
    options.workers = s.workers;
}

/// Builds the agents x items matrix of a store.
///
/// Items follow `items` when given, otherwise first appearance in the store.
/// Agents follow the population when given, otherwise ascending id.
fn load_matrix(store: &Path, items: Option<Vec<String>>, population: Option<&Population>) -> Result<ResponseMatrix, Failure> {
    let store = ResponseStore::load(store).map_err(survey_failure)?;
    let items = items.unwrap_or_else(|| {
        let mut seen = BTreeSet::new();
        store.records().iter().filter(|r| seen.insert(r.item_id.clone())).map(|r| r.item_id.clone()).collect()
    });
    let agents: Vec<u32> = match population {
        Some(p) => p.agents.iter().map(|b| b.agent_id).collect(),
        None => store.records().iter().map(|r| r.agent_id).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    build_matrix(&store, &agents, &items).map_err(survey_failure)
}

fn optional_population(config: &RunConfig) -> Result<Option<Population>, Failure> {
    Ok(match &config.population {
        Some(p) if p.exists() => Some(Population::load(p)?),
        _ => None,
    })
}

fn lexical_matrix(config: &RunConfig, population: Option<&Population>) -> Result<ResponseMatrix, Failure> {
    let items = match &config.lexicon {
        Some(p) => Some(AdjectiveLexicon::load(p).map_err(survey_failure)?.adjectives().to_vec()),
        None => None,
    };
    load_matrix(RunConfig::require(&config.lexical_store, "lexical_store")?, items, population)
}

fn analyze(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let population = optional_population(config)?;
    let matrix = lexical_matrix(config, population.as_ref())?;
    let reference = match &config.reference_loadings {
        Some(p) => Some(ReferenceLoadings::load(p)?),
        None => None,
    };
    let embeddings = match &config.embeddings {
        Some(p) => {
            let (table, missing) = load_embeddings(p, &matrix.item_ids)?;
            if !missing.is_empty() {
                log::warn!("{} terms have no embedding", missing.len());
            }
            Some(table)
        }
        None => None,
    };
    let extras = AnalysisExtras { reference: reference.as_ref(), embeddings: embeddings.as_ref(), baseline_lexicon: None };
    let summary = pipeline::analyze(&matrix, &extras, &config.analysis, config.seed, out).map_err(pipeline_failure)?;
    log::info!(
        "k = {} ({}), cumulative variance {:.2}%, average alpha {}",
        summary.k,
        summary.k_source,
        summary.unrotated_cumulative_variance_pct,
        summary.average_alpha.map(|a| format!("{a:.3}")).unwrap_or_else(|| "NA".into())
    );
    Ok(())
}

fn sweep(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let population = optional_population(config)?;
    let matrix = lexical_matrix(config, population.as_ref())?;
    let report = pipeline::sweep(&matrix, &config.analysis, out).map_err(pipeline_failure)?;
    log::info!("best k = {:?}", report.best_k);
    Ok(())
}

fn validity(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let population = optional_population(config)?;
    let lexical = lexical_matrix(config, population.as_ref())?;
    let items = match &config.pir_items {
        Some(p) => Some(load_pir_items(p).map_err(survey_failure)?.into_iter().map(|i| i.id).collect()),
        None => None,
    };
    let pir = load_matrix(RunConfig::require(&config.pir_store, "pir_store")?, items, population.as_ref())?;
    let key = ScaleKey::load(RunConfig::require(&config.pir_key, "pir_key")?)?;
    let mapping = match &config.validity_mapping {
        Some(m) => Some(
            m.iter()
                .map(|(d, f)| {
                    let dim: Dimension = d.parse().map_err(|e: String| anyhow!(e))?;
                    if *f == 0 {
                        return Err(anyhow!("validity_mapping factors are 1-based"));
                    }
                    Ok((f - 1, dim))
                })
                .collect::<anyhow::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let table = pipeline::validity(&lexical, &pir, &key, mapping.as_deref(), &config.analysis, out).map_err(pipeline_failure)?;
    for e in &table.entries {
        log::info!("{}: F{} r = {:.3} (p {})", e.dimension.name(), e.factor + 1, e.r, hexlex::stats::format_p(e.p));
    }
    Ok(())
}

fn consistency(config: &RunConfig, out: &Path) -> Result<(), Failure> {
    let population = optional_population(config)?;
    let matrix = lexical_matrix(config, population.as_ref())?;
    let pairs = AntonymPairSet::load(RunConfig::require(&config.antonyms, "antonyms")?)?;
    let report = pipeline::consistency(&matrix, &pairs, population.as_ref(), out).map_err(pipeline_failure)?;
    log::info!(
        "{} pairs scored, mean {:.3}, {:.1}% at or above 0.75",
        report.summary.pairs_scored,
        report.summary.mean,
        100.0 * report.summary.share_at_least_075
    );
    Ok(())
}
