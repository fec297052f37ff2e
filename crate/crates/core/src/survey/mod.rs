//! Survey administration: adjective self-ratings and the HEXACO-PI-R 100.
//!
//! Every (agent, item) pair is asked in a fresh two-message context. Outcomes
//! go to an append-only [`ResponseStore`]; a rerun against an existing store
//! only issues the requests whose keys are not yet recorded.

mod matrix;
mod store;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use matrix::{build_matrix, filter_items, Exclusion, ExclusionReason, ExclusionReport, ResponseMatrix};
pub use store::{ResponseRecord, ResponseStatus, ResponseStore, StoreHeader, STORE_FORMAT};

use crate::gateway::{ChatRequest, Gateway, GatewayError, Outcome, DEFAULT_TEMPERATURE};
use crate::likert::LikertScale;
use crate::persona::{Biography, Population};

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("response store {path} is corrupt at line {line}: {detail}")]
    StoreCorrupt { path: String, line: usize, detail: String },
    #[error("response store {path} does not belong to this survey: {detail}")]
    StoreMismatch { path: String, detail: String },
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid survey input: {0}")]
    Invalid(String),
    #[error("malformed file {path}: {detail}")]
    Format { path: String, detail: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl SurveyError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        Self::Format { path: path.display().to_string(), detail: e.to_string() }
    }
}

/// Ordered, de-duplicated, lower-cased adjectives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjectiveLexicon {
    adjectives: Vec<String>,
}

impl AdjectiveLexicon {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        let mut seen = HashSet::new();
        let adjectives = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty() && seen.insert(w.clone()))
            .collect();
        Self { adjectives }
    }

    /// One adjective per line; blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self, SurveyError> {
        let text = std::fs::read_to_string(path).map_err(|e| SurveyError::io(path, e))?;
        Ok(Self::new(text.lines().filter(|l| !l.trim_start().starts_with('#'))))
    }

    pub fn adjectives(&self) -> &[String] {
        &self.adjectives
    }

    pub fn len(&self) -> usize {
        self.adjectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjectives.is_empty()
    }

    pub fn items(&self) -> Vec<SurveyItem> {
        self.adjectives.iter().map(|a| SurveyItem { id: a.clone(), text: a.clone() }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub id: String,
    pub text: String,
}

/// Reads questionnaire items from a CSV with `item_id,text` columns.
pub fn load_pir_items(path: &Path) -> Result<Vec<SurveyItem>, SurveyError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| SurveyError::csv(path, e))?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.deserialize::<(String, String)>() {
        let (id, text) = row.map_err(|e| SurveyError::csv(path, e))?;
        let id = id.trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(SurveyError::Format { path: path.display().to_string(), detail: format!("item {id} listed twice") });
        }
        items.push(SurveyItem { id, text: text.trim().to_string() });
    }
    Ok(items)
}

pub fn items_hash(items: &[SurveyItem]) -> String {
    let mut hasher = Sha256::new();
    for item in items {
        hasher.update(item.id.as_bytes());
        hasher.update(b"\t");
        hasher.update(item.text.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Which questionnaire, and therefore which prompts and scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    Lexical,
    Pir,
}

impl Instrument {
    pub fn scale(self) -> LikertScale {
        match self {
            Self::Lexical => LikertScale::lexical(),
            Self::Pir => LikertScale::pir(),
        }
    }

    /// System and user prompts for one item. The wording, typos included,
    /// is kept exactly as the original study used it.
    pub fn prompts(self, bio: &Biography, item_text: &str) -> (String, String) {
        let biography = bio.prompt_json();
        match self {
            Self::Lexical => (
                format!(
                    "You are a character in a simulation.\n\
                     Answer the next question in character.\n\
                     Here is your character bio (in JSON): {biography}\n\
                     Please ensure your answer starts with the rating from the scale provided."
                ),
                format!(
                    "Please indicate using the follow scale how accurately this adjective '{item_text}' describes you.\n\
                     'Extremely Inaccurate', 'Very Inaccurate', 'Moderately Inaccurate', 'Slightly Inaccurate', \
                     'Neither Accurate Nor Inaccurate', 'Slightly Accurate', 'Moderately Accurate', 'Very Accurate', \
                     'Extremely Accurate'"
                ),
            ),
            Self::Pir => (
                format!(
                    "You are a character in a simulation.\n\
                     Answer the next question in character.\n\
                     Here is your character bio (in JSON): {biography}"
                ),
                format!(
                    "How much do you agree or disagree with the the following statement: '{item_text}'. \n\
                     Please respond using the following scale: Strongly agree, Agree, Neutral (neither agree nor disagree), Disagree, Strongly disagree.\n\
                     Ensure your answer starts with the rating from the scale provided, followed by a short explanation."
                ),
            ),
        }
    }
}

pub fn request_key(survey_id: &str, agent_id: u32, item_id: &str) -> String {
    format!("{survey_id}:{agent_id}:{item_id}")
}

#[derive(Debug, Clone)]
pub struct SurveyOptions {
    pub survey_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// fsync every appended record.
    pub sync_writes: bool,
    /// Worker threads; defaults to the gateway's in-flight cap.
    pub workers: Option<usize>,
}

impl SurveyOptions {
    pub fn new(survey_id: impl Into<String>) -> Self {
        Self { survey_id: survey_id.into(), temperature: DEFAULT_TEMPERATURE, max_tokens: 200, sync_writes: true, workers: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub issued: usize,
    pub skipped: usize,
    pub ok: usize,
    pub content_filtered: usize,
    pub missing: usize,
    pub unparseable: usize,
}

pub fn run_lexical_survey(
    pop: &Population,
    lexicon: &AdjectiveLexicon,
    gateway: &Gateway,
    store_path: &Path,
    options: &SurveyOptions,
) -> Result<RunSummary, SurveyError> {
    if lexicon.is_empty() {
        return Err(SurveyError::Invalid("lexicon is empty".into()));
    }
    run_survey(pop, &lexicon.items(), Instrument::Lexical, gateway, store_path, options)
}

pub fn run_pir_survey(
    pop: &Population,
    items: &[SurveyItem],
    gateway: &Gateway,
    store_path: &Path,
    options: &SurveyOptions,
) -> Result<RunSummary, SurveyError> {
    run_survey(pop, items, Instrument::Pir, gateway, store_path, options)
}

/// Surveys every agent on every item, resuming from `store_path`.
///
/// Agents are surveyed concurrently; each agent's items go in list order and
/// every outcome is appended before that agent's next request. Backend
/// failures become masked records. A gateway error (bad configuration, an
/// interrupted process) stops the sweep and is returned after in-flight
/// records are written.
pub fn run_survey(
    pop: &Population,
    items: &[SurveyItem],
    instrument: Instrument,
    gateway: &Gateway,
    store_path: &Path,
    options: &SurveyOptions,
) -> Result<RunSummary, SurveyError> {
    if items.is_empty() {
        return Err(SurveyError::Invalid("no survey items".into()));
    }
    if options.survey_id.is_empty() || options.survey_id.contains(':') {
        return Err(SurveyError::Invalid("survey_id must be non-empty and contain no ':'".into()));
    }
    let scale = instrument.scale();
    let header = StoreHeader {
        format: STORE_FORMAT,
        survey_id: options.survey_id.clone(),
        scale: scale.labels().to_vec(),
        items_hash: items_hash(items),
    };
    let store = ResponseStore::open(store_path, header, options.sync_writes)?;

    let next_agent = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let failure: Mutex<Option<SurveyError>> = Mutex::new(None);
    let summary = Mutex::new(RunSummary::default());
    let workers = options.workers.unwrap_or_else(|| gateway.limits().max_in_flight()).clamp(1, pop.agents.len().max(1));

    let survey_agent = |bio: &Biography| -> Result<(), SurveyError> {
        let mut local = RunSummary::default();
        let result = (|| {
            for item in items {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let key = request_key(&options.survey_id, bio.agent_id, &item.id);
                if store.contains(&key) {
                    local.skipped += 1;
                    continue;
                }
                let (system_prompt, user_prompt) = instrument.prompts(bio, &item.text);
                let request = ChatRequest {
                    system_prompt,
                    user_prompt,
                    temperature: options.temperature,
                    max_tokens: options.max_tokens,
                    request_key: key.clone(),
                };
                let result = gateway.complete(&request)?;
                local.issued += 1;
                let (raw_text, parsed_value, status) = match result.outcome {
                    Outcome::Text(text) => match scale.parse(&text) {
                        Ok(v) => (text, Some(v), ResponseStatus::Ok),
                        Err(_) => (text, None, ResponseStatus::Unparseable),
                    },
                    Outcome::ContentFiltered => (String::new(), None, ResponseStatus::ContentFiltered),
                    Outcome::Refused => ("refused".into(), None, ResponseStatus::Missing),
                    Outcome::TransportError(detail) => (detail, None, ResponseStatus::Missing),
                };
                match status {
                    ResponseStatus::Ok => local.ok += 1,
                    ResponseStatus::ContentFiltered => local.content_filtered += 1,
                    ResponseStatus::Missing => local.missing += 1,
                    ResponseStatus::Unparseable => local.unparseable += 1,
                }
                store.append(&ResponseRecord {
                    request_key: key,
                    agent_id: bio.agent_id,
                    item_id: item.id.clone(),
                    raw_text,
                    parsed_value,
                    status,
                    attempts: result.attempt_count,
                })?;
            }
            Ok(())
        })();
        let mut total = summary.lock().expect("summary poisoned");
        total.issued += local.issued;
        total.skipped += local.skipped;
        total.ok += local.ok;
        total.content_filtered += local.content_filtered;
        total.missing += local.missing;
        total.unparseable += local.unparseable;
        result
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let index = next_agent.fetch_add(1, Ordering::SeqCst);
                let Some(bio) = pop.agents.get(index) else { break };
                if let Err(e) = survey_agent(bio) {
                    abort.store(true, Ordering::SeqCst);
                    failure.lock().expect("failure slot poisoned").get_or_insert(e);
                    break;
                }
            });
        }
    });

    match failure.into_inner().expect("failure slot poisoned") {
        Some(e) => Err(e),
        None => Ok(summary.into_inner().expect("summary poisoned")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_dedupes_and_lowercases() {
        let lex = AdjectiveLexicon::new(["Kind", "kind", " Sly ", "", "gentle-hearted"]);
        assert_eq!(lex.adjectives(), ["kind", "sly", "gentle-hearted"]);
    }

    #[test]
    fn prompts_inject_biography_and_item() {
        let bio = Biography {
            agent_id: 4,
            full_name: "Lee Scott".into(),
            age: 18,
            occupation: "Personal Trainer".into(),
            hobbies_interests: "fitness".into(),
            positive_fact_1: "Motivated".into(),
            positive_fact_2: "Disciplined".into(),
            negative_fact: "Competitive".into(),
        };
        let (system, user) = Instrument::Lexical.prompts(&bio, "sly");
        assert!(system.contains("\"Full Name\":\"Lee Scott\""));
        assert!(system.ends_with("starts with the rating from the scale provided."));
        assert!(user.contains("this adjective 'sly' describes you"));
        assert!(user.ends_with("'Extremely Accurate'"));
        let (system, user) = Instrument::Pir.prompts(&bio, "I like people.");
        assert!(!system.contains("Please ensure"));
        assert!(user.contains("statement: 'I like people.'"));
    }

    #[test]
    fn items_hash_depends_on_order_and_text() {
        let a = vec![SurveyItem { id: "1".into(), text: "x".into() }, SurveyItem { id: "2".into(), text: "y".into() }];
        let mut b = a.clone();
        b.reverse();
        assert_ne!(items_hash(&a), items_hash(&b));
        assert_eq!(items_hash(&a), items_hash(&a.clone()));
    }
}
