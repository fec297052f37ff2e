//! Agent biographies, census-curated populations and population statistics.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, Outcome, DEFAULT_TEMPERATURE};
use crate::stats;

pub const MIN_AGE: u32 = 16;
pub const MAX_AGE: u32 = 60;

const GENERATOR_SYSTEM_PROMPT: &str = "You are a character generator AI.\n\
Your responses should be json objects.\n\
Do not use names of famous people.\n\
Ages should be between 16 and 60.\n\
Occupations can also include unpaid activities, e.g. student, stay at home mum, job seeker etc.";

const SUBSTANTIVE_FLAW_LINE: &str =
    "The negative fact must describe a substantive character flaw, not a minor weakness or a work habit.";

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("generation failed for agent slot {slot} after {attempts} attempts: {reason}")]
    GenerationFailed { slot: usize, attempts: u32, reason: String },
    #[error("invalid biography: {0}")]
    InvalidBiography(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed file {path}: {detail}")]
    Format { path: String, detail: String },
}

fn io_err(path: &Path, source: std::io::Error) -> PersonaError {
    PersonaError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, detail: impl ToString) -> PersonaError {
    PersonaError::Format { path: path.display().to_string(), detail: detail.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Biography {
    pub agent_id: u32,
    pub full_name: String,
    pub age: u32,
    pub occupation: String,
    pub hobbies_interests: String,
    pub positive_fact_1: String,
    pub positive_fact_2: String,
    pub negative_fact: String,
}

#[derive(Serialize, Deserialize)]
struct FactsWire {
    #[serde(rename = "Positive Fact 1")]
    positive_fact_1: String,
    #[serde(rename = "Positive Fact 2")]
    positive_fact_2: String,
    #[serde(rename = "Negative Fact")]
    negative_fact: String,
}

#[derive(Serialize, Deserialize)]
struct BiographyWire {
    #[serde(rename = "Agent ID", default, skip_serializing_if = "Option::is_none")]
    agent_id: Option<u32>,
    #[serde(rename = "Full Name")]
    full_name: String,
    #[serde(rename = "Age")]
    age: u32,
    #[serde(rename = "Occupation")]
    occupation: String,
    #[serde(rename = "Hobbies/interests", alias = "Hobbies/Interests")]
    hobbies_interests: String,
    #[serde(rename = "Personality Facts")]
    personality_facts: FactsWire,
}

impl Biography {
    fn to_wire(&self, with_id: bool) -> BiographyWire {
        BiographyWire {
            agent_id: with_id.then_some(self.agent_id),
            full_name: self.full_name.clone(),
            age: self.age,
            occupation: self.occupation.clone(),
            hobbies_interests: self.hobbies_interests.clone(),
            personality_facts: FactsWire {
                positive_fact_1: self.positive_fact_1.clone(),
                positive_fact_2: self.positive_fact_2.clone(),
                negative_fact: self.negative_fact.clone(),
            },
        }
    }

    fn from_wire(wire: BiographyWire, agent_id: u32) -> Self {
        Self {
            agent_id,
            full_name: wire.full_name,
            age: wire.age,
            occupation: wire.occupation,
            hobbies_interests: wire.hobbies_interests,
            positive_fact_1: wire.personality_facts.positive_fact_1,
            positive_fact_2: wire.personality_facts.positive_fact_2,
            negative_fact: wire.personality_facts.negative_fact,
        }
    }

    /// The biography as injected into survey prompts (no agent id).
    pub fn prompt_json(&self) -> String {
        serde_json::to_string(&self.to_wire(false)).expect("biography serializes")
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if !(MIN_AGE..=MAX_AGE).contains(&self.age) {
            return Err(PersonaError::InvalidBiography(format!(
                "age {} outside {MIN_AGE}..={MAX_AGE}",
                self.age
            )));
        }
        let fields = [
            ("full name", &self.full_name),
            ("occupation", &self.occupation),
            ("hobbies/interests", &self.hobbies_interests),
            ("positive fact 1", &self.positive_fact_1),
            ("positive fact 2", &self.positive_fact_2),
            ("negative fact", &self.negative_fact),
        ];
        for (name, value) in fields {
            if value.trim().is_empty() {
                return Err(PersonaError::InvalidBiography(format!("{name} is empty")));
            }
        }
        Ok(())
    }

    /// Characters in hobbies/interests plus the three personality facts.
    pub fn length(&self) -> usize {
        [&self.hobbies_interests, &self.positive_fact_1, &self.positive_fact_2, &self.negative_fact]
            .iter()
            .map(|s| s.chars().count())
            .sum()
    }

    fn all_text(&self) -> String {
        [
            &self.full_name,
            &self.occupation,
            &self.hobbies_interests,
            &self.positive_fact_1,
            &self.positive_fact_2,
            &self.negative_fact,
        ]
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>()
        .join(" ")
    }
}

impl Serialize for Biography {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_wire(true).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Biography {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = BiographyWire::deserialize(deserializer)?;
        let id = wire.agent_id.ok_or_else(|| serde::de::Error::missing_field("Agent ID"))?;
        Ok(Self::from_wire(wire, id))
    }
}

/// Parses a generator reply into a biography.
///
/// Accepts code fences and prose around the JSON object, case and
/// punctuation variations of the field names, a numeric or string age, and
/// personality facts given as an object, a three-element list or top-level
/// keys. The given occupation fills in when the reply omits it.
pub fn parse_generated(reply: &str, agent_id: u32, occupation: &str) -> Result<Biography, PersonaError> {
    let start = reply.find('{');
    let end = reply.rfind('}');
    let object = match (start, end) {
        (Some(s), Some(e)) if e > s => &reply[s..=e],
        _ => return Err(PersonaError::InvalidBiography("no JSON object in reply".into())),
    };
    let value: Value =
        serde_json::from_str(object).map_err(|e| PersonaError::InvalidBiography(format!("bad JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(PersonaError::InvalidBiography("reply is not a JSON object".into()));
    };
    let fields: HashMap<String, &Value> = map.iter().map(|(k, v)| (field_key(k), v)).collect();
    let text = |key: &str| -> Option<String> {
        match fields.get(key)? {
            Value::String(s) => Some(s.trim().to_string()),
            Value::Array(items) => {
                let parts: Vec<&str> = items.iter().filter_map(Value::as_str).collect();
                Some(parts.join(", "))
            }
            _ => None,
        }
    };
    let age = match fields.get("age") {
        Some(Value::Number(n)) => n.as_u64(),
        Some(Value::String(s)) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| PersonaError::InvalidBiography("missing or non-integer age".into()))?;

    let facts: Vec<String> = match fields.get("personalityfacts") {
        Some(Value::Object(facts)) => {
            let facts: HashMap<String, &Value> = facts.iter().map(|(k, v)| (field_key(k), v)).collect();
            ["positivefact1", "positivefact2", "negativefact"]
                .iter()
                .map(|k| facts.get(*k).and_then(|v| v.as_str()).unwrap_or_default().trim().to_string())
                .collect()
        }
        Some(Value::Array(items)) => items.iter().map(|v| v.as_str().unwrap_or_default().trim().to_string()).collect(),
        _ => ["positivefact1", "positivefact2", "negativefact"]
            .iter()
            .map(|k| text(k).unwrap_or_default())
            .collect(),
    };
    if facts.len() != 3 {
        return Err(PersonaError::InvalidBiography(format!("expected 3 personality facts, got {}", facts.len())));
    }

    let bio = Biography {
        agent_id,
        full_name: text("fullname").or_else(|| text("name")).unwrap_or_default(),
        age: u32::try_from(age).unwrap_or(u32::MAX),
        occupation: text("occupation").filter(|s| !s.is_empty()).unwrap_or_else(|| occupation.to_string()),
        hobbies_interests: text("hobbiesinterests").or_else(|| text("hobbies")).unwrap_or_default(),
        positive_fact_1: facts[0].clone(),
        positive_fact_2: facts[1].clone(),
        negative_fact: facts[2].clone(),
    };
    bio.validate()?;
    Ok(bio)
}

fn field_key(k: &str) -> String {
    k.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusTargets {
    pub groups: Vec<(String, f64)>,
    pub total_agents: usize,
}

impl CensusTargets {
    pub fn new(groups: Vec<(String, f64)>, total_agents: usize) -> Result<Self, PersonaError> {
        if total_agents == 0 {
            return Err(PersonaError::Config("total_agents must be positive".into()));
        }
        if groups.is_empty() {
            return Err(PersonaError::Config("census targets list no groups".into()));
        }
        let mut seen = BTreeSet::new();
        for (group, p) in &groups {
            if !seen.insert(group.as_str()) {
                return Err(PersonaError::Config(format!("group {group:?} listed twice")));
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(PersonaError::Config(format!("group {group:?} has invalid proportion {p}")));
            }
        }
        let sum: f64 = groups.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PersonaError::Config(format!("proportions sum to {sum}, not 1")));
        }
        Ok(Self { groups, total_agents })
    }

    /// Reads a `group,proportion` CSV with a header row.
    pub fn from_csv(path: &Path, total_agents: usize) -> Result<Self, PersonaError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(path, e))?;
        let mut groups = Vec::new();
        for row in reader.deserialize::<(String, f64)>() {
            let (group, p) = row.map_err(|e| format_err(path, e))?;
            groups.push((group.trim().to_string(), p));
        }
        Self::new(groups, total_agents)
    }

    /// Per-group counts by the largest-remainder method.
    pub fn allocate(&self) -> Vec<(String, usize)> {
        let total = self.total_agents as f64;
        let mut counts: Vec<usize> = self.groups.iter().map(|(_, p)| (p * total).floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        let remainder = |i: usize| self.groups[i].1 * total - counts[i] as f64;
        order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
        for &i in order.iter().take(self.total_agents.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        self.groups.iter().map(|(g, _)| g.clone()).zip(counts).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub name: String,
    pub agents: Vec<Biography>,
}

impl Population {
    pub fn new(name: impl Into<String>, agents: Vec<Biography>) -> Result<Self, PersonaError> {
        let mut ids = BTreeSet::new();
        for bio in &agents {
            if !ids.insert(bio.agent_id) {
                return Err(PersonaError::Config(format!("duplicate agent id {}", bio.agent_id)));
            }
            bio.validate()?;
        }
        Ok(Self { name: name.into(), agents })
    }

    /// Loads a JSON array of biographies; the name is the file stem.
    pub fn load(path: &Path) -> Result<Self, PersonaError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let agents: Vec<Biography> = serde_json::from_str(&text).map_err(|e| format_err(path, e))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::new(name, agents)
    }

    pub fn save(&self, path: &Path) -> Result<(), PersonaError> {
        let mut text = serde_json::to_string_pretty(&self.agents).expect("population serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    pub fn get(&self, agent_id: u32) -> Option<&Biography> {
        self.agents.iter().find(|b| b.agent_id == agent_id)
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub population_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Ask for a substantive character flaw as the negative fact.
    pub substantive_flaw: bool,
    /// Requests per slot before giving up (first try plus re-requests).
    pub max_attempts: u32,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            population_name: "population".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 400,
            substantive_flaw: false,
            max_attempts: 4,
        }
    }
}

pub fn generator_prompts(occupation: &str, substantive_flaw: bool) -> (String, String) {
    let mut user = format!(
        "Complete this character bio, where an occupation has already been given:\n\
         Full Name: [Full Name]\n\
         Age: [Age]\n\
         Occupation: {occupation}\n\
         Hobbies/Interests: [Hobbies/Interests]\n\
         Personality Facts:\n\
         - [Positive Fact 1]\n\
         - [Positive Fact 2]\n\
         - [Negative Fact]"
    );
    if substantive_flaw {
        user.push('\n');
        user.push_str(SUBSTANTIVE_FLAW_LINE);
    }
    (GENERATOR_SYSTEM_PROMPT.to_string(), user)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationLog {
    /// Requests issued per agent slot.
    pub attempts: Vec<u32>,
}

/// Samples one occupation per slot: groups in target order, uniform within a group.
pub fn assign_occupations(
    targets: &CensusTargets,
    pool: &HashMap<String, Vec<String>>,
    seed: u64,
) -> Result<Vec<String>, PersonaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = Vec::with_capacity(targets.total_agents);
    for (group, count) in targets.allocate() {
        let choices = pool
            .get(&group)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| PersonaError::Config(format!("occupation pool does not cover group {group:?}")))?;
        for _ in 0..count {
            slots.push(choices[rng.gen_range(0..choices.len())].clone());
        }
    }
    Ok(slots)
}

/// Generates one biography per allocated slot through the gateway.
///
/// Slots are processed concurrently up to the gateway's in-flight cap, but
/// agent ids follow slot order, so the result does not depend on timing.
pub fn generate_population(
    targets: &CensusTargets,
    pool: &HashMap<String, Vec<String>>,
    gateway: &Gateway,
    seed: u64,
    options: &GenerationOptions,
) -> Result<(Population, GenerationLog), PersonaError> {
    let occupations = assign_occupations(targets, pool, seed)?;
    let results: Vec<Mutex<Option<Result<(Biography, u32), PersonaError>>>> =
        occupations.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = gateway.limits().max_in_flight().min(occupations.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::SeqCst);
                if slot >= occupations.len() {
                    break;
                }
                let result = generate_one(slot, &occupations[slot], gateway, options);
                let failed = result.is_err();
                *results[slot].lock().expect("slot result poisoned") = Some(result);
                if failed {
                    next.store(occupations.len(), Ordering::SeqCst);
                }
            });
        }
    });

    let mut agents = Vec::with_capacity(occupations.len());
    let mut attempts = Vec::with_capacity(occupations.len());
    for cell in results {
        match cell.into_inner().expect("slot result poisoned") {
            Some(Ok((bio, n))) => {
                agents.push(bio);
                attempts.push(n);
            }
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok((Population::new(options.population_name.clone(), agents)?, GenerationLog { attempts }))
}

fn generate_one(
    slot: usize,
    occupation: &str,
    gateway: &Gateway,
    options: &GenerationOptions,
) -> Result<(Biography, u32), PersonaError> {
    let (system_prompt, user_prompt) = generator_prompts(occupation, options.substantive_flaw);
    let request = ChatRequest {
        system_prompt,
        user_prompt,
        temperature: options.temperature,
        max_tokens: options.max_tokens,
        request_key: format!("gen:{slot}"),
    };
    let mut last = String::new();
    for attempt in 1..=options.max_attempts.max(1) {
        let result = gateway.complete(&request)?;
        match result.outcome {
            Outcome::Text(reply) => match parse_generated(&reply, slot as u32, occupation) {
                Ok(bio) => return Ok((bio, attempt)),
                Err(e) => last = e.to_string(),
            },
            other => last = format!("{other:?}"),
        }
        log::warn!("slot {slot}: attempt {attempt} rejected: {last}");
    }
    Err(PersonaError::GenerationFailed { slot, attempts: options.max_attempts.max(1), reason: last })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    Undetermined,
}

const MALE_MARKERS: &[&str] = &[
    "he", "him", "his", "himself", "mr", "sir", "man", "gentleman", "husband", "father", "dad", "son", "brother",
    "boyfriend", "grandfather", "grandpa", "uncle", "nephew", "male", "fiance",
];
const FEMALE_MARKERS: &[&str] = &[
    "she", "her", "hers", "herself", "mrs", "ms", "miss", "madam", "woman", "lady", "wife", "mother", "mum", "mom",
    "daughter", "sister", "girlfriend", "grandmother", "grandma", "aunt", "niece", "female", "fiancee",
];

/// Infers gender from pronouns and gendered words, falling back to an
/// optional first-name table on a tie.
pub fn infer_gender(bio: &Biography, first_names: Option<&HashMap<String, Gender>>) -> Gender {
    let text = bio.all_text().to_lowercase();
    let (mut male, mut female) = (0usize, 0usize);
    for word in text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()) {
        if MALE_MARKERS.contains(&word) {
            male += 1;
        } else if FEMALE_MARKERS.contains(&word) {
            female += 1;
        }
    }
    match male.cmp(&female) {
        std::cmp::Ordering::Greater => Gender::Male,
        std::cmp::Ordering::Less => Gender::Female,
        std::cmp::Ordering::Equal => first_names
            .and_then(|names| {
                let first = bio.full_name.split_whitespace().next()?.to_lowercase();
                names.get(&first).copied()
            })
            .unwrap_or(Gender::Undetermined),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderCounts {
    pub male: usize,
    pub female: usize,
    pub undetermined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub agents: usize,
    pub mean_age: f64,
    /// Unbiased SD; 0 when undefined (single agent).
    pub sd_age: f64,
    pub sd_defined: bool,
    pub age_range: (u32, u32),
    pub unique_occupations: usize,
    pub inferred_gender_counts: GenderCounts,
    /// (agent id, biography length) in population order.
    pub biography_lengths: Vec<(u32, usize)>,
}

pub fn population_stats(
    pop: &Population,
    first_names: Option<&HashMap<String, Gender>>,
) -> Result<PopulationStats, PersonaError> {
    if pop.agents.is_empty() {
        return Err(PersonaError::Config("population is empty".into()));
    }
    let ages: Vec<f64> = pop.agents.iter().map(|b| f64::from(b.age)).collect();
    let sd = stats::std_dev(&ages);
    let occupations: BTreeSet<String> =
        pop.agents.iter().map(|b| b.occupation.trim().to_lowercase()).collect();
    let mut genders = GenderCounts::default();
    for bio in &pop.agents {
        match infer_gender(bio, first_names) {
            Gender::Male => genders.male += 1,
            Gender::Female => genders.female += 1,
            Gender::Undetermined => genders.undetermined += 1,
        }
    }
    Ok(PopulationStats {
        agents: pop.agents.len(),
        mean_age: stats::mean(&ages),
        sd_age: sd.unwrap_or(0.0),
        sd_defined: sd.is_some(),
        age_range: (
            pop.agents.iter().map(|b| b.age).min().expect("non-empty"),
            pop.agents.iter().map(|b| b.age).max().expect("non-empty"),
        ),
        unique_occupations: occupations.len(),
        inferred_gender_counts: genders,
        biography_lengths: pop.agents.iter().map(|b| (b.agent_id, b.length())).collect(),
    })
}
