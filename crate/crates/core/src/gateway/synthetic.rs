//! Deterministic synthetic respondent with planted trait vectors.
//!
//! Each agent has six trait scores in `[-1, 1]` (H, E, X, A, C, O). An item
//! key ties an adjective (or questionnaire item) to one dimension with a
//! polarity and a strength, and the rating is a clamped linear map of the
//! keyed trait plus optional seeded Gaussian noise:
//!
//! `rating = clamp(round(mid + half * polarity * strength * trait[dim] + eps), 1, points)`
//!
//! where `mid` and `half` are the scale midpoint and half-range (5 and 4 on
//! the 9-point scale). Noise is drawn from a generator seeded by the agent's
//! seed and the item text, so a given (agent, item) always gets the same
//! answer regardless of request order or concurrency.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Attempt, ChatRequest, GatewayError, Transport};
use crate::likert::LikertScale;

pub const DIMENSIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemKey {
    pub dimension: usize,
    pub polarity: i8,
    pub strength: f64,
}

impl ItemKey {
    pub fn validate(&self, item: &str) -> Result<(), GatewayError> {
        if self.dimension >= DIMENSIONS {
            return Err(GatewayError::Config(format!("{item}: dimension {} not in 0..6", self.dimension)));
        }
        if self.polarity != 1 && self.polarity != -1 {
            return Err(GatewayError::Config(format!("{item}: polarity must be +1 or -1")));
        }
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return Err(GatewayError::Config(format!("{item}: strength must be in (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticRespondentConfig {
    pub trait_vector: [f64; DIMENSIONS],
    pub adjective_key: Arc<HashMap<String, ItemKey>>,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Rating on the 9-point adjective scale.
pub fn synth_rating(adjective: &str, config: &SyntheticRespondentConfig) -> Result<u8, GatewayError> {
    rating_on_scale(adjective, config, 9)
}

/// Rating on a scale with `points` labels.
pub fn rating_on_scale(item: &str, config: &SyntheticRespondentConfig, points: u8) -> Result<u8, GatewayError> {
    let key = config
        .adjective_key
        .get(item)
        .ok_or_else(|| GatewayError::UnknownAdjective(item.to_string()))?;
    let mid = (f64::from(points) + 1.0) / 2.0;
    let half = (f64::from(points) - 1.0) / 2.0;
    let signal = half * f64::from(key.polarity) * key.strength * config.trait_vector[key.dimension];
    let noise = if config.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ stable_hash(item.as_bytes()));
        Normal::new(0.0, config.noise_sd).expect("noise_sd is finite and positive").sample(&mut rng)
    } else {
        0.0
    };
    Ok((mid + signal + noise).round().clamp(1.0, f64::from(points)) as u8)
}

/// First eight bytes of SHA-256, as a platform-independent seed mixer.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn agent_seed(seed: u64, agent_id: u32) -> u64 {
    seed ^ stable_hash(format!("agent:{agent_id}").as_bytes())
}

/// Locations of the synthetic backend's JSON inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFiles {
    /// `{"<agent_id>": [h, e, x, a, c, o], ...}`
    pub traits_path: PathBuf,
    /// `{"<item>": {"dimension": 0, "polarity": 1, "strength": 0.8}, ...}`
    pub key_path: PathBuf,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    /// 9 for the adjective survey, 5 for the questionnaire.
    #[serde(default = "default_points")]
    pub scale_points: u8,
}

fn default_points() -> u8 {
    9
}

pub struct SyntheticTransport {
    traits: HashMap<u32, [f64; DIMENSIONS]>,
    key: Arc<HashMap<String, ItemKey>>,
    noise_sd: f64,
    seed: u64,
    scale: LikertScale,
}

impl SyntheticTransport {
    pub fn new(
        traits: HashMap<u32, [f64; DIMENSIONS]>,
        key: HashMap<String, ItemKey>,
        noise_sd: f64,
        seed: u64,
        scale: LikertScale,
    ) -> Result<Self, GatewayError> {
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(GatewayError::Config("noise_sd must be finite and >= 0".into()));
        }
        for (agent, t) in &traits {
            if t.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(GatewayError::Config(format!("agent {agent}: traits must lie in [-1, 1]")));
            }
        }
        for (item, k) in &key {
            k.validate(item)?;
        }
        Ok(Self { traits, key: Arc::new(key), noise_sd, seed, scale })
    }

    pub fn from_files(files: &SyntheticFiles) -> Result<Self, GatewayError> {
        let traits: HashMap<u32, [f64; DIMENSIONS]> = read_json(&files.traits_path)?;
        let key: HashMap<String, ItemKey> = read_json(&files.key_path)?;
        let scale = match files.scale_points {
            9 => LikertScale::lexical(),
            5 => LikertScale::pir(),
            n => return Err(GatewayError::Config(format!("unsupported synthetic scale with {n} points"))),
        };
        Self::new(traits, key, files.noise_sd, files.seed, scale)
    }

    pub fn respondent(&self, agent_id: u32) -> Option<SyntheticRespondentConfig> {
        self.traits.get(&agent_id).map(|t| SyntheticRespondentConfig {
            trait_vector: *t,
            adjective_key: Arc::clone(&self.key),
            noise_sd: self.noise_sd,
            seed: agent_seed(self.seed, agent_id),
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
}

/// Splits `survey:agent:item` keys; the item part may itself contain colons.
pub fn parse_request_key(key: &str) -> Option<(&str, u32, &str)> {
    let mut parts = key.splitn(3, ':');
    let survey = parts.next()?;
    let agent = parts.next()?.parse().ok()?;
    let item = parts.next()?;
    Some((survey, agent, item))
}

impl Transport for SyntheticTransport {
    fn send(&self, request: &ChatRequest) -> Result<Attempt, GatewayError> {
        let (_, agent, item) = parse_request_key(&request.request_key).ok_or_else(|| {
            GatewayError::Config(format!("synthetic backend cannot route key {:?}", request.request_key))
        })?;
        let respondent = self
            .respondent(agent)
            .ok_or_else(|| GatewayError::Config(format!("no synthetic traits for agent {agent}")))?;
        let rating = rating_on_scale(item, &respondent, self.scale.points())?;
        let label = self.scale.render(rating).expect("rating is clamped to the scale");
        Ok(Attempt::Text(format!("{label} - this is how I see myself.")))
    }
}
