#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use hexlex::gateway::synthetic::{SyntheticTransport, DIMENSIONS};
use hexlex::gateway::{Gateway, ItemKey, Limits, RetryPolicy, Transport};
use hexlex::persona::{Biography, Population};
use hexlex::survey::AdjectiveLexicon;
use hexlex::LikertScale;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn biography(agent_id: u32) -> Biography {
    Biography {
        agent_id,
        full_name: format!("Agent Number{agent_id}"),
        age: 20 + agent_id % 40,
        occupation: "Librarian".into(),
        hobbies_interests: ["chess", "hiking", "baking", "cycling"][..1 + agent_id as usize % 4].join(", "),
        positive_fact_1: "Keeps promises.".into(),
        positive_fact_2: "Helps neighbours.".into(),
        negative_fact: "Often late.".into(),
    }
}

pub fn population(n: usize) -> Population {
    Population::new("plant", (0..n as u32).map(biography).collect()).unwrap()
}

/// Planted six-dimension structure: item `i` loads on dimension `i % 6`.
pub struct Plant {
    pub traits: HashMap<u32, [f64; DIMENSIONS]>,
    pub key: HashMap<String, ItemKey>,
    pub items: Vec<String>,
}

pub fn plant(n_agents: usize, n_items: usize, seed: u64) -> Plant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traits = (0..n_agents as u32)
        .map(|a| {
            let mut t = [0.0; DIMENSIONS];
            for v in &mut t {
                *v = rng.gen_range(-1.0..=1.0);
            }
            (a, t)
        })
        .collect();
    let items: Vec<String> = (0..n_items).map(|i| format!("adj{i:03}")).collect();
    let key = items
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let polarity = if (i / DIMENSIONS) % 2 == 0 { 1 } else { -1 };
            let strength = 0.7 + 0.3 * ((i * 7) % 10) as f64 / 9.0;
            (name.clone(), ItemKey { dimension: i % DIMENSIONS, polarity, strength })
        })
        .collect();
    Plant { traits, key, items }
}

impl Plant {
    pub fn lexicon(&self) -> AdjectiveLexicon {
        AdjectiveLexicon::new(&self.items)
    }

    pub fn transport(&self, noise_sd: f64, seed: u64, scale: LikertScale) -> SyntheticTransport {
        SyntheticTransport::new(self.traits.clone(), self.key.clone(), noise_sd, seed, scale).unwrap()
    }

    /// Items x 6 matrix of signed planted strengths.
    pub fn loadings(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.items.len(), DIMENSIONS);
        for (i, item) in self.items.iter().enumerate() {
            let k = self.key[item];
            m[(i, k.dimension)] = f64::from(k.polarity) * k.strength;
        }
        m
    }
}

pub fn gateway(transport: Arc<dyn Transport>, max_retries: u32) -> Gateway {
    Gateway::new(transport, RetryPolicy::immediate(max_retries), Limits { max_in_flight: 4, requests_per_minute: None }).unwrap()
}

/// Random k x k orthogonal matrix from the QR of a Gaussian-ish draw.
pub fn random_rotation(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}
