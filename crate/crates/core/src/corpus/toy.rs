//! Deterministic toy world and corpus generator.
//!
//! Graphs use opaque labels (`E12`, `P3`) while texts use generated surface
//! names, so a graph and its text share no tokens. An untrained encoder is
//! therefore at chance on retrieval and any alignment has to be learned.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, PairExample};
use crate::error::{Error, Result};
use crate::rdf::{RdfGraph, Triple};

/// Bumped whenever [`TOY_TEMPLATES`] or name generation changes.
pub const TOY_TEMPLATE_VERSION: u32 = 1;

/// Sentence templates; property `k` uses template `k % len`.
pub const TOY_TEMPLATES: [&str; 3] = [
    "{s}'s {p} is {o}.",
    "The {p} of {s} is {o}.",
    "{s} has {o} as its {p}.",
];

const ONSETS: [&str; 14] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyEntity {
    /// Label used on the graph side.
    pub label: String,
    /// Surface form used in texts.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyProperty {
    pub label: String,
    pub word: String,
    pub template: usize,
}

/// Lexicon shared by the toy corpus and toy judgment generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyWorld {
    pub entities: Vec<ToyEntity>,
    pub properties: Vec<ToyProperty>,
    seed: u64,
}

fn make_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
    }
    w
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl ToyWorld {
    pub fn generate(n_entities: usize, n_properties: usize, seed: u64) -> Result<Self> {
        if n_entities < 2 || n_properties == 0 {
            return Err(Error::invalid(
                "toy world needs at least 2 entities and 1 property",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used: HashSet<String> = ["s", "is", "the", "of", "has", "as", "its"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let capacity = (ONSETS.len() * VOWELS.len()).pow(3);
        if n_entities + n_properties > capacity / 2 {
            return Err(Error::invalid("toy world too large for the name generator"));
        }
        let mut fresh = |rng: &mut ChaCha8Rng, syllables: usize| loop {
            let w = make_word(rng, syllables);
            if used.insert(w.clone()) {
                return w;
            }
        };
        let entities = (0..n_entities)
            .map(|i| ToyEntity {
                label: format!("E{i}"),
                name: capitalize(&fresh(&mut rng, 3)),
            })
            .collect();
        let properties = (0..n_properties)
            .map(|k| ToyProperty {
                label: format!("P{k}"),
                word: fresh(&mut rng, 2),
                template: k % TOY_TEMPLATES.len(),
            })
            .collect();
        Ok(ToyWorld {
            entities,
            properties,
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Graph-side triple for entity/property indices.
    pub fn triple(&self, s: usize, p: usize, o: usize) -> Triple {
        Triple::new(
            &self.entities[s].label,
            &self.properties[p].label,
            &self.entities[o].label,
        )
        .expect("toy labels are valid")
    }

    /// Text-side sentence for entity/property indices.
    pub fn sentence(&self, s: usize, p: usize, o: usize) -> String {
        let prop = &self.properties[p];
        let text = TOY_TEMPLATES[prop.template]
            .replace("{s}", &self.entities[s].name)
            .replace("{p}", &prop.word)
            .replace("{o}", &self.entities[o].name);
        capitalize(&text)
    }

    /// Number of distinct generatable pairs: one orientation per unordered
    /// entity pair and property, subject never equal to object.
    pub fn capacity(&self) -> usize {
        let n = self.entities.len();
        self.properties.len() * n * (n - 1) / 2
    }

    fn decode(&self, index: usize) -> (usize, usize, usize) {
        let n = self.entities.len();
        let per_prop = n * (n - 1) / 2;
        let p = index / per_prop;
        let mut r = index % per_prop;
        let mut a = 0;
        while r >= n - 1 - a {
            r -= n - 1 - a;
            a += 1;
        }
        (p, a, a + 1 + r)
    }

    /// `n_pairs` distinct single-triple pairs. Never emits both `(a, p, b)`
    /// and `(b, p, a)`, so every graph maps to exactly one text.
    pub fn corpus(&self, n_pairs: usize, seed: u64) -> Result<Dataset> {
        if n_pairs == 0 {
            return Err(Error::invalid("n_pairs must be positive"));
        }
        if n_pairs > self.capacity() {
            return Err(Error::invalid(format!(
                "requested {n_pairs} pairs but only {} distinct combinations exist",
                self.capacity()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let picks = sample(&mut rng, self.capacity(), n_pairs).into_vec();
        let mut pairs = Vec::with_capacity(n_pairs);
        for (i, idx) in picks.into_iter().enumerate() {
            let (p, a, b) = self.decode(idx);
            let (s, o) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            pairs.push(PairExample::new(
                format!("toy-{i:05}"),
                RdfGraph::single(self.triple(s, p, o)),
                self.sentence(s, p, o),
            )?);
        }
        Dataset::new("toy", pairs)
    }
}

/// Generates `n_pairs` templated pairs over a fresh toy world.
pub fn generate_toy_corpus(
    n_entities: usize,
    n_properties: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_entities == 0 || n_properties == 0 || n_pairs == 0 {
        return Err(Error::invalid("toy corpus arguments must be positive"));
    }
    ToyWorld::generate(n_entities, n_properties, seed)?.corpus(n_pairs, seed)
}
