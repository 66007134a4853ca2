//! Human judgments and their CSV form.
//!
//! One CSV row holds one criterion of one item:
//! `id,criterion,rating,scale_min,scale_max,text,triples_json`.
//! Rows sharing an id are merged into a single [`HumanJudgment`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ToyWorld;
use crate::error::{Error, Result};
use crate::rdf::{RdfGraph, Triple};

pub const CRITERIA_2017: [&str; 3] = ["semantic_adequacy", "grammaticality", "fluency"];
pub const CRITERIA_2020: [&str; 5] = [
    "data_coverage",
    "relevance",
    "correctness",
    "text_structure",
    "fluency",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::invalid(format!(
                "rating scale must satisfy min < max, got [{min}, {max}]"
            )));
        }
        Ok(RatingScale { min, max })
    }

    /// Maps a rating on this scale to `[0, 1]`.
    pub fn normalize(&self, rating: f64) -> f64 {
        (rating - self.min) / (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanJudgment {
    pub id: String,
    pub graph: RdfGraph,
    pub candidate_text: String,
    pub ratings: BTreeMap<String, f64>,
    pub scale: RatingScale,
}

impl HumanJudgment {
    pub fn new(
        id: impl Into<String>,
        graph: RdfGraph,
        candidate_text: impl Into<String>,
        ratings: BTreeMap<String, f64>,
        scale: RatingScale,
    ) -> Result<Self> {
        let id = id.into();
        let candidate_text = candidate_text.into();
        if id.trim().is_empty() {
            return Err(Error::invalid("judgment id is empty"));
        }
        if candidate_text.trim().is_empty() {
            return Err(Error::invalid(format!("judgment `{id}` has an empty text")));
        }
        if ratings.is_empty() {
            return Err(Error::invalid(format!("judgment `{id}` has no ratings")));
        }
        let in_2017 = ratings.keys().all(|c| CRITERIA_2017.contains(&c.as_str()));
        let in_2020 = ratings.keys().all(|c| CRITERIA_2020.contains(&c.as_str()));
        if !in_2017 && !in_2020 {
            let names: Vec<&str> = ratings.keys().map(String::as_str).collect();
            return Err(Error::invalid(format!(
                "judgment `{id}`: criteria {names:?} do not all belong to the 2017 set {CRITERIA_2017:?} or the 2020 set {CRITERIA_2020:?}"
            )));
        }
        for (c, &r) in &ratings {
            if !(r.is_finite() && r >= scale.min && r <= scale.max) {
                return Err(Error::invalid(format!(
                    "judgment `{id}`: {c} rating {r} outside [{}, {}]",
                    scale.min, scale.max
                )));
            }
        }
        Ok(HumanJudgment {
            id,
            graph,
            candidate_text,
            ratings,
            scale,
        })
    }

    /// Rating for `criterion` mapped to `[0, 1]` by the declared scale.
    pub fn normalized(&self, criterion: &str) -> Option<f64> {
        self.ratings
            .get(criterion)
            .map(|&r| self.scale.normalize(r))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: String,
    criterion: String,
    rating: f64,
    scale_min: f64,
    scale_max: f64,
    text: String,
    triples_json: String,
}

pub fn judgments_to_csv(judgments: &[HumanJudgment]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for j in judgments {
        let triples_json = serde_json::to_string(&j.graph).expect("graph serializes");
        for (c, &r) in &j.ratings {
            w.serialize(Row {
                id: j.id.clone(),
                criterion: c.clone(),
                rating: r,
                scale_min: j.scale.min,
                scale_max: j.scale.max,
                text: j.candidate_text.clone(),
                triples_json: triples_json.clone(),
            })
            .map_err(|e| Error::invalid(format!("csv write: {e}")))?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_judgments(csv_text: &str, origin: &str) -> Result<Vec<HumanJudgment>> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let schema = |line: u64, message: String| Error::Schema {
        path: origin.to_string(),
        line: line as usize,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| schema(1, e.to_string()))?
        .clone();
    let expected = [
        "id",
        "criterion",
        "rating",
        "scale_min",
        "scale_max",
        "text",
        "triples_json",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(schema(
            1,
            format!("header must be `{}`", expected.join(",")),
        ));
    }

    struct Partial {
        graph: RdfGraph,
        text: String,
        scale: RatingScale,
        ratings: BTreeMap<String, f64>,
        line: u64,
    }
    let mut order: Vec<String> = Vec::new();
    let mut items: HashMap<String, Partial> = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec
            .deserialize(Some(&headers))
            .map_err(|e| schema(line, e.to_string()))?;
        let graph: RdfGraph = serde_json::from_str(&row.triples_json)
            .map_err(|e| schema(line, format!("field `triples_json`: {e}")))?;
        let scale = RatingScale::new(row.scale_min, row.scale_max)
            .map_err(|e| schema(line, e.to_string()))?;
        match items.get_mut(&row.id) {
            Some(p) => {
                if p.graph != graph || p.text != row.text || p.scale != scale {
                    return Err(schema(
                        line,
                        format!(
                            "id `{}` repeats with a different text, graph or scale (first seen on line {})",
                            row.id, p.line
                        ),
                    ));
                }
                if p.ratings
                    .insert(row.criterion.clone(), row.rating)
                    .is_some()
                {
                    return Err(schema(
                        line,
                        format!(
                            "duplicate criterion `{}` for id `{}`",
                            row.criterion, row.id
                        ),
                    ));
                }
            }
            None => {
                order.push(row.id.clone());
                items.insert(
                    row.id.clone(),
                    Partial {
                        graph,
                        text: row.text,
                        scale,
                        ratings: BTreeMap::from([(row.criterion, row.rating)]),
                        line,
                    },
                );
            }
        }
    }
    order
        .into_iter()
        .map(|id| {
            let p = items.remove(&id).expect("id recorded");
            let line = p.line;
            HumanJudgment::new(id, p.graph, p.text, p.ratings, p.scale)
                .map_err(|e| schema(line, e.to_string()))
        })
        .collect()
}

pub fn load_judgments(path: &Path) -> Result<Vec<HumanJudgment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(&text, &path.display().to_string())
}

pub fn save_judgments(judgments: &[HumanJudgment], path: &Path) -> Result<()> {
    std::fs::write(path, judgments_to_csv(judgments)?).map_err(|e| Error::io(path, e))
}

/// Synthetic rated candidates over a toy world.
///
/// Each item has a graph of 1 to 3 triples. Its candidate text realizes
/// each triple correctly, drops it, or states it with a wrong object.
/// `semantic_adequacy` on the 1..3 scale is `1 + 2c/n` plus small uniform
/// noise, where `c` of the `n` triples are stated correctly. Grammaticality
/// and fluency are high with noise since every sentence is templated.
pub fn generate_toy_judgments(
    world: &ToyWorld,
    n_items: usize,
    seed: u64,
) -> Result<Vec<HumanJudgment>> {
    let n_e = world.entities.len();
    let n_p = world.properties.len();
    if n_e < 3 {
        return Err(Error::invalid("toy judgments need at least 3 entities"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let scale = RatingScale::new(1.0, 3.0)?;
    let mut out = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let size = rng.gen_range(1..=3usize);
        let mut triples: Vec<Triple> = Vec::with_capacity(size);
        let mut sentences = Vec::new();
        let mut correct = 0usize;
        while triples.len() < size {
            let s = rng.gen_range(0..n_e);
            let o = rng.gen_range(0..n_e);
            let p = rng.gen_range(0..n_p);
            if s == o || triples.contains(&world.triple(s, p, o)) {
                continue;
            }
            triples.push(world.triple(s, p, o));
            match rng.gen_range(0..3u8) {
                0 => {
                    sentences.push(world.sentence(s, p, o));
                    correct += 1;
                }
                1 => {}
                _ => {
                    let wrong = loop {
                        let w = rng.gen_range(0..n_e);
                        if w != o && w != s {
                            break w;
                        }
                    };
                    sentences.push(world.sentence(s, p, wrong));
                }
            }
        }
        if sentences.is_empty() {
            // every candidate says something: fall back to one hallucination
            let t = &triples[0];
            let idx = |label: &str| world.entities.iter().position(|e| e.label == label);
            let (s, o) = (idx(t.subject()).unwrap(), idx(t.object()).unwrap());
            let p = world
                .properties
                .iter()
                .position(|q| q.label == t.predicate())
                .unwrap();
            let wrong = (0..n_e).find(|&w| w != s && w != o).unwrap();
            sentences.push(world.sentence(s, p, wrong));
        }
        let adequacy = (1.0 + 2.0 * correct as f64 / size as f64 + rng.gen_range(-0.25..0.25))
            .clamp(scale.min, scale.max);
        let ratings = BTreeMap::from([
            ("semantic_adequacy".to_string(), adequacy),
            ("grammaticality".to_string(), rng.gen_range(2.5..=3.0)),
            ("fluency".to_string(), rng.gen_range(2.0..=3.0)),
        ]);
        out.push(HumanJudgment::new(
            format!("judg-{i:05}"),
            RdfGraph::new(triples)?,
            sentences.join(" "),
            ratings,
            scale,
        )?);
    }
    Ok(out)
}
