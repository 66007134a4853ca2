//! Paired (graph, text) datasets: ingestion, mixing, filtering, alignment,
//! statistics and toy generation.
//!
//! The on-disk format is JSONL, one object per line:
//!
//! ```text
//! {"id": "x1", "text": "...", "triples": [["s", "p", "o"], ...]}
//! ```

mod align;
mod toy;

pub use align::{build_aligned_chunks, AlignmentOutput, AlignmentReport, Page};
pub use toy::{
    generate_toy_corpus, ToyEntity, ToyProperty, ToyWorld, TOY_TEMPLATES, TOY_TEMPLATE_VERSION,
};

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rdf::{RdfGraph, Triple};

/// One (graph, text) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairExample {
    pub id: String,
    pub text: String,
    #[serde(rename = "triples")]
    pub graph: RdfGraph,
}

impl PairExample {
    pub fn new(id: impl Into<String>, graph: RdfGraph, text: impl Into<String>) -> Result<Self> {
        let (id, text) = (id.into(), text.into());
        if id.is_empty() {
            return Err(Error::invalid("pair id is empty"));
        }
        if text.trim().is_empty() {
            return Err(Error::invalid(format!("pair {id}: text is empty")));
        }
        Ok(PairExample { id, graph, text })
    }
}

/// Named, ordered list of pairs with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pairs: Vec<PairExample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, pairs: Vec<PairExample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate pair id {:?}", p.id)));
            }
        }
        Ok(Dataset {
            name: name.into(),
            pairs,
        })
    }

    pub fn pairs(&self) -> &[PairExample] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn into_pairs(self) -> Vec<PairExample> {
        self.pairs
    }

    /// Splits off the first `n` pairs; returns `(head, tail)`.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        let n = n.min(self.len());
        Ok((
            Dataset::new(format!("{}-head", self.name), self.pairs[..n].to_vec())?,
            Dataset::new(format!("{}-tail", self.name), self.pairs[n..].to_vec())?,
        ))
    }

    /// Every distinct text and linearized graph, for vocab building.
    pub fn corpus_strings(&self) -> impl Iterator<Item = String> + '_ {
        self.pairs
            .iter()
            .flat_map(|p| [p.text.clone(), p.graph.linearize()])
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("pairs always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn schema_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_record(value: &Value, path: &str, line: usize) -> Result<PairExample> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema_err(path, line, "record is not a JSON object"))?;
    let string_field = |name: &str| -> Result<String> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(schema_err(
                path,
                line,
                format!("field `{name}` must be a string"),
            )),
            None => Err(schema_err(path, line, format!("missing field `{name}`"))),
        }
    };
    let id = string_field("id")?;
    let text = string_field("text")?;
    let raw = match obj.get("triples") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(schema_err(path, line, "field `triples` must be an array")),
        None => return Err(schema_err(path, line, "missing field `triples`")),
    };
    let mut triples = Vec::with_capacity(raw.len());
    for (k, t) in raw.iter().enumerate() {
        let parts = t.as_array().filter(|a| a.len() == 3).ok_or_else(|| {
            schema_err(
                path,
                line,
                format!("field `triples[{k}]` must be an array of 3 strings"),
            )
        })?;
        let strs: Vec<&str> = parts.iter().filter_map(Value::as_str).collect();
        if strs.len() != 3 {
            return Err(schema_err(
                path,
                line,
                format!("field `triples[{k}]` must be an array of 3 strings"),
            ));
        }
        let triple = Triple::new(strs[0], strs[1], strs[2])
            .map_err(|e| schema_err(path, line, format!("field `triples[{k}]`: {e}")))?;
        triples.push(triple);
    }
    let graph = RdfGraph::new(triples)
        .map_err(|e| schema_err(path, line, format!("field `triples`: {e}")))?;
    PairExample::new(id, graph, text).map_err(|e| schema_err(path, line, e.to_string()))
}

/// Parses JSONL text. Blank lines are skipped; errors name the 1-based line.
pub fn parse_pairs(name: &str, text: &str, origin: &str) -> Result<Dataset> {
    parse_lines(name, text.lines().map(|l| Ok(l.to_string())), origin)
}

fn parse_lines<I>(name: &str, lines: I, origin: &str) -> Result<Dataset>
where
    I: Iterator<Item = Result<String>>,
{
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| schema_err(origin, lineno, format!("invalid JSON: {e}")))?;
        let pair = parse_record(&value, origin, lineno)?;
        if !seen.insert(pair.id.clone()) {
            return Err(schema_err(
                origin,
                lineno,
                format!("duplicate id {:?}", pair.id),
            ));
        }
        pairs.push(pair);
    }
    Dataset::new(name, pairs)
}

/// Loads a JSONL pair file. The dataset is named after the file stem.
pub fn load_pairs(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let origin = path.display().to_string();
    let lines = BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| Error::io(path, e)));
    parse_lines(&name, lines, &origin)
}

/// Draws `min |D_i|` pairs from every dataset (seeded, without replacement)
/// and concatenates them. Ids are prefixed with `"<dataset name>/"`.
pub fn mix_equal(datasets: &[Dataset], seed: u64) -> Result<Dataset> {
    if datasets.len() < 2 {
        return Err(Error::invalid("mixing needs at least two datasets"));
    }
    if let Some(d) = datasets.iter().find(|d| d.is_empty()) {
        return Err(Error::invalid(format!("dataset {:?} is empty", d.name)));
    }
    let mut names = HashSet::new();
    for d in datasets {
        if !names.insert(d.name.as_str()) {
            return Err(Error::invalid(format!(
                "duplicate dataset name {:?}",
                d.name
            )));
        }
    }
    let take = datasets.iter().map(Dataset::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(take * datasets.len());
    for d in datasets {
        let mut picked = sample(&mut rng, d.len(), take).into_vec();
        picked.sort_unstable();
        for i in picked {
            let p = &d.pairs[i];
            out.push(PairExample {
                id: format!("{}/{}", d.name, p.id),
                ..p.clone()
            });
        }
    }
    let name = datasets
        .iter()
        .map(|d| d.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Dataset::new(name, out)
}

/// Keeps the `ceil(fraction * n)` highest-scoring pairs, ties broken by
/// ascending id. Kept pairs stay in dataset order.
pub fn filter_top_similarity<F>(d: &Dataset, mut scorer: F, fraction: f64) -> Result<Dataset>
where
    F: FnMut(&PairExample) -> Result<f64>,
{
    if d.is_empty() {
        return Err(Error::invalid("cannot filter an empty dataset"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut scored = Vec::with_capacity(d.len());
    for (i, p) in d.pairs.iter().enumerate() {
        let s = scorer(p)?;
        if s.is_nan() {
            return Err(Error::Numerical(format!("score for {:?} is NaN", p.id)));
        }
        scored.push((i, s));
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| d.pairs[a.0].id.cmp(&d.pairs[b.0].id))
    });
    let keep = ((fraction * d.len() as f64).ceil() as usize).clamp(1, d.len());
    let mut kept: Vec<usize> = scored[..keep].iter().map(|(i, _)| *i).collect();
    kept.sort_unstable();
    Dataset::new(
        d.name.clone(),
        kept.into_iter().map(|i| d.pairs[i].clone()).collect(),
    )
}

/// Pair count and distinct label counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub pair_count: usize,
    pub distinct_property_count: usize,
    pub distinct_entity_count: usize,
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let mut properties = BTreeSet::new();
    let mut entities = BTreeSet::new();
    for p in &d.pairs {
        for t in p.graph.triples() {
            properties.insert(t.predicate());
            entities.insert(t.subject());
            entities.insert(t.object());
        }
    }
    DatasetStats {
        pair_count: d.len(),
        distinct_property_count: properties.len(),
        distinct_entity_count: entities.len(),
    }
}
