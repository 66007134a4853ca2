//! Structured negatives built from the graph side only: field corruption
//! ("hard" negatives) and subject/object inversion.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, PairExample};
use crate::error::{Error, Result};
use crate::rdf::{RdfGraph, SymmetricRegistry, Triple};

/// Resample attempts when the chosen slot cannot supply a different value.
const SLOT_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Subject,
    Predicate,
    Object,
}

const SLOTS: [Slot; 3] = [Slot::Subject, Slot::Predicate, Slot::Object];

/// De-duplicated labels per triple slot, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorruptionPool {
    pub subjects: Vec<String>,
    pub predicates: Vec<String>,
    pub objects: Vec<String>,
}

fn push_unique(list: &mut Vec<String>, seen: &mut HashSet<String>, v: &str) {
    if seen.insert(v.to_string()) {
        list.push(v.to_string());
    }
}

impl CorruptionPool {
    pub fn from_dataset(d: &Dataset) -> Self {
        Self::from_graphs(d.pairs().iter().map(|p| &p.graph))
    }

    pub fn from_graphs<'a, I: IntoIterator<Item = &'a RdfGraph>>(graphs: I) -> Self {
        let mut pool = CorruptionPool::default();
        let (mut s, mut p, mut o) = (HashSet::new(), HashSet::new(), HashSet::new());
        for g in graphs {
            for t in g.triples() {
                push_unique(&mut pool.subjects, &mut s, t.subject());
                push_unique(&mut pool.predicates, &mut p, t.predicate());
                push_unique(&mut pool.objects, &mut o, t.object());
            }
        }
        pool
    }

    fn values(&self, slot: Slot) -> &[String] {
        match slot {
            Slot::Subject => &self.subjects,
            Slot::Predicate => &self.predicates,
            Slot::Object => &self.objects,
        }
    }
}

fn current(t: &Triple, slot: Slot) -> &str {
    match slot {
        Slot::Subject => t.subject(),
        Slot::Predicate => t.predicate(),
        Slot::Object => t.object(),
    }
}

/// Replaces one field of one uniformly chosen triple with a different value
/// from the pool. The slot is chosen uniformly; if the pool cannot offer a
/// different value for it, the slot is redrawn up to three times.
pub fn corrupt_graph<R: Rng + ?Sized>(
    g: &RdfGraph,
    pool: &CorruptionPool,
    rng: &mut R,
) -> Result<RdfGraph> {
    let index = rng.gen_range(0..g.len());
    let triple = &g.triples()[index];
    for _ in 0..=SLOT_RETRIES {
        let slot = SLOTS[rng.gen_range(0..SLOTS.len())];
        let values = pool.values(slot);
        let original = current(triple, slot);
        let alternatives = values.iter().filter(|v| v.as_str() != original).count();
        if alternatives == 0 {
            continue;
        }
        let pick = rng.gen_range(0..alternatives);
        let replacement = values
            .iter()
            .filter(|v| v.as_str() != original)
            .nth(pick)
            .expect("pick < alternatives");
        let corrupted = match slot {
            Slot::Subject => triple.with_subject(replacement),
            Slot::Predicate => triple.with_predicate(replacement),
            Slot::Object => triple.with_object(replacement),
        };
        return Ok(g.with_triple(index, corrupted));
    }
    Err(Error::invalid(format!(
        "corruption pool cannot change any field of {triple}"
    )))
}

fn invertible(t: &Triple, registry: &SymmetricRegistry) -> bool {
    // s == o would produce a "negative" identical to the source
    !registry.is_symmetric(t.predicate()) && t.subject() != t.object()
}

/// Inverts one uniformly chosen triple whose predicate is not symmetric.
/// Returns `None` when no triple qualifies.
pub fn invert_graph<R: Rng + ?Sized>(
    g: &RdfGraph,
    registry: &SymmetricRegistry,
    rng: &mut R,
) -> Option<RdfGraph> {
    let candidates: Vec<usize> = g
        .triples()
        .iter()
        .enumerate()
        .filter(|(_, t)| invertible(t, registry))
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let i = candidates[rng.gen_range(0..candidates.len())];
    Some(g.with_triple(i, g.triples()[i].inverted()))
}

/// One benchmark item: a single-triple graph, its inversion, and the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionItem {
    pub id: String,
    pub text: String,
    #[serde(rename = "triples")]
    pub graph: RdfGraph,
    #[serde(rename = "inverted_triples")]
    pub inverted_graph: RdfGraph,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InversionBenchmark {
    pub items: Vec<InversionItem>,
}

impl InversionBenchmark {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("items serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Loads a benchmark, re-checking that every inverted graph is the
    /// inversion of its single-triple source.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut items = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let schema = |message: String| Error::Schema {
                path: path.display().to_string(),
                line: n + 1,
                message,
            };
            let item: InversionItem =
                serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
            if item.graph.len() != 1
                || item.inverted_graph.triples() != [item.graph.triples()[0].inverted()]
            {
                return Err(schema(
                    "inverted_triples must be the inversion of a single triple".into(),
                ));
            }
            items.push(item);
        }
        Ok(InversionBenchmark { items })
    }
}

/// Every single-triple pair whose predicate is not symmetric, with the
/// triple inverted.
pub fn build_inversion_benchmark(d: &Dataset, registry: &SymmetricRegistry) -> InversionBenchmark {
    let items = d
        .pairs()
        .iter()
        .filter(|p| p.graph.len() == 1 && invertible(&p.graph.triples()[0], registry))
        .map(|p| InversionItem {
            id: p.id.clone(),
            text: p.text.clone(),
            graph: p.graph.clone(),
            inverted_graph: RdfGraph::single(p.graph.triples()[0].inverted()),
        })
        .collect();
    InversionBenchmark { items }
}

/// How many artificial negatives to add per positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativePolicy {
    pub hard: usize,
    pub inverted: usize,
}

impl Default for NegativePolicy {
    fn default() -> Self {
        NegativePolicy {
            hard: 1,
            inverted: 0,
        }
    }
}

impl NegativePolicy {
    pub const NONE: NegativePolicy = NegativePolicy {
        hard: 0,
        inverted: 0,
    };
}

/// Texts, their positive graphs, and the extra negative graphs that extend
/// only the graph axis of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBatch {
    pub texts: Vec<String>,
    pub graphs: Vec<RdfGraph>,
    pub negatives: Vec<RdfGraph>,
}

impl AugmentedBatch {
    /// Positives followed by negatives, the full graph axis.
    pub fn all_graphs(&self) -> impl Iterator<Item = &RdfGraph> {
        self.graphs.iter().chain(&self.negatives)
    }
}

/// For each pair, appends `policy.hard` corrupted and up to
/// `policy.inverted` inverted variants of its graph.
pub fn augment_batch<R: Rng + ?Sized>(
    pairs: &[PairExample],
    policy: NegativePolicy,
    pool: &CorruptionPool,
    registry: &SymmetricRegistry,
    rng: &mut R,
) -> Result<AugmentedBatch> {
    let mut negatives = Vec::with_capacity(pairs.len() * (policy.hard + policy.inverted));
    for p in pairs {
        for _ in 0..policy.hard {
            negatives.push(corrupt_graph(&p.graph, pool, rng)?);
        }
        for _ in 0..policy.inverted {
            if let Some(g) = invert_graph(&p.graph, registry, rng) {
                negatives.push(g);
            }
        }
    }
    Ok(AugmentedBatch {
        texts: pairs.iter().map(|p| p.text.clone()).collect(),
        graphs: pairs.iter().map(|p| p.graph.clone()).collect(),
        negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(s, p, o).unwrap()
    }

    fn pair(id: &str, triples: Vec<Triple>) -> PairExample {
        PairExample::new(id, RdfGraph::new(triples).unwrap(), "some text").unwrap()
    }

    fn diff_count(a: &RdfGraph, b: &RdfGraph) -> usize {
        a.triples()
            .iter()
            .zip(b.triples())
            .map(|(x, y)| {
                x.as_array()
                    .iter()
                    .zip(y.as_array())
                    .filter(|(u, v)| *u != v)
                    .count()
            })
            .sum()
    }

    #[test]
    fn only_possible_object_corruption() {
        let g = RdfGraph::single(t("s", "p", "a"));
        let pool = CorruptionPool {
            subjects: vec!["s".into()],
            predicates: vec!["p".into()],
            objects: vec!["a".into(), "b".into()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            // an error means four draws all missed the object slot
            if let Ok(c) = corrupt_graph(&g, &pool, &mut rng) {
                assert_eq!(c.triples(), &[t("s", "p", "b")]);
            }
        }
    }

    #[test]
    fn exactly_one_field_changes() {
        let g = RdfGraph::new(vec![t("a", "p", "b"), t("b", "q", "c"), t("c", "p", "a")]).unwrap();
        let pool = CorruptionPool::from_graphs([&g]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c = corrupt_graph(&g, &pool, &mut rng).unwrap();
            assert_eq!(diff_count(&g, &c), 1);
            assert_ne!(c, g);
        }
    }

    #[test]
    fn degenerate_pool_errors() {
        let g = RdfGraph::single(t("s", "p", "o"));
        let pool = CorruptionPool::from_graphs([&g]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(corrupt_graph(&g, &pool, &mut rng).is_err());
    }

    #[test]
    fn inversion_rules() {
        let reg = SymmetricRegistry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = RdfGraph::single(t("a", "larger than", "b"));
        assert_eq!(
            invert_graph(&g, &reg, &mut rng).unwrap().triples(),
            &[t("b", "larger than", "a")]
        );
        let sym = RdfGraph::new(vec![t("a", "sibling", "b"), t("c", "Sibling", "d")]).unwrap();
        assert!(invert_graph(&sym, &reg, &mut rng).is_none());
        let mixed = RdfGraph::new(vec![t("a", "sibling", "b"), t("c", "p", "d")]).unwrap();
        for _ in 0..200 {
            let inv = invert_graph(&mixed, &reg, &mut rng).unwrap();
            assert_eq!(inv.triples()[0], mixed.triples()[0]);
            assert_eq!(inv.triples()[1], t("d", "p", "c"));
        }
    }

    #[test]
    fn benchmark_selection() {
        let reg = SymmetricRegistry::default();
        let d = Dataset::new(
            "d",
            vec![
                pair("1", vec![t("a", "larger than", "b")]),
                pair("2", vec![t("a", "p", "b"), t("b", "p", "c")]),
                pair("3", vec![t("a", "sibling", "b")]),
            ],
        )
        .unwrap();
        let bench = build_inversion_benchmark(&d, &reg);
        assert_eq!(bench.len(), 1);
        let item = &bench.items[0];
        assert_eq!(
            item.inverted_graph.triples(),
            &[item.graph.triples()[0].inverted()]
        );
    }

    fn batch_pairs(triples: &[(&str, &str, &str)]) -> Vec<PairExample> {
        triples
            .iter()
            .enumerate()
            .map(|(i, (s, p, o))| pair(&i.to_string(), vec![t(s, p, o)]))
            .collect()
    }

    #[test]
    fn augment_counts() {
        let reg = SymmetricRegistry::default();
        let pairs = batch_pairs(&[
            ("a", "p", "b"),
            ("c", "q", "d"),
            ("e", "p", "f"),
            ("g", "q", "h"),
        ]);
        let pool = CorruptionPool::from_graphs(pairs.iter().map(|p| &p.graph));
        let mut rng = ChaCha8Rng::seed_from_u64(3);

        let b = augment_batch(
            &pairs,
            NegativePolicy {
                hard: 1,
                inverted: 0,
            },
            &pool,
            &reg,
            &mut rng,
        )
        .unwrap();
        assert_eq!((b.texts.len(), b.all_graphs().count()), (4, 8));

        let b = augment_batch(&pairs, NegativePolicy::NONE, &pool, &reg, &mut rng).unwrap();
        assert_eq!((b.texts.len(), b.all_graphs().count()), (4, 4));
        assert!(b.negatives.is_empty());

        let sym = batch_pairs(&[
            ("a", "sibling", "b"),
            ("c", "partner", "d"),
            ("e", "sibling", "f"),
            ("g", "relative", "h"),
        ]);
        let pool = CorruptionPool::from_graphs(sym.iter().map(|p| &p.graph));
        let b = augment_batch(
            &sym,
            NegativePolicy {
                hard: 1,
                inverted: 1,
            },
            &pool,
            &reg,
            &mut rng,
        )
        .unwrap();
        assert_eq!((b.texts.len(), b.all_graphs().count()), (4, 8));
    }
}
