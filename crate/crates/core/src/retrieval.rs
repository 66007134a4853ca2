//! Exact embedding index and top-1 retrieval evaluation.

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::encoder::{dot, Embedding, Encoder, Model};
use crate::error::{Error, Result};

/// Unit-normalized embeddings in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingIndex {
    /// Builds an index from already computed embeddings.
    pub fn from_embeddings(items: Vec<(String, Embedding)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::invalid("cannot build an index with no items"));
        }
        let mut seen = HashSet::new();
        let mut ids = Vec::with_capacity(items.len());
        let mut vectors = Vec::with_capacity(items.len());
        for (id, e) in items {
            if !seen.insert(id.clone()) {
                return Err(Error::invalid(format!("duplicate index id `{id}`")));
            }
            let unit = e.normalized().map_err(|_| {
                Error::Numerical(format!("item `{id}` has a zero or non-finite embedding"))
            })?;
            ids.push(id);
            vectors.push(unit.0);
        }
        Ok(EmbeddingIndex { ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }
}

/// Embeds every item in parallel; output order matches input order.
pub fn build_index<E: Encoder + Sync + ?Sized>(
    encoder: &E,
    items: &[(String, Vec<u32>)],
) -> Result<EmbeddingIndex> {
    let embedded: Vec<(String, Embedding)> = items
        .par_iter()
        .map(|(id, ids)| {
            encoder
                .embed(ids)
                .map(|e| (id.clone(), e))
                .map_err(|e| Error::invalid(format!("item `{id}`: {e}")))
        })
        .collect::<Result<_>>()?;
    EmbeddingIndex::from_embeddings(embedded)
}

fn rank_order(a: &(usize, f64), b: &(usize, f64), ids: &[String]) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0]))
}

/// Exact top-`k` by cosine, ties broken by ascending id.
pub fn top_k(index: &EmbeddingIndex, query: &Embedding, k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 || k > index.len() {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            index.len()
        )));
    }
    let q = query.normalized()?;
    if q.dim() != index.vectors[0].len() {
        return Err(Error::invalid("query dimension does not match the index"));
    }
    let mut scored: Vec<(usize, f64)> = index
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, dot(&q.0, v).clamp(-1.0, 1.0)))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(a, b, &index.ids));
        scored.truncate(k);
    }
    scored.sort_by(|a, b| rank_order(a, b, &index.ids));
    Ok(scored
        .into_iter()
        .map(|(i, s)| (index.ids[i].clone(), s))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Query with a graph, retrieve among texts.
    GraphToText,
    /// Query with a text, retrieve among graphs.
    TextToGraph,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::GraphToText => "graph2text",
            Direction::TextToGraph => "text2graph",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph2text" => Ok(Direction::GraphToText),
            "text2graph" => Ok(Direction::TextToGraph),
            other => Err(Error::invalid(format!(
                "unknown direction `{other}` (expected graph2text or text2graph)"
            ))),
        }
    }
}

/// Fraction of queries whose best match is their own pair.
pub fn eval_top1(model: &Model, dataset: &Dataset, direction: Direction) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid(
            "cannot evaluate retrieval on an empty dataset",
        ));
    }
    let pairs = dataset.pairs();
    let texts: Vec<(String, Vec<u32>)> = pairs
        .iter()
        .map(|p| (p.id.clone(), model.text_ids(&p.text)))
        .collect();
    let graphs: Vec<(String, Vec<u32>)> = pairs
        .iter()
        .map(|p| (p.id.clone(), model.graph_ids(&p.graph)))
        .collect();
    let (queries, corpus) = match direction {
        Direction::GraphToText => (graphs, texts),
        Direction::TextToGraph => (texts, graphs),
    };
    let index = build_index(&model.params, &corpus)?;
    let query_index = build_index(&model.params, &queries)?;
    let hits = (0..query_index.len())
        .into_par_iter()
        .map(|qi| {
            let q = Embedding(query_index.vector(qi).to_vec());
            let best = top_k(&index, &q, 1)?;
            Ok(usize::from(best[0].0 == query_index.ids()[qi]))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / pairs.len() as f64)
}

/// JSON evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    pub direction: String,
    pub accuracy: f64,
    pub n: usize,
    pub checkpoint: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderParams;

    fn fixed_index() -> EmbeddingIndex {
        EmbeddingIndex::from_embeddings(vec![
            ("b".into(), Embedding(vec![1.0, 0.0])),
            ("a".into(), Embedding(vec![2.0, 0.0])),
            ("c".into(), Embedding(vec![0.0, 3.0])),
        ])
        .unwrap()
    }

    #[test]
    fn rows_are_unit_norm() {
        let idx = fixed_index();
        for i in 0..idx.len() {
            let n: f64 = idx.vector(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ties_by_ascending_id() {
        let res = top_k(&fixed_index(), &Embedding(vec![1.0, 0.0]), 3).unwrap();
        let ids: Vec<_> = res.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(res[0].1, 1.0);
    }

    #[test]
    fn k_range_and_duplicates() {
        let idx = fixed_index();
        assert!(top_k(&idx, &Embedding(vec![1.0, 0.0]), 0).is_err());
        assert!(top_k(&idx, &Embedding(vec![1.0, 0.0]), 4).is_err());
        let dup = EmbeddingIndex::from_embeddings(vec![
            ("x".into(), Embedding(vec![1.0, 0.0])),
            ("x".into(), Embedding(vec![0.0, 1.0])),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn zero_embedding_names_item() {
        let err = EmbeddingIndex::from_embeddings(vec![("bad".into(), Embedding(vec![0.0, 0.0]))])
            .unwrap_err();
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn single_item_always_retrieved() {
        let p = EncoderParams::init(10, 4, 0, 1).unwrap();
        let idx = build_index(&p, &[("only".into(), vec![7, 8])]).unwrap();
        let res = top_k(&idx, &Embedding(vec![-1.0, 0.5, 0.2, 0.0]), 1).unwrap();
        assert_eq!(res[0].0, "only");
    }

    #[test]
    fn direction_parsing() {
        assert_eq!(
            "graph2text".parse::<Direction>().unwrap(),
            Direction::GraphToText
        );
        assert!("sideways".parse::<Direction>().is_err());
    }
}
