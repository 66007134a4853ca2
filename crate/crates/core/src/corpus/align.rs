//! Distant-supervision alignment of KB triples to fixed-size passages.
//!
//! A page about entity `e` is cut into consecutive, non-overlapping windows
//! of `chunk_words` words. A triple `(s, p, o)` aligns to a window when
//! `s == e` and `o`, or one of its aliases, occurs in the window as a
//! case-insensitive match on token boundaries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Dataset, PairExample};
use crate::error::{Error, Result};
use crate::rdf::{RdfGraph, Triple};

/// A source page: the entity it describes and its running text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub entity: String,
    pub text: String,
}

/// Passages whose aligned graphs are identical. Such passages break the
/// 1-to-1 assumption of retrieval evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    pub passages: usize,
    pub aligned_passages: usize,
    pub collisions: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentOutput {
    pub dataset: Dataset,
    pub report: AlignmentReport,
}

fn is_boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Case-insensitive occurrence of `needle` in `haystack` not glued to
/// neighbouring letters or digits. Both arguments must already be lowercase.
fn mentions(haystack: &str, needle: &str) -> bool {
    let needle = needle.trim();
    if needle.is_empty() {
        return false;
    }
    haystack.match_indices(needle).any(|(i, m)| {
        is_boundary(haystack[..i].chars().next_back())
            && is_boundary(haystack[i + m.len()..].chars().next())
    })
}

pub fn build_aligned_chunks(
    pages: &[Page],
    triples: &[Triple],
    aliases: &HashMap<String, Vec<String>>,
    chunk_words: usize,
) -> Result<AlignmentOutput> {
    if chunk_words == 0 {
        return Err(Error::invalid("chunk_words must be at least 1"));
    }
    let mut by_subject: HashMap<&str, Vec<&Triple>> = HashMap::new();
    for t in triples {
        let list = by_subject.entry(t.subject()).or_default();
        if !list.contains(&t) {
            list.push(t);
        }
    }
    // lowercase surface forms per object label
    let mut surface: HashMap<&str, Vec<String>> = HashMap::new();
    for t in triples {
        surface.entry(t.object()).or_insert_with(|| {
            let mut forms = vec![t.object().to_lowercase()];
            if let Some(a) = aliases.get(t.object()) {
                forms.extend(a.iter().map(|s| s.to_lowercase()));
            }
            forms
        });
    }

    let mut pairs = Vec::new();
    let mut report = AlignmentReport::default();
    let mut graphs: BTreeMap<Vec<[String; 3]>, Vec<String>> = BTreeMap::new();
    let mut used_ids: HashMap<String, usize> = HashMap::new();
    for page in pages {
        let words: Vec<&str> = page.text.split_whitespace().collect();
        let candidates = by_subject.get(page.entity.as_str());
        for (c, chunk) in words.chunks(chunk_words).enumerate() {
            report.passages += 1;
            let Some(candidates) = candidates else {
                continue;
            };
            let passage = chunk.join(" ");
            let lower = passage.to_lowercase();
            let aligned: Vec<Triple> = candidates
                .iter()
                .filter(|t| surface[t.object()].iter().any(|f| mentions(&lower, f)))
                .map(|t| (*t).clone())
                .collect();
            if aligned.is_empty() {
                continue;
            }
            report.aligned_passages += 1;
            let mut id = format!("{}#{}", page.entity, c);
            // pages repeated for the same entity get a suffix
            let n = used_ids.entry(id.clone()).or_default();
            *n += 1;
            if *n > 1 {
                id = format!("{id}~{}", *n - 1);
            }
            let key = aligned
                .iter()
                .map(|t| t.as_array().map(str::to_string))
                .collect();
            graphs.entry(key).or_default().push(id.clone());
            pairs.push(PairExample::new(id, RdfGraph::new(aligned)?, passage)?);
        }
    }
    report.collisions = graphs.into_values().filter(|ids| ids.len() > 1).collect();
    Ok(AlignmentOutput {
        dataset: Dataset::new("aligned", pairs)?,
        report,
    })
}
