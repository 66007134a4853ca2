//! Triples, graphs, and the marker-token linearization.
//!
//! A graph is linearized as
//! `[S] <subject> [P] <predicate> [O] <object> [S] ...` with single spaces
//! between markers and field text. Field text may contain spaces but never
//! one of the marker substrings, which keeps the format unambiguous without
//! any escaping.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUBJECT_MARKER: &str = "[S]";
pub const PREDICATE_MARKER: &str = "[P]";
pub const OBJECT_MARKER: &str = "[O]";

const MARKERS: [&str; 3] = [SUBJECT_MARKER, PREDICATE_MARKER, OBJECT_MARKER];

/// Relations treated as symmetric by default. Inverting a triple over one of
/// these does not change its meaning, so it never yields a useful negative.
pub const DEFAULT_SYMMETRIC_PREDICATES: [&str; 15] = [
    "taxon synonym",
    "partner in business or sport",
    "opposite of",
    "partially coincident with",
    "physically interacts with",
    "partner",
    "relative",
    "related category",
    "connects with",
    "twinned administrative body",
    "different from",
    "said to be the same as",
    "sibling",
    "adjacent station",
    "shares border with",
];

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::invalid(format!("triple {name} is empty")));
    }
    if let Some(m) = MARKERS.iter().find(|m| value.contains(*m)) {
        return Err(Error::invalid(format!(
            "triple {name} {value:?} contains the reserved marker {m}"
        )));
    }
    Ok(())
}

/// A `(subject, predicate, object)` statement with plain-text labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    subject: String,
    predicate: String,
    object: String,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Result<Self> {
        let triple = Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        };
        check_field("subject", &triple.subject)?;
        check_field("predicate", &triple.predicate)?;
        check_field("object", &triple.object)?;
        Ok(triple)
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    /// Swaps subject and object. Symmetric predicates are swapped too;
    /// filtering them out is up to the caller.
    pub fn inverted(&self) -> Triple {
        Triple {
            subject: self.object.clone(),
            predicate: self.predicate.clone(),
            object: self.subject.clone(),
        }
    }

    pub(crate) fn with_subject(&self, subject: &str) -> Triple {
        Triple {
            subject: subject.to_string(),
            ..self.clone()
        }
    }

    pub(crate) fn with_predicate(&self, predicate: &str) -> Triple {
        Triple {
            predicate: predicate.to_string(),
            ..self.clone()
        }
    }

    pub(crate) fn with_object(&self, object: &str) -> Triple {
        Triple {
            object: object.to_string(),
            ..self.clone()
        }
    }

    pub fn as_array(&self) -> [&str; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

// Serialized as a `[subject, predicate, object]` array.
impl Serialize for Triple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Triple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [s, p, o] = <[String; 3]>::deserialize(d)?;
        Triple::new(s, p, o).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

/// Free-function form of [`Triple::inverted`].
pub fn invert_triple(t: &Triple) -> Triple {
    t.inverted()
}

/// A non-empty, ordered list of triples. Order is significant and is never
/// changed implicitly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct RdfGraph {
    triples: Vec<Triple>,
}

impl RdfGraph {
    pub fn new(triples: Vec<Triple>) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::invalid("graph has no triples"));
        }
        Ok(RdfGraph { triples })
    }

    pub fn single(triple: Triple) -> Self {
        RdfGraph {
            triples: vec![triple],
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Returns a copy with the triple at `index` replaced.
    pub fn with_triple(&self, index: usize, triple: Triple) -> RdfGraph {
        let mut triples = self.triples.clone();
        triples[index] = triple;
        RdfGraph { triples }
    }

    /// Explicit canonical ordering, for tooling that wants it.
    pub fn sorted(&self) -> RdfGraph {
        let mut triples = self.triples.clone();
        triples.sort();
        RdfGraph { triples }
    }

    pub fn linearize(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(SUBJECT_MARKER);
            out.push(' ');
            out.push_str(&t.subject);
            out.push(' ');
            out.push_str(PREDICATE_MARKER);
            out.push(' ');
            out.push_str(&t.predicate);
            out.push(' ');
            out.push_str(OBJECT_MARKER);
            out.push(' ');
            out.push_str(&t.object);
        }
        out
    }
}

impl<'de> Deserialize<'de> for RdfGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let triples = Vec::<Triple>::deserialize(d)?;
        RdfGraph::new(triples).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`RdfGraph::linearize`].
pub fn linearize(g: &RdfGraph) -> String {
    g.linearize()
}

/// Inverse of [`linearize`].
///
/// Errors carry the byte offset where parsing failed.
pub fn parse_linearized(s: &str) -> Result<RdfGraph> {
    // Locate every marker occurrence; the text between consecutive markers is
    // a field.
    let mut marks: Vec<(usize, usize)> = Vec::new(); // (byte offset, marker index)
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(k) = MARKERS.iter().position(|m| s[i..].starts_with(m)) {
                marks.push((i, k));
                i += MARKERS[k].len();
                continue;
            }
        }
        i += 1;
    }

    let leading = marks.first().map_or(s.len(), |m| m.0);
    if !s[..leading].trim().is_empty() || marks.is_empty() {
        return Err(Error::Parse {
            position: 0,
            message: format!("expected {SUBJECT_MARKER}"),
        });
    }

    let mut triples = Vec::new();
    let mut fields: [&str; 3] = ["", "", ""];
    for (n, &(pos, kind)) in marks.iter().enumerate() {
        let expected = n % 3;
        if kind != expected {
            return Err(Error::Parse {
                position: pos,
                message: format!("expected {}, found {}", MARKERS[expected], MARKERS[kind]),
            });
        }
        let start = pos + MARKERS[kind].len();
        let end = marks.get(n + 1).map_or(s.len(), |m| m.0);
        let raw = &s[start..end];
        // Exactly one space after the marker and, unless at end of input, one
        // before the next marker.
        let body = raw.strip_prefix(' ').unwrap_or(raw);
        let body = if end < s.len() {
            body.strip_suffix(' ').unwrap_or(body)
        } else {
            body
        };
        if body.trim().is_empty() {
            return Err(Error::Parse {
                position: start,
                message: format!("empty field after {}", MARKERS[kind]),
            });
        }
        fields[expected] = body;
        if expected == 2 {
            let t = Triple::new(fields[0], fields[1], fields[2]).map_err(|e| Error::Parse {
                position: pos,
                message: e.to_string(),
            })?;
            triples.push(t);
        }
    }
    if !marks.len().is_multiple_of(3) {
        let missing = MARKERS[marks.len() % 3];
        return Err(Error::Parse {
            position: s.len(),
            message: format!("input ends before {missing}"),
        });
    }
    RdfGraph::new(triples)
}

/// Set of predicate labels whose triples are unchanged by argument swap.
/// Lookup is case-insensitive and ignores surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetricRegistry {
    predicates: BTreeSet<String>,
}

fn fold(p: &str) -> String {
    p.trim().to_lowercase()
}

impl Default for SymmetricRegistry {
    fn default() -> Self {
        Self::from_labels(DEFAULT_SYMMETRIC_PREDICATES)
    }
}

impl SymmetricRegistry {
    pub fn empty() -> Self {
        SymmetricRegistry {
            predicates: BTreeSet::new(),
        }
    }

    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let predicates = labels
            .into_iter()
            .map(|s| fold(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        SymmetricRegistry { predicates }
    }

    /// One predicate per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::from_labels(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .filter(|l| !l.trim().is_empty()),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn is_symmetric(&self, predicate: &str) -> bool {
        self.predicates.contains(&fold(predicate))
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }
}

/// Free-function form of [`SymmetricRegistry::is_symmetric`].
pub fn is_symmetric(predicate: &str, registry: &SymmetricRegistry) -> bool {
    registry.is_symmetric(predicate)
}
