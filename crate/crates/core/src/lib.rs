//! Aligned embeddings for knowledge-base graphs and natural-language text.
//!
//! Graphs are linearized with `[S]`, `[P]`, `[O]` markers and embedded by the
//! same mean-pooled encoder as texts. Training uses an in-batch contrastive
//! loss with optional corrupted and inverted graph negatives. The trained
//! encoders score (text, graph) pairs as a referenceless generation metric.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod metric;
pub mod rdf;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
