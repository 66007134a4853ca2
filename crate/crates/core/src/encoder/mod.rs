//! Tokenization, the mean-pooled embedding encoder, and gradient checking.
//!
//! Texts and linearized graphs go through the same tokenizer and the same
//! embedding table.

mod gradcheck;
mod params;
mod vocab;

pub use gradcheck::{finite_difference_check, grad_check};
pub use params::{cosine, cosine_grad, dot, embed, Embedding, Encoder, EncoderParams, GradBuffer};
pub use vocab::{
    build_vocab, pieces, tokenize, Piece, Vocab, OBJ, OBJ_ID, PAD, PAD_ID, PRED, PRED_ID, RESERVED,
    SEP, SEP_ID, SUBJ, SUBJ_ID, UNK, UNK_ID,
};

use crate::error::Result;
use crate::rdf::RdfGraph;

/// Vocab plus encoder parameters: everything needed to embed raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub params: EncoderParams,
}

impl Model {
    pub fn new(vocab: Vocab, params: EncoderParams) -> Result<Self> {
        if params.vocab_size() != vocab.len() {
            return Err(crate::Error::invalid(format!(
                "encoder has {} token rows but vocab has {} tokens",
                params.vocab_size(),
                vocab.len()
            )));
        }
        Ok(Model { vocab, params })
    }

    pub fn text_ids(&self, text: &str) -> Vec<u32> {
        self.vocab.tokenize(text)
    }

    pub fn graph_ids(&self, graph: &RdfGraph) -> Vec<u32> {
        self.vocab.tokenize(&graph.linearize())
    }

    /// `text ++ [SEP] ++ linearize(graph)` as one sequence.
    pub fn joint_ids(&self, text: &str, graph: &RdfGraph) -> Vec<u32> {
        let mut ids = self.text_ids(text);
        ids.push(SEP_ID);
        ids.extend(self.graph_ids(graph));
        ids
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding> {
        self.params.embed(&self.text_ids(text))
    }

    pub fn embed_graph(&self, graph: &RdfGraph) -> Result<Embedding> {
        self.params.embed(&self.graph_ids(graph))
    }
}
