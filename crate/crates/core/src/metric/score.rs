//! Bi-encoder, cross-encoder and ensemble scores, all in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::encoder::{cosine, dot, Embedding, Encoder, Model};
use crate::error::{Error, Result};
use crate::rdf::RdfGraph;

/// Linear scoring head over the jointly encoded `text [SEP] graph` sequence.
///
/// The logit is
///
/// ```text
/// z = joint · embed(text ++ [SEP] ++ graph)
///   + Σ_k interaction_k · û_k · v̂_k
///   + bias
/// ```
///
/// where `û`, `v̂` are the unit-normalized text and graph embeddings. With
/// a mean-pooled encoder the joint term alone is additive in the two
/// inputs; the interaction term lets the head respond to how well they
/// match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossHead {
    pub joint: Vec<f64>,
    pub interaction: Vec<f64>,
    pub bias: f64,
}

impl CrossHead {
    /// All-zero head: scores 0.5 everywhere.
    pub fn zeros(dim: usize) -> Self {
        CrossHead {
            joint: vec![0.0; dim],
            interaction: vec![0.0; dim],
            bias: 0.0,
        }
    }

    /// Head whose logit starts as `gain * cos(text, graph) + bias`.
    pub fn warm_start(dim: usize, gain: f64, bias: f64) -> Self {
        CrossHead {
            joint: vec![0.0; dim],
            interaction: vec![gain; dim],
            bias,
        }
    }

    pub fn dim(&self) -> usize {
        self.joint.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.joint.len() != dim || self.interaction.len() != dim {
            return Err(Error::invalid(format!(
                "cross head has dim {}/{}, encoder has {dim}",
                self.joint.len(),
                self.interaction.len()
            )));
        }
        let finite = self
            .joint
            .iter()
            .chain(&self.interaction)
            .all(|x| x.is_finite())
            && self.bias.is_finite();
        if !finite {
            return Err(Error::Numerical("cross head has non-finite weights".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(cos + 1) / 2` between the text and the linearized graph.
pub fn bi_score(model: &Model, text: &str, graph: &RdfGraph) -> Result<f64> {
    let c = cosine(&model.embed_text(text)?, &model.embed_graph(graph)?)?;
    Ok(((c + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Everything the cross-score backward pass needs from the forward pass.
pub(crate) struct CrossForward {
    pub joint_ids: Vec<u32>,
    pub text_ids: Vec<u32>,
    pub graph_ids: Vec<u32>,
    pub joint: Embedding,
    pub text: Embedding,
    pub graph: Embedding,
    /// `û ⊙ v̂`
    pub product: Vec<f64>,
    pub score: f64,
}

pub(crate) fn cross_forward(
    model: &Model,
    head: &CrossHead,
    text: &str,
    graph: &RdfGraph,
) -> Result<CrossForward> {
    head.validate(model.params.dim())?;
    let joint_ids = model.joint_ids(text, graph);
    let text_ids = model.text_ids(text);
    let graph_ids = model.graph_ids(graph);
    let joint = model.params.embed(&joint_ids)?;
    let t = model.params.embed(&text_ids)?;
    let g = model.params.embed(&graph_ids)?;
    let (tu, gu) = (t.normalized()?, g.normalized()?);
    let product: Vec<f64> = tu.0.iter().zip(&gu.0).map(|(a, b)| a * b).collect();
    let z = dot(&head.joint, &joint.0) + dot(&head.interaction, &product) + head.bias;
    Ok(CrossForward {
        joint_ids,
        text_ids,
        graph_ids,
        joint,
        text: t,
        graph: g,
        product,
        score: sigmoid(z),
    })
}

/// Logistic score of the cross head over the joint sequence.
pub fn cross_score(model: &Model, head: &CrossHead, text: &str, graph: &RdfGraph) -> Result<f64> {
    Ok(cross_forward(model, head, text, graph)?.score)
}

/// Mean of the bi- and cross-encoder scores.
pub fn eredat_score(
    bi_model: &Model,
    cross_model: &Model,
    head: &CrossHead,
    text: &str,
    graph: &RdfGraph,
) -> Result<f64> {
    if bi_model.vocab != cross_model.vocab {
        return Err(Error::invalid("bi and cross models must share a vocab"));
    }
    Ok((bi_score(bi_model, text, graph)? + cross_score(cross_model, head, text, graph)?) / 2.0)
}

/// Anything that rates a (text, graph) pair.
pub trait Scorer {
    fn score(&self, text: &str, graph: &RdfGraph) -> Result<f64>;
}

impl<F> Scorer for F
where
    F: Fn(&str, &RdfGraph) -> Result<f64>,
{
    fn score(&self, text: &str, graph: &RdfGraph) -> Result<f64> {
        self(text, graph)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiScorer<'a>(pub &'a Model);

impl Scorer for BiScorer<'_> {
    fn score(&self, text: &str, graph: &RdfGraph) -> Result<f64> {
        bi_score(self.0, text, graph)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrossScorer<'a> {
    pub model: &'a Model,
    pub head: &'a CrossHead,
}

impl Scorer for CrossScorer<'_> {
    fn score(&self, text: &str, graph: &RdfGraph) -> Result<f64> {
        cross_score(self.model, self.head, text, graph)
    }
}

/// Ensemble scorer. The shared-vocab check runs once, at construction.
#[derive(Debug, Clone, Copy)]
pub struct Eredat<'a> {
    bi: &'a Model,
    cross: &'a Model,
    head: &'a CrossHead,
}

impl<'a> Eredat<'a> {
    pub fn new(bi: &'a Model, cross: &'a Model, head: &'a CrossHead) -> Result<Self> {
        if bi.vocab != cross.vocab {
            return Err(Error::invalid("bi and cross models must share a vocab"));
        }
        head.validate(cross.params.dim())?;
        Ok(Eredat { bi, cross, head })
    }
}

impl Scorer for Eredat<'_> {
    fn score(&self, text: &str, graph: &RdfGraph) -> Result<f64> {
        let b = bi_score(self.bi, text, graph)?;
        let c = cross_score(self.cross, self.head, text, graph)?;
        Ok((b + c) / 2.0)
    }
}
