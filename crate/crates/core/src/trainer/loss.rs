//! In-batch contrastive loss.
//!
//! For texts `I` and graphs `J ⊇ I` (graph `i` is the positive of text `i`,
//! graphs past `|I|` are artificial negatives), with `s_ij` the cosine
//! similarity and `τ` the temperature:
//!
//! ```text
//! L = -(1/|I|) Σ_i log( exp(s_ii/τ) / Σ_j exp(s_ij/τ) )
//! ```
//!
//! The softmax runs over the graph axis only.

use crate::encoder::{cosine, cosine_grad, Embedding, Encoder, GradBuffer};
use crate::error::{Error, Result};

/// Token-id sequences for one step. `graphs[i]` is the positive for
/// `texts[i]`; any further graphs are negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub texts: Vec<Vec<u32>>,
    pub graphs: Vec<Vec<u32>>,
}

impl Batch {
    pub fn new(texts: Vec<Vec<u32>>, graphs: Vec<Vec<u32>>) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::invalid("batch has no texts"));
        }
        if graphs.len() < texts.len() {
            return Err(Error::invalid(format!(
                "batch has {} graphs for {} texts",
                graphs.len(),
                texts.len()
            )));
        }
        Ok(Batch { texts, graphs })
    }
}

/// Loss value and `dL/ds_ij`, one row per text.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss {
    pub loss: f64,
    pub grad_sim: Vec<Vec<f64>>,
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("temperature must be > 0, got {t}")));
    }
    Ok(())
}

/// Loss from a precomputed similarity matrix (`|I|` rows, `|J|` columns).
pub fn loss_from_similarities(sims: &[Vec<f64>], temperature: f64) -> Result<ContrastiveLoss> {
    check_temperature(temperature)?;
    let n = sims.len();
    if n == 0 || sims.iter().any(|row| row.len() < n) {
        return Err(Error::invalid(
            "similarity matrix must be |I| x |J| with |J| >= |I| >= 1",
        ));
    }
    let mut loss = 0.0;
    let mut grad_sim = Vec::with_capacity(n);
    for (i, row) in sims.iter().enumerate() {
        let logits: Vec<f64> = row.iter().map(|s| s / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - logits[i];
        let scale = 1.0 / (n as f64 * temperature);
        let g = exps
            .iter()
            .enumerate()
            .map(|(j, e)| {
                let p = e / z;
                let target = if j == i { 1.0 } else { 0.0 };
                (p - target) * scale
            })
            .collect();
        grad_sim.push(g);
    }
    Ok(ContrastiveLoss {
        loss: loss / n as f64,
        grad_sim,
    })
}

fn similarity_matrix(texts: &[Embedding], graphs: &[Embedding]) -> Result<Vec<Vec<f64>>> {
    texts
        .iter()
        .map(|t| graphs.iter().map(|g| cosine(t, g)).collect())
        .collect()
}

pub fn contrastive_loss(
    text_embs: &[Embedding],
    graph_embs: &[Embedding],
    temperature: f64,
) -> Result<ContrastiveLoss> {
    if text_embs.is_empty() || graph_embs.len() < text_embs.len() {
        return Err(Error::invalid("need |graphs| >= |texts| >= 1"));
    }
    loss_from_similarities(&similarity_matrix(text_embs, graph_embs)?, temperature)
}

fn embed_all<E: Encoder + ?Sized>(enc: &E, seqs: &[Vec<u32>]) -> Result<Vec<Embedding>> {
    seqs.iter().map(|ids| enc.embed(ids)).collect()
}

/// Forward pass only.
pub fn batch_loss<E: Encoder + ?Sized>(enc: &E, batch: &Batch, temperature: f64) -> Result<f64> {
    let t = embed_all(enc, &batch.texts)?;
    let g = embed_all(enc, &batch.graphs)?;
    Ok(contrastive_loss(&t, &g, temperature)?.loss)
}

/// Loss and its gradient with respect to every embedding row the batch
/// touches. Texts and graphs share the same encoder, so their gradients
/// accumulate into the same rows.
pub fn batch_gradient<E: Encoder + ?Sized>(
    enc: &E,
    batch: &Batch,
    temperature: f64,
) -> Result<(f64, GradBuffer)> {
    let t = embed_all(enc, &batch.texts)?;
    let g = embed_all(enc, &batch.graphs)?;
    let out = contrastive_loss(&t, &g, temperature)?;
    let dim = enc.dim();
    let mut d_text = vec![vec![0.0; dim]; t.len()];
    let mut d_graph = vec![vec![0.0; dim]; g.len()];
    for (i, row) in out.grad_sim.iter().enumerate() {
        for (j, &gs) in row.iter().enumerate() {
            if gs == 0.0 {
                continue;
            }
            let (da, db) = cosine_grad(&t[i], &g[j])?;
            for k in 0..dim {
                d_text[i][k] += gs * da[k];
                d_graph[j][k] += gs * db[k];
            }
        }
    }
    let mut grads = GradBuffer::new();
    for (ids, d) in batch.texts.iter().zip(&d_text) {
        enc.backward(ids, d, &mut grads);
    }
    for (ids, d) in batch.graphs.iter().zip(&d_graph) {
        enc.backward(ids, d, &mut grads);
    }
    Ok((out.loss, grads))
}
