use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::loss::{batch_gradient, Batch};
use crate::augment::{augment_batch, CorruptionPool, NegativePolicy};
use crate::corpus::Dataset;
use crate::encoder::{EncoderParams, Model, Vocab};
use crate::error::{Error, Result};
use crate::rdf::SymmetricRegistry;
use crate::retrieval::{eval_top1, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub negatives: NegativePolicy,
    pub seed: u64,
    pub dim: usize,
    /// Hashed adjacent-token features; 0 keeps the encoder a bag of tokens.
    pub bigram_buckets: usize,
    /// Held-out retrieval accuracy every N epochs (0 = never).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 30,
            learning_rate: 5.0,
            temperature: 1.0,
            negatives: NegativePolicy::default(),
            seed: 0,
            dim: 64,
            bigram_buckets: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be > 0"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be >= 0"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("dim must be at least 2"));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Contrastive pre-training from a fresh, seeded initialization.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    vocab: &Vocab,
    registry: &SymmetricRegistry,
    eval: Option<&Dataset>,
) -> Result<TrainOutput> {
    config.validate()?;
    let params = EncoderParams::init(vocab.len(), config.dim, config.bigram_buckets, config.seed)?;
    let model = Model::new(vocab.clone(), params)?;
    train_model(config, model, dataset, registry, eval)
}

/// Contrastive training starting from an existing model.
pub fn train_model(
    config: &TrainConfig,
    mut model: Model,
    dataset: &Dataset,
    registry: &SymmetricRegistry,
    eval: Option<&Dataset>,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let pool = CorruptionPool::from_dataset(dataset);
    let pairs = dataset.pairs();
    let text_ids: Vec<Vec<u32>> = pairs.iter().map(|p| model.text_ids(&p.text)).collect();
    let graph_ids: Vec<Vec<u32>> = pairs.iter().map(|p| model.graph_ids(&p.graph)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_pairs: Vec<_> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let aug = augment_batch(&batch_pairs, config.negatives, &pool, registry, &mut rng)?;
            let mut graphs: Vec<Vec<u32>> = chunk.iter().map(|&i| graph_ids[i].clone()).collect();
            graphs.extend(aug.negatives.iter().map(|g| model.graph_ids(g)));
            let batch = Batch::new(chunk.iter().map(|&i| text_ids[i].clone()).collect(), graphs)?;

            let (loss, grads) = batch_gradient(&model.params, &batch, config.temperature)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {step}"
                )));
            }
            model.params.sgd_step(&grads, config.learning_rate);
            total += loss;
            steps += 1;
        }
        let eval_accuracy = match eval {
            Some(d) if config.eval_every > 0 && epoch % config.eval_every == 0 => {
                Some(eval_top1(&model, d, Direction::GraphToText)?)
            }
            _ => None,
        };
        log.push(EpochRecord {
            epoch,
            mean_loss: total / steps as f64,
            eval_accuracy,
        });
    }

    let meta = CheckpointMeta {
        kind: "pretrain".into(),
        config: serde_json::to_value(config).expect("config serializes"),
        epochs: config.epochs,
        loss_history: log.iter().map(|r| r.mean_loss).collect(),
    };
    Ok(TrainOutput {
        checkpoint: Checkpoint {
            model,
            head: None,
            meta,
        },
        log,
    })
}
