//! Regression of bi- and cross-encoder scores onto human ratings.
//!
//! Targets are ratings mapped to `[0, 1]` through each judgment's declared
//! scale. The objective is the mean squared error between score and target,
//! minimized by mini-batch SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::judgment::HumanJudgment;
use super::score::{bi_score, cross_forward, CrossHead};
use crate::encoder::{cosine, cosine_grad, Encoder, GradBuffer, Model};
use crate::error::{Error, Result};
use crate::rdf::RdfGraph;
use crate::trainer::{Checkpoint, CheckpointMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub criterion: String,
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for encoder rows.
    pub learning_rate: f64,
    /// Step size for the cross head.
    pub head_learning_rate: f64,
    pub seed: u64,
    /// Cross only: train the head and leave the encoder untouched.
    pub freeze_encoder: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            criterion: "semantic_adequacy".into(),
            epochs: 20,
            batch_size: 16,
            learning_rate: 2.0,
            head_learning_rate: 2.0,
            seed: 0,
            freeze_encoder: false,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("head_learning_rate", self.head_learning_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// A judgment reduced to what the regression needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub text: String,
    pub graph: RdfGraph,
    pub value: f64,
}

/// Normalized targets for `criterion`. Judgments without that criterion
/// are skipped; more than one target with no spread is rejected.
pub fn targets(judgments: &[HumanJudgment], criterion: &str) -> Result<Vec<Target>> {
    let out: Vec<Target> = judgments
        .iter()
        .filter_map(|j| {
            j.normalized(criterion).map(|value| Target {
                text: j.candidate_text.clone(),
                graph: j.graph.clone(),
                value,
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::invalid(format!("no judgments rate `{criterion}`")));
    }
    if out.len() > 1 && out.iter().all(|t| t.value == out[0].value) {
        return Err(Error::invalid(format!(
            "all `{criterion}` ratings are equal; nothing to fit"
        )));
    }
    Ok(out)
}

/// Bi-encoder MSE over `items` and its gradient on embedding rows.
pub fn bi_mse_gradient(model: &Model, items: &[Target]) -> Result<(f64, GradBuffer)> {
    let n = items.len() as f64;
    let mut grads = GradBuffer::new();
    let mut mse = 0.0;
    for t in items {
        let text_ids = model.text_ids(&t.text);
        let graph_ids = model.graph_ids(&t.graph);
        let a = model.params.embed(&text_ids)?;
        let b = model.params.embed(&graph_ids)?;
        let c = cosine(&a, &b)?;
        let err = (c + 1.0) / 2.0 - t.value;
        mse += err * err / n;
        // d(err²/n)/dcos = 2·err/n · 1/2
        let d_cos = err / n;
        let (da, db) = cosine_grad(&a, &b)?;
        let scale = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x * d_cos).collect() };
        model.params.backward(&text_ids, &scale(da), &mut grads);
        model.params.backward(&graph_ids, &scale(db), &mut grads);
    }
    Ok((mse, grads))
}

/// Gradients of the cross-encoder MSE.
pub struct CrossGradient {
    pub mse: f64,
    pub encoder: GradBuffer,
    pub head: CrossHead,
}

fn unit_backward(x: &[f64], d_unit: &[f64]) -> Vec<f64> {
    // d(x/|x|)ᵀ·g = (g - u(u·g)) / |x|
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let ug: f64 = u.iter().zip(d_unit).map(|(a, b)| a * b).sum();
    u.iter()
        .zip(d_unit)
        .map(|(ui, gi)| (gi - ui * ug) / norm)
        .collect()
}

pub fn cross_mse_gradient(
    model: &Model,
    head: &CrossHead,
    items: &[Target],
) -> Result<CrossGradient> {
    let dim = model.params.dim();
    let n = items.len() as f64;
    let mut encoder = GradBuffer::new();
    let mut dh = CrossHead::zeros(dim);
    let mut mse = 0.0;
    for t in items {
        let f = cross_forward(model, head, &t.text, &t.graph)?;
        let err = f.score - t.value;
        mse += err * err / n;
        let dz = 2.0 * err / n * f.score * (1.0 - f.score);
        if dz == 0.0 {
            continue;
        }
        for k in 0..dim {
            dh.joint[k] += dz * f.joint.0[k];
            dh.interaction[k] += dz * f.product[k];
        }
        dh.bias += dz;

        let d_joint: Vec<f64> = head.joint.iter().map(|w| dz * w).collect();
        model.params.backward(&f.joint_ids, &d_joint, &mut encoder);
        let tu = f.text.normalized()?;
        let gu = f.graph.normalized()?;
        let d_tu: Vec<f64> = (0..dim)
            .map(|k| dz * head.interaction[k] * gu.0[k])
            .collect();
        let d_gu: Vec<f64> = (0..dim)
            .map(|k| dz * head.interaction[k] * tu.0[k])
            .collect();
        model
            .params
            .backward(&f.text_ids, &unit_backward(&f.text.0, &d_tu), &mut encoder);
        model.params.backward(
            &f.graph_ids,
            &unit_backward(&f.graph.0, &d_gu),
            &mut encoder,
        );
    }
    Ok(CrossGradient {
        mse,
        encoder,
        head: dh,
    })
}

pub fn bi_mse(model: &Model, items: &[Target]) -> Result<f64> {
    let n = items.len() as f64;
    items.iter().try_fold(0.0, |acc, t| {
        let e = bi_score(model, &t.text, &t.graph)? - t.value;
        Ok(acc + e * e / n)
    })
}

pub fn cross_mse(model: &Model, head: &CrossHead, items: &[Target]) -> Result<f64> {
    let n = items.len() as f64;
    items.iter().try_fold(0.0, |acc, t| {
        let e = cross_forward(model, head, &t.text, &t.graph)?.score - t.value;
        Ok(acc + e * e / n)
    })
}

fn check_finite(mse: f64, epoch: usize) -> Result<()> {
    if mse.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite MSE at epoch {epoch}")))
    }
}

fn batches(n: usize, config: &FinetuneConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(config.batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

fn meta(kind: &str, config: &FinetuneConfig, history: Vec<f64>) -> CheckpointMeta {
    CheckpointMeta {
        kind: kind.into(),
        config: serde_json::to_value(config).expect("config serializes"),
        epochs: config.epochs,
        loss_history: history,
    }
}

/// Fits the bi-encoder score to the ratings. `loss_history[0]` is the MSE
/// before any update, followed by one entry per epoch.
pub fn finetune_bi(
    model: &Model,
    judgments: &[HumanJudgment],
    config: &FinetuneConfig,
) -> Result<Checkpoint> {
    config.validate()?;
    let items = targets(judgments, &config.criterion)?;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(4);
    let mut history = vec![bi_mse(&model, &items)?];
    for epoch in 1..=config.epochs {
        for batch in batches(items.len(), config, &mut rng) {
            let chunk: Vec<Target> = batch.iter().map(|&i| items[i].clone()).collect();
            let (_, grads) = bi_mse_gradient(&model, &chunk)?;
            model.params.sgd_step(&grads, config.learning_rate);
        }
        let mse = bi_mse(&model, &items)?;
        check_finite(mse, epoch)?;
        history.push(mse);
    }
    Ok(Checkpoint {
        model,
        head: None,
        meta: meta("finetune-bi", config, history),
    })
}

/// Fits the cross-encoder score, training head and (unless frozen) encoder
/// jointly.
pub fn finetune_cross(
    model: &Model,
    head: &CrossHead,
    judgments: &[HumanJudgment],
    config: &FinetuneConfig,
) -> Result<Checkpoint> {
    config.validate()?;
    head.validate(model.params.dim())?;
    let items = targets(judgments, &config.criterion)?;
    let mut model = model.clone();
    let mut head = head.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(5);
    let mut history = vec![cross_mse(&model, &head, &items)?];
    for epoch in 1..=config.epochs {
        for batch in batches(items.len(), config, &mut rng) {
            let chunk: Vec<Target> = batch.iter().map(|&i| items[i].clone()).collect();
            let g = cross_mse_gradient(&model, &head, &chunk)?;
            let lr = config.head_learning_rate;
            for (w, d) in head.joint.iter_mut().zip(&g.head.joint) {
                *w -= lr * d;
            }
            for (w, d) in head.interaction.iter_mut().zip(&g.head.interaction) {
                *w -= lr * d;
            }
            head.bias -= lr * g.head.bias;
            if !config.freeze_encoder {
                model.params.sgd_step(&g.encoder, config.learning_rate);
            }
        }
        let mse = cross_mse(&model, &head, &items)?;
        check_finite(mse, epoch)?;
        history.push(mse);
    }
    Ok(Checkpoint {
        model,
        head: Some(head),
        meta: meta("finetune-cross", config, history),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::encoder::{finite_difference_check, EncoderParams, Vocab};
    use crate::metric::judgment::RatingScale;
    use crate::rdf::Triple;

    fn model() -> Model {
        let vocab = Vocab::build(["alpha beta gamma delta", "a b c d"], 1);
        let params = EncoderParams::init(vocab.len(), 5, 3, 21).unwrap();
        Model::new(vocab, params).unwrap()
    }

    fn items() -> Vec<Target> {
        let g = |s: &str, o: &str| RdfGraph::single(Triple::new(s, "b", o).unwrap());
        vec![
            Target {
                text: "alpha beta".into(),
                graph: g("a", "c"),
                value: 0.9,
            },
            Target {
                text: "gamma".into(),
                graph: g("d", "c"),
                value: 0.1,
            },
            Target {
                text: "delta alpha".into(),
                graph: g("a", "d"),
                value: 0.4,
            },
        ]
    }

    #[test]
    fn bi_gradient_matches_finite_differences() {
        let m = model();
        let its = items();
        let (_, grads) = bi_mse_gradient(&m, &its).unwrap();
        let err = finite_difference_check(&m.params, &grads, 1e-6, |p| {
            bi_mse(&Model::new(m.vocab.clone(), p.clone())?, &its)
        })
        .unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn cross_gradient_matches_finite_differences() {
        let m = model();
        let its = items();
        let head = CrossHead {
            joint: vec![0.5, -0.3, 1.0, 0.2, -0.7],
            interaction: vec![2.0, 1.0, -1.0, 3.0, 0.5],
            bias: 0.1,
        };
        let g = cross_mse_gradient(&m, &head, &its).unwrap();
        let err = finite_difference_check(&m.params, &g.encoder, 1e-6, |p| {
            cross_mse(&Model::new(m.vocab.clone(), p.clone())?, &head, &its)
        })
        .unwrap();
        assert!(err < 1e-5, "encoder relative error {err}");

        let eps = 1e-6;
        let probe = |h: &CrossHead| cross_mse(&m, h, &its).unwrap();
        for k in 0..5 {
            let mut hi = head.clone();
            hi.interaction[k] += eps;
            let mut lo = head.clone();
            lo.interaction[k] -= eps;
            let fd = (probe(&hi) - probe(&lo)) / (2.0 * eps);
            assert!((fd - g.head.interaction[k]).abs() < 1e-8);
            let mut hi = head.clone();
            hi.joint[k] += eps;
            let mut lo = head.clone();
            lo.joint[k] -= eps;
            let fd = (probe(&hi) - probe(&lo)) / (2.0 * eps);
            assert!((fd - g.head.joint[k]).abs() < 1e-8);
        }
        let mut hi = head.clone();
        hi.bias += eps;
        let mut lo = head.clone();
        lo.bias -= eps;
        assert!(((probe(&hi) - probe(&lo)) / (2.0 * eps) - g.head.bias).abs() < 1e-8);
    }

    fn judgments() -> Vec<HumanJudgment> {
        let scale = RatingScale::new(1.0, 3.0).unwrap();
        items()
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let r = BTreeMap::from([("semantic_adequacy".to_string(), 1.0 + 2.0 * t.value)]);
                HumanJudgment::new(format!("j{i}"), t.graph, t.text, r, scale).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_and_zero_epochs_are_identity() {
        let m = model();
        let cfg = FinetuneConfig {
            learning_rate: 0.0,
            head_learning_rate: 0.0,
            ..Default::default()
        };
        assert_eq!(finetune_bi(&m, &judgments(), &cfg).unwrap().model, m);
        let head = CrossHead::warm_start(5, 1.0, 0.0);
        let zero = FinetuneConfig {
            epochs: 0,
            ..Default::default()
        };
        let c = finetune_cross(&m, &head, &judgments(), &zero).unwrap();
        assert_eq!(c.model, m);
        assert_eq!(c.head.unwrap(), head);
    }

    #[test]
    fn perfect_pair_has_zero_gradient() {
        let m = model();
        let t = Target {
            text: "[S] a [P] b [O] c".into(),
            graph: RdfGraph::single(Triple::new("a", "b", "c").unwrap()),
            value: 1.0,
        };
        let (mse, grads) = bi_mse_gradient(&m, &[t]).unwrap();
        assert!(mse < 1e-24);
        for (_, row) in grads.rows() {
            assert!(row.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn mse_decreases() {
        let m = model();
        let cfg = FinetuneConfig {
            epochs: 50,
            batch_size: 3,
            ..Default::default()
        };
        let bi = finetune_bi(&m, &judgments(), &cfg).unwrap();
        let h = &bi.meta.loss_history;
        assert!(h.last().unwrap() < &h[0]);

        let frozen = FinetuneConfig {
            freeze_encoder: true,
            ..cfg
        };
        let c = finetune_cross(&m, &CrossHead::zeros(5), &judgments(), &frozen).unwrap();
        assert_eq!(c.model, m);
        let h = &c.meta.loss_history;
        assert!(h.last().unwrap() < &h[0]);
    }

    #[test]
    fn degenerate_ratings_rejected() {
        let scale = RatingScale::new(1.0, 3.0).unwrap();
        let js: Vec<HumanJudgment> = items()
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                let r = BTreeMap::from([("semantic_adequacy".to_string(), 2.0)]);
                HumanJudgment::new(format!("j{i}"), t.graph, t.text, r, scale).unwrap()
            })
            .collect();
        assert!(finetune_bi(&model(), &js, &FinetuneConfig::default()).is_err());
        let wrong = FinetuneConfig {
            criterion: "relevance".into(),
            ..Default::default()
        };
        assert!(finetune_bi(&model(), &judgments(), &wrong).is_err());
    }
}
