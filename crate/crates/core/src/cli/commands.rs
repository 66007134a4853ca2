use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use super::*;
use crate::augment::{
    augment_batch, build_inversion_benchmark, CorruptionPool, InversionBenchmark, NegativePolicy,
};
use crate::corpus::{
    build_aligned_chunks, dataset_stats, load_pairs, mix_equal, Dataset, Page, ToyWorld,
};
use crate::encoder::{Encoder, Vocab};
use crate::error::Result;
use crate::metric::{
    correlate, finetune_bi, finetune_cross, generate_toy_judgments, inversion_gap_eval,
    load_judgments, save_judgments, shuffled_pairs, similarity_histogram, BiScorer, CrossHead,
    CrossScorer, Eredat, FinetuneConfig, HumanJudgment, Scorer,
};
use crate::rdf::{RdfGraph, SymmetricRegistry, Triple};
use crate::retrieval::{eval_top1, Direction, RetrievalReport};
use crate::trainer::{load_checkpoint, train, Checkpoint, TrainConfig};

pub(super) fn execute(command: &Command) -> Result<()> {
    let out = match command {
        Command::GenToy(a) => &a.out,
        Command::Stats(a) => &a.out,
        Command::Mix(a) => &a.out,
        Command::AlignChunks(a) => &a.out,
        Command::BuildVocab(a) => &a.out,
        Command::Train(a) => &a.out,
        Command::EvalRetrieval(a) => &a.out,
        Command::Augment(a) => &a.out,
        Command::Finetune(a) => &a.out,
        Command::Score(a) => &a.out,
        Command::Correlate(a) => &a.out,
        Command::Invtest(a) => &a.out,
        Command::Histogram(a) => &a.out,
    };
    let dir = out.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(
        &dir.join("run.json"),
        &json!({ "command": command.name(), "args": command }),
    )?;
    match command {
        Command::GenToy(a) => gen_toy(a, dir),
        Command::Stats(a) => stats(a, dir),
        Command::Mix(a) => mix(a, dir),
        Command::AlignChunks(a) => align_chunks(a, dir),
        Command::BuildVocab(a) => build_vocab(a, dir),
        Command::Train(a) => train_cmd(a, dir),
        Command::EvalRetrieval(a) => eval_retrieval(a, dir),
        Command::Augment(a) => augment(a, dir),
        Command::Finetune(a) => finetune(a, dir),
        Command::Score(a) => score(a, dir),
        Command::Correlate(a) => correlate_cmd(a, dir),
        Command::Invtest(a) => invtest(a, dir),
        Command::Histogram(a) => histogram(a, dir),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    out
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Schema {
                path: path.display().to_string(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn registry(path: Option<&Path>) -> Result<SymmetricRegistry> {
    path.map_or_else(|| Ok(SymmetricRegistry::default()), SymmetricRegistry::load)
}

fn policy(a: &NegativeArgs) -> NegativePolicy {
    NegativePolicy {
        hard: a.hard_negatives,
        inverted: a.inverted_negatives,
    }
}

fn gen_toy(a: &GenToyArgs, dir: &Path) -> Result<()> {
    if a.pairs == 0 {
        return Err(Error::invalid("--pairs must be at least 1"));
    }
    let world = ToyWorld::generate(a.entities, a.properties, a.seed)?;
    world
        .corpus(a.pairs, a.seed)?
        .save(&dir.join("toy.jsonl"))?;
    if a.judgments > 0 {
        let js = generate_toy_judgments(&world, a.judgments, a.seed)?;
        save_judgments(&js, &dir.join("judgments.csv"))?;
    }
    Ok(())
}

fn stats(a: &StatsArgs, dir: &Path) -> Result<()> {
    let d = load_pairs(&a.data)?;
    write_json(&dir.join("stats.json"), &dataset_stats(&d))
}

fn mix(a: &MixArgs, dir: &Path) -> Result<()> {
    let sets = a
        .data
        .iter()
        .map(|p| load_pairs(p))
        .collect::<Result<Vec<_>>>()?;
    mix_equal(&sets, a.seed)?.save(&dir.join("mixed.jsonl"))
}

fn align_chunks(a: &AlignArgs, dir: &Path) -> Result<()> {
    let pages: Vec<Page> = read_jsonl(&a.pages)?;
    let raw: Vec<[String; 3]> = read_jsonl(&a.triples)?;
    let triples = raw
        .into_iter()
        .map(|[s, p, o]| Triple::new(s, p, o))
        .collect::<Result<Vec<_>>>()?;
    let aliases: HashMap<String, Vec<String>> = match &a.aliases {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => HashMap::new(),
    };
    let aligned = build_aligned_chunks(&pages, &triples, &aliases, a.chunk_words)?;
    aligned.dataset.save(&dir.join("aligned.jsonl"))?;
    write_json(&dir.join("alignment_report.json"), &aligned.report)
}

fn build_vocab(a: &BuildVocabArgs, dir: &Path) -> Result<()> {
    let sets = a
        .data
        .iter()
        .map(|p| load_pairs(p))
        .collect::<Result<Vec<_>>>()?;
    let vocab = Vocab::build(sets.iter().flat_map(Dataset::corpus_strings), a.min_count);
    vocab.save(&dir.join("vocab.txt"))
}

fn train_cmd(a: &TrainArgs, dir: &Path) -> Result<()> {
    let data = load_pairs(&a.data)?;
    let vocab = match &a.vocab {
        Some(p) => Vocab::load(p)?,
        None => Vocab::build(data.corpus_strings(), 1),
    };
    let eval = a.eval.as_deref().map(load_pairs).transpose()?;
    if a.eval_every > 0 && eval.is_none() {
        return Err(Error::invalid("--eval-every needs --eval"));
    }
    let config = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        temperature: a.temperature,
        negatives: policy(&a.negatives),
        seed: a.seed,
        dim: a.dim,
        bigram_buckets: a.bigram_buckets,
        eval_every: a.eval_every,
    };
    let reg = registry(a.negatives.registry.as_deref())?;
    let out = train(&config, &data, &vocab, &reg, eval.as_ref())?;
    out.checkpoint.save(&dir.join("checkpoint.bin"))?;
    write_text(&dir.join("metrics.jsonl"), &jsonl(&out.log))
}

fn eval_retrieval(a: &EvalRetrievalArgs, dir: &Path) -> Result<()> {
    let direction: Direction = a.direction.parse()?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let data = load_pairs(&a.data)?;
    let accuracy = eval_top1(&ckpt.model, &data, direction)?;
    let report = RetrievalReport {
        direction: direction.as_str().into(),
        accuracy,
        n: data.len(),
        checkpoint: ckpt.id(),
    };
    write_json(&dir.join("retrieval.json"), &report)
}

#[derive(Serialize)]
struct NegativeRow<'a> {
    id: &'a str,
    kind: &'static str,
    text: &'a str,
    triples: &'a RdfGraph,
}

fn augment(a: &AugmentArgs, dir: &Path) -> Result<()> {
    let data = load_pairs(&a.data)?;
    let reg = registry(a.negatives.registry.as_deref())?;
    let pool = CorruptionPool::from_dataset(&data);
    let policy = policy(&a.negatives);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(7);
    let mut text = String::new();
    for pair in data.pairs() {
        let batch = augment_batch(std::slice::from_ref(pair), policy, &pool, &reg, &mut rng)?;
        // corrupted negatives precede inverted ones within a pair
        let rows = batch
            .negatives
            .iter()
            .enumerate()
            .map(|(i, g)| NegativeRow {
                id: &pair.id,
                kind: if i < policy.hard { "hard" } else { "inverted" },
                text: &pair.text,
                triples: g,
            });
        text.push_str(&jsonl(rows));
    }
    write_text(&dir.join("negatives.jsonl"), &text)?;
    build_inversion_benchmark(&data, &reg).save(&dir.join("inversion_benchmark.jsonl"))
}

fn finetune(a: &FinetuneArgs, dir: &Path) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let judgments = load_judgments(&a.judgments)?;
    let config = FinetuneConfig {
        criterion: a.criterion.clone(),
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        head_learning_rate: a.head_learning_rate,
        seed: a.seed,
        freeze_encoder: a.freeze_encoder,
    };
    let tuned = match a.mode.as_str() {
        "bi" => finetune_bi(&ckpt.model, &judgments, &config)?,
        "cross" => {
            let head = ckpt.head.clone().unwrap_or_else(|| {
                CrossHead::warm_start(ckpt.model.params.dim(), a.head_gain, a.head_bias)
            });
            finetune_cross(&ckpt.model, &head, &judgments, &config)?
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown mode `{other}` (expected bi or cross)"
            )))
        }
    };
    tuned.save(&dir.join("checkpoint.bin"))?;
    let log = tuned
        .meta
        .loss_history
        .iter()
        .enumerate()
        .map(|(epoch, mse)| json!({ "epoch": epoch, "mse": mse }));
    write_text(&dir.join("finetune_log.jsonl"), &jsonl(log))
}

/// Checkpoints behind a scorer, kept alive for the scorer's borrow.
struct Loaded {
    primary: Checkpoint,
    cross: Option<Checkpoint>,
}

impl Loaded {
    fn open(a: &ScorerArgs) -> Result<Self> {
        let primary = load_checkpoint(&a.checkpoint)?;
        let cross = a
            .cross_checkpoint
            .as_deref()
            .map(load_checkpoint)
            .transpose()?;
        if let Some(c) = &cross {
            if c.head.is_none() {
                return Err(Error::invalid(format!(
                    "{} has no cross head",
                    a.cross_checkpoint
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default()
                )));
            }
        }
        Ok(Loaded { primary, cross })
    }

    fn kind(&self) -> &'static str {
        match (&self.cross, &self.primary.head) {
            (Some(_), _) => "ensemble",
            (None, Some(_)) => "cross",
            (None, None) => "bi",
        }
    }

    fn scorer(&self) -> Result<Box<dyn Scorer + '_>> {
        Ok(match (&self.cross, &self.primary.head) {
            (Some(c), _) => Box::new(Eredat::new(
                &self.primary.model,
                &c.model,
                c.head.as_ref().expect("checked in open"),
            )?),
            (None, Some(head)) => {
                head.validate(self.primary.model.params.dim())?;
                Box::new(CrossScorer {
                    model: &self.primary.model,
                    head,
                })
            }
            (None, None) => Box::new(BiScorer(&self.primary.model)),
        })
    }

    fn ids(&self) -> serde_json::Value {
        json!({
            "scorer": self.kind(),
            "checkpoint": self.primary.id(),
            "cross_checkpoint": self.cross.as_ref().map(Checkpoint::id),
        })
    }
}

fn score(a: &ScoreArgs, dir: &Path) -> Result<()> {
    let loaded = Loaded::open(&a.scorer)?;
    let scorer = loaded.scorer()?;
    let items: Vec<(String, String, RdfGraph)> = match (&a.data, &a.judgments) {
        (Some(p), None) => load_pairs(p)?
            .into_pairs()
            .into_iter()
            .map(|p| (p.id, p.text, p.graph))
            .collect(),
        (None, Some(p)) => load_judgments(p)?
            .into_iter()
            .map(|j| (j.id, j.candidate_text, j.graph))
            .collect(),
        _ => return Err(Error::invalid("give exactly one of --data or --judgments")),
    };
    let rows = items
        .iter()
        .map(|(id, text, graph)| Ok(json!({ "id": id, "score": scorer.score(text, graph)? })))
        .collect::<Result<Vec<_>>>()?;
    write_text(&dir.join("scores.jsonl"), &jsonl(rows))
}

#[derive(serde::Deserialize)]
struct ScoreRow {
    id: String,
    score: f64,
}

fn correlate_cmd(a: &CorrelateArgs, dir: &Path) -> Result<()> {
    let rows: Vec<ScoreRow> = read_jsonl(&a.scores)?;
    let mut scores = BTreeMap::new();
    for r in rows {
        if scores.insert(r.id.clone(), r.score).is_some() {
            return Err(Error::invalid(format!("duplicate score for id {:?}", r.id)));
        }
    }
    let judgments = load_judgments(&a.judgments)?;
    let criteria: Vec<String> = if a.criteria.is_empty() {
        let all: BTreeSet<&String> = judgments
            .iter()
            .flat_map(|j: &HumanJudgment| j.ratings.keys())
            .collect();
        all.into_iter().cloned().collect()
    } else {
        a.criteria.clone()
    };
    let report = correlate(&scores, &judgments, &criteria, a.by_size)?;
    write_json(&dir.join("correlation.json"), &report)
}

fn invtest(a: &InvtestArgs, dir: &Path) -> Result<()> {
    let loaded = Loaded::open(&a.scorer)?;
    let scorer = loaded.scorer()?;
    let bench = InversionBenchmark::load(&a.benchmark)?;
    let report = inversion_gap_eval(scorer.as_ref(), &bench)?;
    let mut value = loaded.ids();
    let fields = serde_json::to_value(&report).expect("report serializes");
    if let (Some(dst), serde_json::Value::Object(src)) = (value.as_object_mut(), fields) {
        dst.extend(src);
    }
    write_json(&dir.join("invtest.json"), &value)
}

fn histogram(a: &HistogramArgs, dir: &Path) -> Result<()> {
    let loaded = Loaded::open(&a.scorer)?;
    let scorer = loaded.scorer()?;
    let data = load_pairs(&a.data)?;
    let true_hist = similarity_histogram(scorer.as_ref(), &data, a.bins)?;
    let shuffled = similarity_histogram(scorer.as_ref(), &shuffled_pairs(&data, a.seed)?, a.bins)?;
    write_text(&dir.join("histogram.csv"), &true_hist.to_csv())?;
    write_text(&dir.join("histogram_shuffled.csv"), &shuffled.to_csv())
}
