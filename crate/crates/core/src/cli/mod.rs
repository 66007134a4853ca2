//! The `kbtext` command line.
//!
//! Every subcommand writes its artifacts under `--out DIR` together with a
//! `run.json` holding the fully resolved arguments. Exit status is 0 on
//! success, 1 for invalid input or usage, and 2 for filesystem failures.
//!
//! `--config FILE` names a TOML file whose keys are flag names. Top-level
//! keys apply to every subcommand and a `[subcommand]` table applies to that
//! subcommand only. Flags given on the command line win over the file.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "kbtext",
    version,
    about = "Aligned graph/text embeddings and a referenceless graph-to-text metric"
)]
pub struct Cli {
    /// TOML file of default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel embedding (0 = all cores). Results do not
    /// depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    #[serde(skip)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a templated toy corpus (and optionally rated candidates).
    GenToy(GenToyArgs),
    /// Pair, property and entity counts of a dataset.
    Stats(StatsArgs),
    /// Equal-size random mixture of several datasets.
    Mix(MixArgs),
    /// Align KB triples to fixed-size passages of entity pages.
    AlignChunks(AlignArgs),
    /// Build a vocabulary from one or more datasets.
    BuildVocab(BuildVocabArgs),
    /// Contrastive training of the shared encoder.
    Train(TrainArgs),
    /// Top-1 retrieval accuracy of a checkpoint.
    EvalRetrieval(EvalRetrievalArgs),
    /// Write corrupted/inverted negatives and the inversion benchmark.
    Augment(AugmentArgs),
    /// Fine-tune a bi- or cross-encoder on human judgments.
    Finetune(FinetuneArgs),
    /// Score (text, graph) pairs or judged candidates.
    Score(ScoreArgs),
    /// Pearson correlation of scores with human judgments.
    Correlate(CorrelateArgs),
    /// Inversion-gap evaluation on an inversion benchmark.
    Invtest(InvtestArgs),
    /// Score histograms for true and shuffled pairs.
    Histogram(HistogramArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenToy(_) => "gen-toy",
            Command::Stats(_) => "stats",
            Command::Mix(_) => "mix",
            Command::AlignChunks(_) => "align-chunks",
            Command::BuildVocab(_) => "build-vocab",
            Command::Train(_) => "train",
            Command::EvalRetrieval(_) => "eval-retrieval",
            Command::Augment(_) => "augment",
            Command::Finetune(_) => "finetune",
            Command::Score(_) => "score",
            Command::Correlate(_) => "correlate",
            Command::Invtest(_) => "invtest",
            Command::Histogram(_) => "histogram",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenToyArgs {
    #[arg(long, default_value_t = 60)]
    pub entities: usize,
    #[arg(long, default_value_t = 8)]
    pub properties: usize,
    #[arg(long, default_value_t = 500)]
    pub pairs: usize,
    /// Also write this many rated candidates to judgments.csv.
    #[arg(long, default_value_t = 0)]
    pub judgments: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Pairs file (JSONL).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct MixArgs {
    /// Pairs files to mix; give the flag once per file.
    #[arg(long, value_name = "FILE", required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AlignArgs {
    /// JSONL of `{"entity": .., "text": ..}` pages.
    #[arg(long, value_name = "FILE")]
    pub pages: PathBuf,
    /// JSONL of `[subject, predicate, object]` arrays.
    #[arg(long, value_name = "FILE")]
    pub triples: PathBuf,
    /// JSON object mapping an object label to its aliases.
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub chunk_words: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildVocabArgs {
    #[arg(long, value_name = "FILE", required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct NegativeArgs {
    /// Corrupted-graph negatives per positive.
    #[arg(long, default_value_t = 1)]
    pub hard_negatives: usize,
    /// Inverted-graph negatives per positive.
    #[arg(long, default_value_t = 0)]
    pub inverted_negatives: usize,
    /// Symmetric predicates, one per line (built-in list if omitted).
    #[arg(long, value_name = "FILE")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Vocabulary file; built from --data when omitted.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Held-out pairs for periodic retrieval accuracy.
    #[arg(long, value_name = "FILE")]
    pub eval: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Hashed adjacent-token features (0 = bag of tokens).
    #[arg(long, default_value_t = 0)]
    pub bigram_buckets: usize,
    /// Evaluate on --eval every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub negatives: NegativeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalRetrievalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// graph2text or text2graph.
    #[arg(long, default_value = "graph2text")]
    pub direction: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub negatives: NegativeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Judgments CSV.
    #[arg(long, value_name = "FILE")]
    pub judgments: PathBuf,
    /// bi or cross.
    #[arg(long, default_value = "bi")]
    pub mode: String,
    #[arg(long, default_value = "semantic_adequacy")]
    pub criterion: String,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2.0)]
    pub head_learning_rate: f64,
    /// Cross mode: train only the head.
    #[arg(long)]
    pub freeze_encoder: bool,
    /// Cross mode, new head: initial weight on the text/graph cosine.
    #[arg(long, default_value_t = 4.0)]
    pub head_gain: f64,
    /// Cross mode, new head: initial logit offset.
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub head_bias: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScorerArgs {
    /// Checkpoint to score with: cross-encoder if it carries a head,
    /// bi-encoder otherwise.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Cross-encoder checkpoint; with it, --checkpoint is the bi-encoder
    /// and scores are the ensemble mean.
    #[arg(long, value_name = "FILE")]
    pub cross_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArgs,
    /// Pairs file (JSONL).
    #[arg(long, value_name = "FILE", conflicts_with = "judgments")]
    pub data: Option<PathBuf>,
    /// Judgments CSV; scores each candidate against its graph.
    #[arg(long, value_name = "FILE")]
    pub judgments: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrelateArgs {
    /// scores.jsonl written by `score`.
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub judgments: PathBuf,
    /// Criteria to report, comma separated (default: all rated criteria).
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<String>,
    /// Also break correlations down by graph size.
    #[arg(long)]
    pub by_size: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct InvtestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArgs,
    /// Inversion benchmark JSONL written by `augment`.
    #[arg(long, value_name = "FILE")]
    pub benchmark: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct HistogramArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Seed for the shuffled-pairs baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutArgs,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let expanded = match config::expand(raw) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(expanded) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match commands::execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if e.is_io() {
        2
    } else {
        1
    }
}
