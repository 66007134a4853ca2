//! Referenceless graph-to-text scoring: bi- and cross-encoder scores, their
//! ensemble, fine-tuning on human ratings, and the analyses used to
//! validate a metric against those ratings.

mod analysis;
mod finetune;
mod judgment;
mod score;

pub use analysis::{
    correlate, inversion_gap_eval, pearson, shuffled_pairs, similarity_histogram,
    CorrelationReport, CriterionCorrelation, Histogram, InversionGapReport,
};
pub use finetune::{
    bi_mse, bi_mse_gradient, cross_mse, cross_mse_gradient, finetune_bi, finetune_cross, targets,
    CrossGradient, FinetuneConfig, Target,
};
pub use judgment::{
    generate_toy_judgments, judgments_to_csv, load_judgments, parse_judgments, save_judgments,
    HumanJudgment, RatingScale, CRITERIA_2017, CRITERIA_2020,
};
pub use score::{
    bi_score, cross_score, eredat_score, sigmoid, BiScorer, CrossHead, CrossScorer, Eredat, Scorer,
};
