//! Contrastive training of the shared encoder and checkpoint I/O.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use loss::{
    batch_gradient, batch_loss, contrastive_loss, loss_from_similarities, Batch, ContrastiveLoss,
};
pub use train::{train, train_model, EpochRecord, TrainConfig, TrainOutput};
