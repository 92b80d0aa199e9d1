//! Contrastive pretraining: loss, training loop, checkpoints and embedding extraction.

pub mod checkpoint;
pub mod embed;
pub mod loss;
pub mod train;

pub use embed::{embed_dataset, embed_images, load_images};
pub use loss::{cosine_similarity, nt_xent_loss};
pub use train::{
    epoch_batches, epoch_order, pretrain, subset_size, train_step, PretrainConfig, PretrainHooks, StepRecord,
    TrainState,
};
