//! Minimal feed-forward training stack: synthetic blob datasets, optional
//! IDX-format image ingestion, a two-hidden-layer MLP with hand-written
//! backprop, seeded minibatch training, and the frozen-checkpoint variance
//! probe that compares AdaBelief and MVN-Grad one-step updates on real
//! minibatch gradients.

mod data;
mod model;
mod train;

pub use data::{load_mnist_idx, make_blobs, DataSource, Dataset};
pub use model::MlpModel;
pub use train::{
    epoch_permutation, train, vgap_mlp_checkpoint, MlpVGapResult, TrainOutcome, TrainRecord,
};
