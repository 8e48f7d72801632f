//! Encoder-decoder segmentation network built from HPC blocks.
//!
//! Input features are lifted to `base_channels` by a pointwise linear map.
//! Level 0 runs on the input cloud; every deeper level is a voxel-grid
//! subsample of the previous one with the cell doubled, and its first
//! convolution gathers from the finer level. Query radius and channel width
//! double per level. The decoder walks back up with nearest-neighbor
//! upsampling and skip concatenation.

mod config;
mod loss;
mod model;
mod pass;
mod sample;
mod train;

pub use config::{NetworkConfig, TrainConfig};
pub use loss::{cross_entropy, softmax_row};
pub use model::{HpcNetwork, Linear, TensorInfo, TensorKind};
pub use pass::Forward;
pub use sample::{split_tiles, Sample};
pub use train::{
    clip_gradients, evaluate, learning_rate, predict, train, train_with, ConfusionMatrix, EpochMetrics, Metrics, Sgd,
    TrainState,
};
