//! Residual network, CIFAR-10 input pipeline, training loop and checkpoints.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod model;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{AugmentConfig, NetworkConfig, RunConfig, Timing, TrainConfig};
pub use data::{default_cifar_dir, load_cifar, load_test, Cifar, Dataset, Normalization};
pub use model::{BasicBlock, ResNet};
pub use train::{evaluate, train, EpochMetrics, Model, TrainOutcome, Trainer};
