//! Convolutional network with a random structure.
//!
//! A network is a stack of 1 to 5 stages `conv (valid) -> [batch norm] ->
//! ReLU -> 2x2 max-pool`, followed by flatten, dropout and a dense layer to
//! the three classes. All arithmetic is `f64`. Training is plain mini-batch
//! SGD on the mean softmax cross-entropy.

mod gradcheck;
mod layers;
mod network;
mod tensor;
mod train;

use thiserror::Error;

pub use gradcheck::{gradient_check, GradCheckReport, ABS_FALLBACK_BELOW, ABS_TOLERANCE, REL_TOLERANCE};
pub use layers::{
    apply_mask, batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    dropout_backward, dropout_forward, maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, softmax,
    softmax_cross_entropy, BatchNormCache, BatchNormParams, ConvKernel, DenseParams, Mode, BN_EPS, BN_MOMENTUM,
};
pub use network::{build_network, nn_predict, ConvStage, DropoutSource, Layer, Network, NetworkSpec, Tape};
pub use tensor::Tensor;
pub use train::{train_network, EpochStats, LabeledImage, TrainConfig, TrainTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("kernel {kernel} larger than {rows}x{cols} input")]
    KernelTooLarge { kernel: usize, rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("batch of {0} is too small for batch-norm training")]
    BatchTooSmall(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
