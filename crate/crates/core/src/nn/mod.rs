//! Feed-forward building blocks expressed over the autodiff tape.
//!
//! Every layer has two faces: a plain numeric forward pass on [`Tensor`]s
//! for inference and oracle tests, and an `*_on` variant that appends the
//! same computation to a [`TapeBuilder`](crate::autodiff::TapeBuilder) so
//! training can differentiate through it. The two are checked against each
//! other in the tests.

mod init;
mod layers;
mod loss;
mod network;
mod train;

pub use init::{init_weights, InitScheme};
pub use layers::{
    batch_norm_layer, conv2d, conv2d_on, dense_forward, dense_on, dropout_mask, max_pool,
    max_pool_on, softmax, softmax_on, Activation, BatchNormLayer, Conv2DLayer, DenseLayer,
};
pub use loss::{loss, softmax_cross_entropy_on, LossKind, LossSpec};
pub use network::{Layer, LossTape, Network};
pub use train::{fit, FitConfig, FitLog};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("convolution output extent would be non-positive")]
    EmptyConvOutput,
    #[error("non-finite input to softmax")]
    NonFiniteSoftmax,
    #[error("cross-entropy needs strictly positive predictions")]
    LogOfZero,
    #[error("dropout rate must lie in [0, 1)")]
    BadDropoutRate,
    #[error(transparent)]
    Ad(#[from] crate::autodiff::AdError),
    #[error(transparent)]
    Optim(#[from] crate::optim::OptimError),
}

pub type NnResult<T> = Result<T, NnError>;
