//! Radar detection: CNN inference, the weights file, vote ring and latency
//! bench.
//!
//! The network is described entirely by its weights file. Tensor names are
//! `<layer>.<param>`; layers are grouped into `blockN` stages of
//! convolutions (each optionally followed by batch norm, then ReLU) that end
//! in a max-pool of 2, with an optional non-local block after the pool.
//! Dense layers follow a channels-last flatten, with ReLU between them and a
//! sigmoid on the single output.

mod bench;
mod classify;
mod layers;
mod nlb;
mod vote;
mod weights;

use thiserror::Error;

pub use bench::{bench_latency, linear_fit_r2, LatencyReport, LatencyRow};
pub use classify::{CnnClassifier, MatchedFilterClassifier, WindowClassifier};
pub use layers::{batch_norm, conv1d, dense, maxpool2, relu, sigmoid, BN_EPS};
pub use nlb::{non_local_block, softmax_rows, NlbParams};
pub use vote::{vote_step, DetectionVerdict, VoteState, RING_LEN};
pub use weights::{ArchSpec, LayerKind, ModelWeights, Network, Op, Tensor, WEIGHTS_MAGIC, WEIGHTS_VERSION};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("unsupported weights version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("malformed weights file: {0}")]
    Malformed(String),
    #[error("layer shapes do not compose: {0}")]
    ShapeCompositionError(String),
    #[error("tensor {0} has non-finite values")]
    NonFiniteTensor(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),
    #[error("expected a batch of {expected}, got {got}")]
    BatchSizeMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
