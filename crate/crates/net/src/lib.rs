//! A compact 3D U-net trained on one volume at a time.
//!
//! Two heads share everything but the last 1x1x1 convolution: `Pwc` produces a
//! two-class softmax, `Pwr` a single linear channel regressing a signed
//! distance. Forward and backward passes are written out by hand and run
//! single-threaded, so a fixed seed reproduces training bit for bit.

mod denormal;
pub mod gradcheck;
mod io;
mod layers;
mod loss;
mod net;
mod optim;
mod predict;
mod tensor;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use io::{read_params, write_params, PARAMS_MAGIC};
pub use layers::{conv3d_forward, ConvShape};
pub use loss::{cross_entropy, weighted_mse, MseNormalization};
pub use net::{backward, forward, forward_logits, forward_train, Head, NetSpec, Params, Tape};
pub use optim::{Optimizer, OptimizerKind};
pub use predict::{predict, upsample_output};
pub use tensor::{Real, Tensor4};
pub use train::{train, train_with_progress, LossKind, TrainCase, TrainConfig, TrainOutcome, TrainTarget};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss in epoch {epoch} on case {case}")]
    NonFinite { epoch: usize, case: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Volume(#[from] sdfseg_core::VolumeError),
    #[error(transparent)]
    Resample(#[from] sdfseg_core::resample::ResampleError),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;
