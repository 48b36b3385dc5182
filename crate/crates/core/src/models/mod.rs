//! The 3D U-Net backbone and the frequency-disentangled topologies built
//! around it.

mod checkpoint;
mod fusion;
mod params;
mod unet;

pub use checkpoint::Checkpoint;
pub use fusion::{
    probabilities_to_mask, ForwardTrace, FusionConfig, FusionMode, ModelInput, SegmentationModel,
};
pub use params::{Bindings, ParamId, ParamStore};
pub use unet::{ConvLayer, UNet, UNetConfig, LEAKY_SLOPE};

use crate::data::DataError;
use crate::frequency::FrequencyError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("axis {axis}: extent {extent} is not a multiple of {multiple} (2^depth)")]
    NotDivisible {
        axis: usize,
        extent: usize,
        multiple: usize,
    },
    #[error("U-Net expects {expected} input channels, got {found}")]
    InChannels { expected: usize, found: usize },
    #[error("batch volume extents {found:?} differ from {expected:?}")]
    BatchExtents { expected: [usize; 3], found: [usize; 3] },
    #[error("model input lacks the {0} part")]
    MissingInput(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint has {found} parameters, model has {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("checkpoint parameter `{name}` does not match model parameter `{expected}`")]
    ParamMismatch { name: String, expected: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error(transparent)]
    Data(#[from] DataError),
}
