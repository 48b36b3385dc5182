//! Dense arrays, reverse-mode differentiation, and the layers used by the
//! segmentation models.

mod adam;
mod array;
mod conv;
#[cfg(target_arch = "x86_64")]
mod direct;
mod loss;
mod pool;
mod tape;

pub use adam::{Adam, Parameter};
pub use array::NdArray;
pub use conv::{conv3d, conv3d_transpose, ConvParams};
pub use loss::{soft_dice_loss, DICE_EPS};
pub use pool::maxpool3d;
pub use tape::{Tape, Tensor};

use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but {found} were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("zero extent in shape {shape:?}")]
    EmptyExtent { shape: Vec<usize> },
    #[error("{op}: expected rank {expected}, got shape {found:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        found: Vec<usize>,
    },
    #[error("{op}: shapes {left:?} and {right:?} are incompatible")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected {expected} input channels, got {found}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("axis {axis}: padded extent {extent} is smaller than kernel {kernel}")]
    KernelTooLarge { axis: usize, extent: usize, kernel: usize },
    #[error("axis {axis}: kernel extent {kernel} must be odd for same padding")]
    EvenKernel { axis: usize, kernel: usize },
    #[error("{op}: unsupported stride {stride:?}")]
    UnsupportedStride { op: &'static str, stride: [usize; 3] },
    #[error("axis {axis}: extent {extent} is not a multiple of {multiple}")]
    NotDivisible {
        axis: usize,
        extent: usize,
        multiple: usize,
    },
    #[error("channels [{start}, {start}+{count}) out of range for {channels} channels")]
    ChannelRange {
        start: usize,
        count: usize,
        channels: usize,
    },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("parameter `{name}` has no gradient")]
    MissingGradient { name: String },
    #[error("optimizer state tracks {expected} parameters, got {found}")]
    OptimizerState { expected: usize, found: usize },
}

/// Uniform initialization in `±sqrt(6 / fan_in)`.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> NdArray {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    NdArray::new(shape, data).expect("length matches shape")
}
