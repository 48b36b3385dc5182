//! Segmentation metrics, bootstrap intervals, and the spectral error probe.

mod bootstrap;
mod overlap;
mod report;
mod spectral;
mod surface;

pub use bootstrap::{bootstrap_ci, BootstrapCi, DEFAULT_RESAMPLES, MIN_RESAMPLES};
pub use overlap::{dice_coefficient, dice_for_label};
pub use report::{MetricReport, SubjectScore};
pub use spectral::{first_epoch_below, frequency_error_spectrum, ordered_pair_fraction};
pub use surface::{directed_surface_distances, empty_mask_sentinel, hausdorff95, surface_voxels};

use crate::frequency::FrequencyError;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("mask extents {left:?} and {right:?} differ")]
    Extents { left: [usize; 3], right: [usize; 3] },
    #[error("voxel spacing must be positive, got {0:?}")]
    Spacing([f64; 3]),
    #[error("cannot bootstrap an empty sample")]
    EmptySample,
    #[error("need at least 100 bootstrap resamples, got {0}")]
    Resamples(usize),
    #[error("malformed metric record: {0}")]
    Record(String),
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
}

/// Percentile of sorted data with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
