//! Spectral tools: 3D FFT, the high/low split, and radial band energies.

mod bands;
mod fft;
mod split;

pub use bands::{band_energy, band_index, radial_frequency, spectrum_band_energy};
pub use fft::{fft3, ifft3, ifft3_real, Spectrum};
pub use split::{disentangle, mask_bounds, split_spectrum, FreqPair, SplitSpectra, IMAG_TOLERANCE};

/// Default high-block fraction per masked axis.
pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum FrequencyError {
    #[error("cannot transform an empty volume")]
    Empty,
    #[error("expected {expected} bins, got {found}")]
    Length { expected: usize, found: usize },
    #[error("theta must lie in (0, 1), got {0}")]
    Theta(f64),
    #[error("extent {extent} is too small to split (need at least 2)")]
    ExtentTooSmall { extent: usize },
    #[error("need at least 2 bands, got {0}")]
    Bands(usize),
    }
