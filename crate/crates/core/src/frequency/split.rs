//! High/low spectral disentanglement.
//!
//! On the unshifted DFT grid, index `N/2` along an axis is the Nyquist bin,
//! so the central block `[N(1−θ)/2, N(1+θ)/2)` along x and y holds the
//! highest in-plane frequencies. The high part keeps that block (every z
//! bin) and zeroes the rest; the low part is the complement. Both are
//! returned to image space, and because the two masks partition the
//! spectrum, `high + low` reproduces the input up to rounding.

use num_complex::Complex64;

use super::fft::{fft3, ifft3_real, Spectrum};
use super::FrequencyError;

/// Largest imaginary residue tolerated when returning to image space.
pub const IMAG_TOLERANCE: f64 = 1e-9;

/// Bounds `[start, end)` of the high-frequency block along one axis:
/// `start = floor(N(1−θ)/2)`, `end = start + round(Nθ)`.
pub fn mask_bounds(extent: usize, theta: f64) -> Result<(usize, usize), FrequencyError> {
    check_theta(theta)?;
    if extent < 2 {
        return Err(FrequencyError::ExtentTooSmall { extent });
    }
    let n = extent as f64;
    let start = (n * (1.0 - theta) / 2.0).floor() as usize;
    let len = (n * theta).round() as usize;
    let end = (start + len).min(extent);
    // a block that rounds to nothing still keeps one bin
    let end = end.max(start + 1);
    Ok((start, end))
}

pub(crate) fn check_theta(theta: f64) -> Result<(), FrequencyError> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(FrequencyError::Theta(theta))
    }
}

/// Image-space high and low parts of a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqPair {
    pub extents: [usize; 3],
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub theta: f64,
    /// Largest imaginary magnitude discarded by the inverse transforms.
    pub imag_residue: f64,
}

impl FreqPair {
    /// Whether both masked spectra were Hermitian up to round-off, so
    /// nothing but numerical noise was discarded.
    pub fn is_real(&self) -> bool {
        self.imag_residue < IMAG_TOLERANCE * (1.0 + max_abs(&self.high).max(max_abs(&self.low)))
    }
}

/// Spectra of the two parts; their nonzero bins are disjoint.
#[derive(Debug, Clone)]
pub struct SplitSpectra {
    pub high: Spectrum,
    pub low: Spectrum,
}

/// Splits `spectrum` into the masked high block and its complement.
pub fn split_spectrum(spectrum: &Spectrum, theta: f64) -> Result<SplitSpectra, FrequencyError> {
    let [nx, ny, nz] = spectrum.extents();
    let (x0, x1) = mask_bounds(nx, theta)?;
    let (y0, y1) = mask_bounds(ny, theta)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut high = spectrum.clone();
    let mut low = spectrum.clone();
    for x in 0..nx {
        for y in 0..ny {
            let inside = (x0..x1).contains(&x) && (y0..y1).contains(&y);
            let base = (x * ny + y) * nz;
            let target = if inside { &mut low } else { &mut high };
            target.bins_mut()[base..base + nz].fill(zero);
        }
    }
    Ok(SplitSpectra { high, low })
}

/// High/low decomposition of a real row-major volume.
///
/// The block from [`mask_bounds`] is generally not closed under `k → N − k`
/// (for even extents the lower edge bin is kept and its mirror is not), so
/// the inverse transforms can carry a genuine imaginary part. The real part
/// is kept and the discarded magnitude is reported in
/// [`FreqPair::imag_residue`]. Taking real parts is linear, so
/// `high + low` still reproduces the input.
pub fn disentangle(extents: [usize; 3], data: &[f64], theta: f64) -> Result<FreqPair, FrequencyError> {
    check_theta(theta)?;
    let spectrum = fft3(extents, data)?;
    let parts = split_spectrum(&spectrum, theta)?;
    let (high, r_high) = ifft3_real(&parts.high);
    let (low, r_low) = ifft3_real(&parts.low);
    Ok(FreqPair {
        extents,
        high,
        low,
        theta,
        imag_residue: r_high.max(r_low),
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
