use super::fft::{fft3, Spectrum};
use super::FrequencyError;

/// Normalized radial frequency of every bin, in `[0, 1]`.
///
/// Per axis the signed frequency of index `k` is `k` below `N/2` and
/// `k − N` otherwise, divided by `N/2`; the radius is the Euclidean norm of
/// those three values over `√3`. DC maps to 0 and the all-Nyquist corner
/// to 1.
pub fn radial_frequency(extents: [usize; 3]) -> Vec<f64> {
    let axis = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| {
                if n == 1 {
                    return 0.0;
                }
                let f = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
                f / (n as f64 / 2.0)
            })
            .collect()
    };
    let (fx, fy, fz) = (axis(extents[0]), axis(extents[1]), axis(extents[2]));
    let mut out = Vec::with_capacity(extents.iter().product());
    for x in &fx {
        for y in &fy {
            for z in &fz {
                out.push(((x * x + y * y + z * z) / 3.0).sqrt().min(1.0));
            }
        }
    }
    out
}

/// Shell index of every bin for `n_bands` equal-width radial shells.
pub fn band_index(extents: [usize; 3], n_bands: usize) -> Result<Vec<usize>, FrequencyError> {
    if n_bands < 2 {
        return Err(FrequencyError::Bands(n_bands));
    }
    Ok(radial_frequency(extents)
        .into_iter()
        .map(|r| ((r * n_bands as f64) as usize).min(n_bands - 1))
        .collect())
}

/// `|F|²` summed per radial shell. The shells partition the spectrum, so
/// the bands sum to the total spectral energy.
pub fn spectrum_band_energy(spectrum: &Spectrum, n_bands: usize) -> Result<Vec<f64>, FrequencyError> {
    let bands = band_index(spectrum.extents(), n_bands)?;
    let mut energy = vec![0.0; n_bands];
    for (c, &b) in spectrum.bins().iter().zip(&bands) {
        energy[b] += c.norm_sqr();
    }
    Ok(energy)
}

pub fn band_energy(extents: [usize; 3], data: &[f64], n_bands: usize) -> Result<Vec<f64>, FrequencyError> {
    spectrum_band_energy(&fft3(extents, data)?, n_bands)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_energy_in_band_zero() {
        let e = band_energy([4, 4, 4], &[2.0; 64], 4).unwrap();
        assert!(e[0] > 0.0);
        assert!(e[1..].iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn needs_two_bands() {
        assert!(band_energy([2, 2, 2], &[0.0; 8], 1).is_err());
    }

    #[test]
    fn nyquist_corner_is_last_band() {
        let bands = band_index([4, 4, 4], 4).unwrap();
        assert_eq!(bands[0], 0);
        assert_eq!(bands[(2 * 4 + 2) * 4 + 2], 3);
    }
}
