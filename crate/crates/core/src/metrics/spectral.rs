use super::MetricError;
use crate::data::{Mask, Volume};
use crate::frequency::{band_index, fft3};

const EPS: f64 = 1e-8;

/// Relative spectral error per radial band between a probability map and a
/// binary target:
///
/// ```text
/// e_b = ||F(pred) − F(target)||_b / (||F(target)||_b + ε)
/// ```
///
/// where `||·||_b` is the L2 norm over the bins of shell `b`. Tracked over
/// epochs, it shows which frequency bands the model fits first.
pub fn frequency_error_spectrum(pred: &Volume, target: &Mask, n_bands: usize) -> Result<Vec<f64>, MetricError> {
    if pred.extents() != target.extents() {
        return Err(MetricError::Extents {
            left: pred.extents(),
            right: target.extents(),
        });
    }
    let ext = pred.extents();
    let t: Vec<f64> = target.labels().iter().map(|&l| f64::from(u8::from(l != 0))).collect();
    let fp = fft3(ext, pred.data())?;
    let ft = fft3(ext, &t)?;
    let bands = band_index(ext, n_bands)?;
    let mut diff = vec![0.0; n_bands];
    let mut norm = vec![0.0; n_bands];
    for ((p, t), &b) in fp.bins().iter().zip(ft.bins()).zip(&bands) {
        diff[b] += (p - t).norm_sqr();
        norm[b] += t.norm_sqr();
    }
    Ok(diff
        .iter()
        .zip(&norm)
        .map(|(d, n)| d.sqrt() / (n.sqrt() + EPS))
        .collect())
}

/// First epoch (1-based) at which each band's error drops below
/// `threshold`; `None` if it never does.
pub fn first_epoch_below(trace: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let bands = trace.first().map_or(0, Vec::len);
    (0..bands)
        .map(|b| trace.iter().position(|e| e[b] < threshold).map(|i| i + 1))
        .collect()
}

/// Fraction of adjacent band pairs whose crossing epochs are non-decreasing
/// with band index. A band that never crosses counts as crossing after every
/// band that does.
pub fn ordered_pair_fraction(crossings: &[Option<usize>]) -> f64 {
    if crossings.len() < 2 {
        return 1.0;
    }
    let key = |c: Option<usize>| c.unwrap_or(usize::MAX);
    let ok = crossings
        .windows(2)
        .filter(|w| key(w[0]) <= key(w[1]))
        .count();
    ok as f64 / (crossings.len() - 1) as f64
}
