use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{percentile, MetricError};

pub const DEFAULT_RESAMPLES: usize = 2000;
pub const MIN_RESAMPLES: usize = 100;

/// Sample mean with a 95% percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCi {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Resamples `values` with replacement `resamples` times and takes the
/// 2.5th/97.5th percentiles of the resampled means.
///
/// Replicate `b` draws from a ChaCha stream keyed by `(seed, b)`, so the
/// result does not depend on evaluation order. The interval is widened to
/// contain the sample mean if resampling alone would miss it.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> Result<BootstrapCi, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptySample);
    }
    if resamples < MIN_RESAMPLES {
        return Err(MetricError::Resamples(resamples));
    }
    let n = values.len();
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let mut means: Vec<f64> = (0..resamples)
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            compensated_sum((0..n).map(|_| values[rng.gen_range(0..n)])) / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let low = percentile(&means, 2.5).min(mean);
    let high = percentile(&means, 97.5).max(mean);
    Ok(BootstrapCi { mean, low, high })
}

/// Neumaier summation; exact for repeated values where naive summation drifts.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample() {
        let ci = bootstrap_ci(&[0.8; 10], 2000, 1).unwrap();
        assert_eq!((ci.mean, ci.low, ci.high), (0.8, 0.8, 0.8));
    }

    #[test]
    fn seeded() {
        let v: Vec<f64> = (0..20).map(|i| f64::from(i).sin()).collect();
        assert_eq!(bootstrap_ci(&v, 500, 9).unwrap(), bootstrap_ci(&v, 500, 9).unwrap());
        assert_ne!(bootstrap_ci(&v, 500, 9).unwrap(), bootstrap_ci(&v, 500, 10).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(bootstrap_ci(&[], 1000, 0), Err(MetricError::EmptySample)));
        assert!(matches!(bootstrap_ci(&[1.0], 10, 0), Err(MetricError::Resamples(10))));
    }
}
