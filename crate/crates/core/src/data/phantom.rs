//! Synthetic segmentation phantoms: small bright ellipsoids on a smooth
//! random background, with optional additive noise.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{linear_index, DataError, Mask, Volume};
use crate::frequency::{fft3, ifft3_real, radial_frequency};

const MAX_PLACEMENT_TRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub extents: [usize; 3],
    /// Normalized radial frequency above which the background is zeroed.
    pub background_cutoff: f64,
    /// Standard deviation of the background field.
    pub background_amplitude: f64,
    pub structures: usize,
    /// Semi-axis range in voxels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Steepness of the intensity profile at the ellipsoid surface.
    pub edge_sharpness: f64,
    /// Mean intensity offset of a structure.
    pub contrast: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            extents: [32, 32, 16],
            background_cutoff: 0.06,
            background_amplitude: 1.0,
            structures: 3,
            radius_min: 2.0,
            radius_max: 4.0,
            edge_sharpness: 8.0,
            contrast: 1.0,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(axis) = self.extents.iter().position(|&n| n < 2) {
            return Err(DataError::Extent {
                axis,
                extent: self.extents[axis],
            });
        }
        let bad = |what: &str| Err(DataError::Phantom(what.to_string()));
        if self.structures == 0 {
            return bad("at least one structure is required");
        }
        if !(self.radius_min >= 1.0 && self.radius_max >= self.radius_min) {
            return bad("radius range must satisfy 1 <= radius_min <= radius_max");
        }
        let smallest = *self.extents.iter().min().expect("three axes") as f64;
        if 2.0 * self.radius_max + 2.0 > smallest {
            return bad("radius_max does not fit inside the volume");
        }
        if !(self.background_cutoff > 0.0 && self.background_cutoff <= 1.0) {
            return bad("background_cutoff must lie in (0, 1]");
        }
        for (name, v) in [
            ("background_amplitude", self.background_amplitude),
            ("edge_sharpness", self.edge_sharpness),
            ("noise_std", self.noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if !self.contrast.is_finite() {
            return bad("contrast must be finite");
        }
        Ok(())
    }

    /// The same spec with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    intensity: f64,
}

impl Ellipsoid {
    fn rho(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn smooth_background(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n: usize = spec.extents.iter().product();
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut s = fft3(spec.extents, &noise).expect("validated extents");
    for (c, r) in s.bins_mut().iter_mut().zip(radial_frequency(spec.extents)) {
        if r > spec.background_cutoff {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    let (mut field, _) = ifft3_real(&s);
    let mean = field.iter().sum::<f64>() / n as f64;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { spec.background_amplitude / var.sqrt() } else { 0.0 };
    field.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    field
}

fn place(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Ellipsoid>, DataError> {
    let mut placed: Vec<Ellipsoid> = Vec::with_capacity(spec.structures);
    for _ in 0..spec.structures {
        let mut ok = None;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let radii = [0, 1, 2].map(|_| rng.gen_range(spec.radius_min..=spec.radius_max));
            let mut center = [0.0; 3];
            for a in 0..3 {
                let lo = radii[a] + 1.0;
                let hi = spec.extents[a] as f64 - 2.0 - radii[a];
                if hi < lo {
                    break;
                }
                center[a] = rng.gen_range(lo..=hi);
            }
            let rmax = radii.iter().cloned().fold(0.0, f64::max);
            let clear = placed.iter().all(|e| {
                let d = (0..3).map(|a| (e.center[a] - center[a]).powi(2)).sum::<f64>().sqrt();
                let other = e.radii.iter().cloned().fold(0.0, f64::max);
                d > rmax + other + 1.0
            });
            let inside = (0..3).all(|a| center[a] - radii[a] >= 1.0 - 1e-9);
            if clear && inside {
                let intensity = spec.contrast * rng.gen_range(0.8..1.2);
                ok = Some(Ellipsoid {
                    center,
                    radii,
                    intensity,
                });
                break;
            }
        }
        placed.push(ok.ok_or_else(|| {
            DataError::Phantom(format!(
                "could not place structure {} after {MAX_PLACEMENT_TRIES} tries",
                placed.len() + 1
            ))
        })?);
    }
    Ok(placed)
}

/// Generates a `(volume, mask)` pair. The mask labels every voxel inside an
/// ellipsoid with 1.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, Mask), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = smooth_background(spec, &mut rng);
    let shapes = place(spec, &mut rng)?;
    let mut labels = vec![0u8; data.len()];
    let ext = spec.extents;
    for x in 0..ext[0] {
        for y in 0..ext[1] {
            for z in 0..ext[2] {
                let i = linear_index(ext, x, y, z);
                let p = [x as f64, y as f64, z as f64];
                for e in &shapes {
                    let rho = e.rho(p);
                    if rho <= 1.0 {
                        labels[i] = 1;
                    }
                    let profile = 1.0 / (1.0 + (-spec.edge_sharpness * (1.0 - rho)).exp());
                    data[i] += e.intensity * profile;
                }
            }
        }
    }
    if spec.noise_std > 0.0 {
        for v in data.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_std * n;
        }
    }
    Ok((Volume::new(ext, data)?, Mask::new(ext, labels)?))
}
