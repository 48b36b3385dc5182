//! Separable 3D DFT: radix-2 Cooley–Tukey along power-of-two axes, direct
//! summation along any other axis.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::FrequencyError;

/// Unshifted 3D spectrum; DC sits at index `(0, 0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    extents: [usize; 3],
    bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(extents: [usize; 3], bins: Vec<Complex64>) -> Result<Self, FrequencyError> {
        if extents.contains(&0) {
            return Err(FrequencyError::Empty);
        }
        let n = extents.iter().product::<usize>();
        if bins.len() != n {
            return Err(FrequencyError::Length {
                expected: n,
                found: bins.len(),
            });
        }
        Ok(Self { extents, bins })
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.extents[1] + y) * self.extents[2] + z
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Forward, unnormalized DFT of a row-major real volume.
pub fn fft3(extents: [usize; 3], data: &[f64]) -> Result<Spectrum, FrequencyError> {
    let bins = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut s = Spectrum::new(extents, bins)?;
    transform(&mut s, Direction::Forward);
    Ok(s)
}

/// Inverse DFT scaled by `1/N`. Returns complex values; callers decide what
/// to do with the imaginary residue.
pub fn ifft3(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut s = spectrum.clone();
    transform(&mut s, Direction::Inverse);
    let scale = 1.0 / s.bins.len() as f64;
    s.bins.iter().map(|c| c * scale).collect()
}

/// Inverse DFT keeping only real parts, plus the largest discarded
/// imaginary magnitude.
pub fn ifft3_real(spectrum: &Spectrum) -> (Vec<f64>, f64) {
    let c = ifft3(spectrum);
    let residue = c.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    (c.into_iter().map(|v| v.re).collect(), residue)
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Forward,
    Inverse,
}

fn transform(s: &mut Spectrum, dir: Direction) {
    let [nx, ny, nz] = s.extents;
    let strides = [ny * nz, nz, 1];
    let mut line = Vec::new();
    let mut scratch = Vec::new();
    for axis in 0..3 {
        let n = s.extents[axis];
        if n == 1 {
            continue;
        }
        let plan = Plan::new(n, dir);
        let stride = strides[axis];
        // every line along `axis` starts at an index with a zero coordinate on that axis
        for start in 0..nx * ny * nz {
            let coord = (start / stride) % n;
            if coord != 0 {
                continue;
            }
            line.clear();
            line.extend((0..n).map(|k| s.bins[start + k * stride]));
            plan.run(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                s.bins[start + k * stride] = *v;
            }
        }
    }
}

struct Plan {
    n: usize,
    twiddles: Vec<Complex64>,
    radix2: bool,
}

impl Plan {
    fn new(n: usize, dir: Direction) -> Self {
        let sign = match dir {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let twiddles = (0..n)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
            .collect();
        Self {
            n,
            twiddles,
            radix2: n.is_power_of_two(),
        }
    }

    fn run(&self, line: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        if self.radix2 {
            self.radix2_in_place(line);
        } else {
            scratch.clear();
            scratch.extend((0..self.n).map(|k| {
                line.iter()
                    .enumerate()
                    .map(|(j, v)| v * self.twiddles[(j * k) % self.n])
                    .sum::<Complex64>()
            }));
            line.copy_from_slice(scratch);
        }
    }

    fn radix2_in_place(&self, a: &mut [Complex64]) {
        let n = self.n;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                a.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = n / len;
            for chunk in a.chunks_exact_mut(len) {
                let (lo, hi) = chunk.split_at_mut(len / 2);
                for (k, (u, v)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = *v * self.twiddles[k * step];
                    *v = *u - t;
                    *u += t;
                }
            }
            len <<= 1;
        }
    }
}
