#![allow(dead_code)]

use std::f64::consts::PI;

use freqseg::data::Mask;
use freqseg::tensor::{NdArray, Tape, Tensor};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_array(shape: &[usize], rng: &mut impl Rng) -> NdArray {
    let n = shape.iter().product();
    NdArray::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds a graph from `inputs` and reduces it to a scalar. Each input slot
/// is registered as a leaf that requires a gradient.
pub type Builder<'a> = dyn Fn(&mut Tape, &[Tensor]) -> Tensor + 'a;

/// Analytic vs central-difference gradients of every input, as
/// `||analytic − numeric|| / max(||analytic||, ||numeric||)` per input.
pub fn gradient_errors(inputs: &[NdArray], build: &Builder, h: f64) -> Vec<f64> {
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|v| tape.leaf(v.clone(), true)).collect();
    let out = build(&mut tape, &leaves);
    tape.backward(out).unwrap();
    let analytic: Vec<NdArray> = leaves
        .iter()
        .map(|&t| tape.grad(t).cloned().unwrap_or_else(|| NdArray::zeros(tape.shape(t))))
        .collect();

    let eval = |vals: &[NdArray]| -> f64 {
        let mut tape = Tape::new();
        let leaves: Vec<Tensor> = vals.iter().map(|v| tape.constant(v.clone())).collect();
        let out = build(&mut tape, &leaves);
        tape.value(out).item().unwrap()
    };

    let mut errors = Vec::new();
    for (slot, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.len()];
        let mut vals = inputs.to_vec();
        for (i, n) in numeric.iter_mut().enumerate() {
            let orig = vals[slot].data()[i];
            vals[slot].data_mut()[i] = orig + h;
            let up = eval(&vals);
            vals[slot].data_mut()[i] = orig - h;
            let down = eval(&vals);
            vals[slot].data_mut()[i] = orig;
            *n = (up - down) / (2.0 * h);
        }
        let diff: f64 = grad
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = grad.norm().max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt());
        errors.push(if scale == 0.0 { 0.0 } else { diff / scale });
    }
    errors
}

/// Reduces a tensor to a scalar with fixed random weights so every output
/// element contributes a distinct gradient.
pub fn weighted_sum(tape: &mut Tape, t: Tensor, seed: u64) -> Tensor {
    let w = random_array(tape.shape(t), &mut rng(seed));
    let c = tape.constant(w);
    let prod = tape.mul(t, c).unwrap();
    tape.sum(prod)
}

/// Direct six-loop 3D cross-correlation, `[B, C, X, Y, Z]` input.
pub fn naive_conv3d(
    input: &NdArray,
    weight: &NdArray,
    bias: &NdArray,
    stride: [usize; 3],
    padding: [usize; 3],
) -> NdArray {
    let s = input.shape();
    let w = weight.shape();
    let (b, ci, ext) = (s[0], s[1], [s[2], s[3], s[4]]);
    let (co, k) = (w[0], [w[2], w[3], w[4]]);
    let out_ext: Vec<usize> = (0..3)
        .map(|a| (ext[a] + 2 * padding[a] - k[a]) / stride[a] + 1)
        .collect();
    let mut out = vec![0.0; b * co * out_ext.iter().product::<usize>()];
    let x = input.data();
    let wd = weight.data();
    let mut idx = 0;
    for n in 0..b {
        for o in 0..co {
            for ox in 0..out_ext[0] {
                for oy in 0..out_ext[1] {
                    for oz in 0..out_ext[2] {
                        let mut acc = bias.data()[o];
                        for c in 0..ci {
                            for kx in 0..k[0] {
                                for ky in 0..k[1] {
                                    for kz in 0..k[2] {
                                        let ix = (ox * stride[0] + kx) as isize - padding[0] as isize;
                                        let iy = (oy * stride[1] + ky) as isize - padding[1] as isize;
                                        let iz = (oz * stride[2] + kz) as isize - padding[2] as isize;
                                        if ix < 0 || iy < 0 || iz < 0 {
                                            continue;
                                        }
                                        let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
                                        if ix >= ext[0] || iy >= ext[1] || iz >= ext[2] {
                                            continue;
                                        }
                                        let xv = x[(((n * ci + c) * ext[0] + ix) * ext[1] + iy) * ext[2] + iz];
                                        let wv = wd[(((o * ci + c) * k[0] + kx) * k[1] + ky) * k[2] + kz];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
    }
    NdArray::new(&[b, co, out_ext[0], out_ext[1], out_ext[2]], out).unwrap()
}

/// O(N²) DFT straight from the definition, row-major `[x][y][z]`.
pub fn naive_dft(ext: [usize; 3], data: &[f64]) -> Vec<Complex64> {
    let [nx, ny, nz] = ext;
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for kx in 0..nx {
        for ky in 0..ny {
            for kz in 0..nz {
                let mut acc = Complex64::new(0.0, 0.0);
                for x in 0..nx {
                    for y in 0..ny {
                        for z in 0..nz {
                            let phase = -2.0
                                * PI
                                * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64 + (kz * z) as f64 / nz as f64);
                            acc += data[(x * ny + y) * nz + z] * Complex64::from_polar(1.0, phase);
                        }
                    }
                }
                out[(kx * ny + ky) * nz + kz] = acc;
            }
        }
    }
    out
}

pub fn random_mask(ext: [usize; 3], p: f64, r: &mut impl Rng) -> Mask {
    let labels = (0..ext.iter().product()).map(|_| u8::from(r.gen_bool(p))).collect();
    Mask::new(ext, labels).unwrap()
}

/// Boundary voxels by definition: foreground with a background
/// face-neighbour or touching the volume edge.
pub fn oracle_surface(m: &Mask) -> Vec<[f64; 3]> {
    let e = m.extents();
    let at = |x: isize, y: isize, z: isize| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= e[0] as isize || y >= e[1] as isize || z >= e[2] as isize {
            return false;
        }
        m.get(x as usize, y as usize, z as usize) != 0
    };
    let mut out = Vec::new();
    for x in 0..e[0] as isize {
        for y in 0..e[1] as isize {
            for z in 0..e[2] as isize {
                if !at(x, y, z) {
                    continue;
                }
                let n = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
                if n.iter().any(|(a, b, c)| !at(x + a, y + b, z + c)) {
                    out.push([x as f64, y as f64, z as f64]);
                }
            }
        }
    }
    out
}

pub fn oracle_p95(mut d: Vec<f64>) -> f64 {
    d.sort_by(f64::total_cmp);
    let pos = 0.95 * (d.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
}

pub fn oracle_hd95(a: &Mask, b: &Mask, s: [f64; 3]) -> f64 {
    let (sa, sb) = (oracle_surface(a), oracle_surface(b));
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> Vec<f64> {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| {
                        let d: [f64; 3] = [0, 1, 2].map(|k| (p[k] - q[k]) * s[k]);
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    oracle_p95(directed(&sa, &sb)).max(oracle_p95(directed(&sb, &sa)))
}
