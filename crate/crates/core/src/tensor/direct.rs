//! AVX2/FMA kernels for the 3³, stride 1, padding 1 convolutions that make
//! up almost all of the U-Net's work.
//!
//! With 8–16 channels an im2col GEMM spends as long building columns as it
//! does multiplying, so these kernels read a zero-padded copy of the input
//! directly. Buffers use the layout `[C][X+2][Y+2][Zc+2]` where `Zc` is `Z`
//! rounded up to a multiple of 8; the extra z outputs are computed and
//! dropped.

use std::arch::x86_64::*;

/// Output channels per register block.
const CB: usize = 4;
/// z outputs per register block (two AVX lanes of four).
const ZB: usize = 8;

pub(crate) fn available() -> bool {
    is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma")
}

struct Padded {
    data: Vec<f64>,
    py: usize,
    pz: usize,
    px: usize,
}

fn round_z(nz: usize) -> usize {
    nz.div_ceil(ZB) * ZB
}

/// Copies `channels × ext` into the padded layout.
fn pad(src: &[f64], channels: usize, ext: [usize; 3]) -> Padded {
    let [nx, ny, nz] = ext;
    let (px, py, pz) = (nx + 2, ny + 2, round_z(nz) + 2);
    let mut data = vec![0.0; channels * px * py * pz];
    for c in 0..channels {
        for i in 0..nx {
            for j in 0..ny {
                let s = ((c * nx + i) * ny + j) * nz;
                let d = ((c * px + i + 1) * py + j + 1) * pz + 1;
                data[d..d + nz].copy_from_slice(&src[s..s + nz]);
            }
        }
    }
    Padded { data, py, pz, px }
}

/// `[co][ci][27]` weights regrouped as `[co/CB][ci][27][CB]`, zero-filling
/// the last block. With `flip`, reads `w[ci][co][26 − k]` instead, which
/// turns the kernel into the adjoint of the forward pass.
fn pack(w: &[f64], co: usize, ci: usize, flip: bool) -> Vec<f64> {
    let blocks = co.div_ceil(CB);
    let mut out = vec![0.0; blocks * CB * ci * 27];
    for o in 0..co {
        for c in 0..ci {
            for k in 0..27 {
                let v = if flip { w[(c * co + o) * 27 + 26 - k] } else { w[(o * ci + c) * 27 + k] };
                out[(((o / CB) * ci + c) * 27 + k) * CB + o % CB] = v;
            }
        }
    }
    out
}

/// `out[co] += Σ_{ci,k} w[co][ci][k] · x[ci][v + k − 1]` over one batch item.
/// With `flip` the weights are read as the adjoint (see [`pack`]).
pub(crate) fn correlate(x: &[f64], w: &[f64], ci: usize, co: usize, ext: [usize; 3], flip: bool, out: &mut [f64]) {
    let vox: usize = ext.iter().product();
    assert_eq!(x.len(), ci * vox);
    assert_eq!(w.len(), ci * co * 27);
    assert_eq!(out.len(), co * vox);
    assert!(available());
    let xp = pad(x, ci, ext);
    let wp = pack(w, co, ci, flip);
    // SAFETY: features checked above; every pointer offset below stays inside
    // `xp.data` (padded by one voxel on each side and rounded up in z) or
    // `wp`, by construction of `pad` and `pack`.
    unsafe { correlate_avx(&xp, &wp, ci, co, ext, out) }
}

#[target_feature(enable = "avx2,fma")]
unsafe fn correlate_avx(xp: &Padded, wp: &[f64], ci: usize, co: usize, ext: [usize; 3], out: &mut [f64]) {
    let [nx, ny, nz] = ext;
    let zc = round_z(nz);
    let (px, py, pz) = (xp.px, xp.py, xp.pz);
    let x = xp.data.as_ptr();
    for ob in 0..co.div_ceil(CB) {
        let wb = wp.as_ptr().add(ob * ci * 27 * CB);
        for i in 0..nx {
            for j in 0..ny {
                for z0 in (0..zc).step_by(ZB) {
                    let mut acc = [_mm256_setzero_pd(); 2 * CB];
                    for c in 0..ci {
                        for kx in 0..3 {
                            for ky in 0..3 {
                                let row = x.add(((c * px + i + kx) * py + j + ky) * pz + z0);
                                let wk = wb.add((c * 27 + kx * 9 + ky * 3) * CB);
                                for kz in 0..3 {
                                    let r0 = _mm256_loadu_pd(row.add(kz));
                                    let r1 = _mm256_loadu_pd(row.add(kz + 4));
                                    for o in 0..CB {
                                        let wv = _mm256_broadcast_sd(&*wk.add(kz * CB + o));
                                        acc[2 * o] = _mm256_fmadd_pd(wv, r0, acc[2 * o]);
                                        acc[2 * o + 1] = _mm256_fmadd_pd(wv, r1, acc[2 * o + 1]);
                                    }
                                }
                            }
                        }
                    }
                    let n = ZB.min(nz - z0);
                    for o in 0..CB {
                        let oc = ob * CB + o;
                        if oc >= co {
                            break;
                        }
                        let mut lane = [0.0; ZB];
                        _mm256_storeu_pd(lane.as_mut_ptr(), acc[2 * o]);
                        _mm256_storeu_pd(lane.as_mut_ptr().add(4), acc[2 * o + 1]);
                        let d = ((oc * nx + i) * ny + j) * nz + z0;
                        for (dst, v) in out[d..d + n].iter_mut().zip(&lane) {
                            *dst += v;
                        }
                    }
                }
            }
        }
    }
}

/// `dw[co][ci][k] += Σ_v g[co][v] · x[ci][v + k − 1]` over one batch item.
pub(crate) fn weight_grad(x: &[f64], g: &[f64], ci: usize, co: usize, ext: [usize; 3], dw: &mut [f64]) {
    let vox: usize = ext.iter().product();
    assert_eq!(x.len(), ci * vox);
    assert_eq!(g.len(), co * vox);
    assert_eq!(dw.len(), ci * co * 27);
    assert!(available());
    let xp = pad(x, ci, ext);
    // gradient rows rounded up in z and in channels, zero-filled
    let [nx, ny, nz] = ext;
    let zc = round_z(nz);
    let cop = co.div_ceil(CB) * CB;
    let mut gp = vec![0.0; cop * nx * ny * zc];
    for o in 0..co {
        for l in 0..nx * ny {
            let s = (o * nx * ny + l) * nz;
            let d = (o * nx * ny + l) * zc;
            gp[d..d + nz].copy_from_slice(&g[s..s + nz]);
        }
    }
    // SAFETY: as in `correlate`; `gp` is padded to whole channel blocks.
    unsafe { weight_grad_avx(&xp, &gp, ci, co, ext, dw) }
}

#[target_feature(enable = "avx2,fma")]
unsafe fn weight_grad_avx(xp: &Padded, gp: &[f64], ci: usize, co: usize, ext: [usize; 3], dw: &mut [f64]) {
    let [nx, ny, nz] = ext;
    let zc = round_z(nz);
    let (px, py, pz) = (xp.px, xp.py, xp.pz);
    let x = xp.data.as_ptr();
    let plane = nx * ny * zc;
    for ob in 0..co.div_ceil(CB) {
        let gb = gp.as_ptr().add(ob * CB * plane);
        for c in 0..ci {
            for kx in 0..3 {
                for ky in 0..3 {
                    let mut acc = [_mm256_setzero_pd(); 3 * CB];
                    for i in 0..nx {
                        for j in 0..ny {
                            let row = x.add(((c * px + i + kx) * py + j + ky) * pz);
                            let grow = gb.add((i * ny + j) * zc);
                            for z0 in (0..zc).step_by(4) {
                                let mut gv = [_mm256_setzero_pd(); CB];
                                for (o, v) in gv.iter_mut().enumerate() {
                                    *v = _mm256_loadu_pd(grow.add(o * plane + z0));
                                }
                                for kz in 0..3 {
                                    let r = _mm256_loadu_pd(row.add(z0 + kz));
                                    for o in 0..CB {
                                        acc[kz * CB + o] = _mm256_fmadd_pd(gv[o], r, acc[kz * CB + o]);
                                    }
                                }
                            }
                        }
                    }
                    for kz in 0..3 {
                        for o in 0..CB {
                            let oc = ob * CB + o;
                            if oc >= co {
                                break;
                            }
                            let mut lane = [0.0; 4];
                            _mm256_storeu_pd(lane.as_mut_ptr(), acc[kz * CB + o]);
                            dw[(oc * ci + c) * 27 + kx * 9 + ky * 3 + kz] += (lane[0] + lane[1]) + (lane[2] + lane[3]);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], w: &[f64], ci: usize, co: usize, ext: [usize; 3]) -> Vec<f64> {
        let [nx, ny, nz] = ext;
        let mut out = vec![0.0; co * nx * ny * nz];
        for o in 0..co {
            for i in 0..nx as isize {
                for j in 0..ny as isize {
                    for z in 0..nz as isize {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for k in 0..27 {
                                let (a, b, d) = (i + k as isize / 9 - 1, j + (k as isize / 3) % 3 - 1, z + k as isize % 3 - 1);
                                if a < 0 || b < 0 || d < 0 || a >= nx as isize || b >= ny as isize || d >= nz as isize {
                                    continue;
                                }
                                let xi = ((c * nx + a as usize) * ny + b as usize) * nz + d as usize;
                                acc += w[(o * ci + c) * 27 + k] * x[xi];
                            }
                        }
                        out[((o * nx + i as usize) * ny + j as usize) * nz + z as usize] = acc;
                    }
                }
            }
        }
        out
    }

    fn data(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * seed).sin()).collect()
    }

    #[test]
    fn kernels_match_naive_loops() {
        if !available() {
            return;
        }
        let (ci, co, ext) = (3, 5, [4, 3, 11]);
        let vox = 4 * 3 * 11;
        let x = data(ci * vox, 0.37);
        let w = data(co * ci * 27, 0.71);
        let g = data(co * vox, 0.53);

        let mut out = vec![0.0; co * vox];
        correlate(&x, &w, ci, co, ext, false, &mut out);
        let want = naive(&x, &w, ci, co, ext);
        assert!(out.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));

        // adjoint: <g, W x> == <Wᵀ g, x>
        let mut back = vec![0.0; ci * vox];
        correlate(&g, &w, co, ci, ext, true, &mut back);
        let lhs: f64 = g.iter().zip(&want).map(|(a, b)| a * b).sum();
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        // d<g, W x>/dW by linearity in W
        let mut dw = vec![0.0; w.len()];
        weight_grad(&x, &g, ci, co, ext, &mut dw);
        for idx in [0, 7, 26, 40, w.len() - 1] {
            let mut e = vec![0.0; w.len()];
            e[idx] = 1.0;
            let y = naive(&x, &e, ci, co, ext);
            let want: f64 = g.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((dw[idx] - want).abs() < 1e-10, "{idx}");
        }
    }
}
