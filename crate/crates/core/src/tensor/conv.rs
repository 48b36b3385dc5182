//! 3D convolution and stride-2 transposed convolution.
//!
//! Both lower to a matrix product over an im2col buffer: a `(C·k³) × P`
//! matrix whose column `p` holds the receptive field of output voxel `p`.
//! The transposed convolution runs the same buffer in the opposite
//! direction (GEMM into columns, then col2im scatter-add).

use std::ops::Range;

use super::tape::{Op, Tape, Tensor};
use super::{NdArray, TensorError};

/// Convolution parameters living on a tape.
///
/// `weight` is `[out_ch, in_ch, kx, ky, kz]` and `bias` is `[out_ch]`.
#[derive(Debug, Clone, Copy)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvParams {
    /// Unit stride with padding `k / 2`, which preserves spatial extents.
    /// Every kernel extent must be odd.
    pub fn same(tape: &Tape, weight: Tensor, bias: Tensor) -> Result<Self, TensorError> {
        let shape = tape.shape(weight);
        if shape.len() != 5 {
            return Err(TensorError::Rank {
                op: "conv3d",
                expected: 5,
                found: shape.to_vec(),
            });
        }
        let mut padding = [0; 3];
        for axis in 0..3 {
            let k = shape[2 + axis];
            if k.is_multiple_of(2) {
                return Err(TensorError::EvenKernel { axis, kernel: k });
            }
            padding[axis] = k / 2;
        }
        Ok(Self {
            weight,
            bias,
            stride: [1; 3],
            padding,
        })
    }

    /// Stride-2, zero-padding parameters for upsampling.
    pub fn upsample(weight: Tensor, bias: Tensor) -> Self {
        Self {
            weight,
            bias,
            stride: [2; 3],
            padding: [0; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub in_ext: [usize; 3],
    pub out_ext: [usize; 3],
}

impl ConvGeometry {
    /// Whether the AVX2 kernels in `direct` handle this layer. Short z rows
    /// waste most of their 8-wide blocks, so those stay on im2col.
    fn direct(&self) -> bool {
        #[cfg(target_arch = "x86_64")]
        {
            self.kernel == [3; 3]
                && self.stride == [1; 3]
                && self.padding == [1; 3]
                && self.in_ext[2] >= 8
                && super::direct::available()
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    }

    fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }
    fn in_vox(&self) -> usize {
        self.in_ext.iter().product()
    }
    fn out_vox(&self) -> usize {
        self.out_ext.iter().product()
    }
}

pub(crate) struct ConvGrads {
    pub input: Option<NdArray>,
    pub weight: NdArray,
    pub bias: NdArray,
}

fn check_weights(
    tape: &Tape,
    op: &'static str,
    params: &ConvParams,
    in_ch: usize,
) -> Result<(usize, usize, [usize; 3]), TensorError> {
    let w = tape.shape(params.weight);
    let [co, ci, kx, ky, kz] = w[..] else {
        return Err(TensorError::Rank {
            op,
            expected: 5,
            found: w.to_vec(),
        });
    };
    let b = tape.shape(params.bias);
    if b != [co] {
        return Err(TensorError::ShapeMismatch {
            op,
            left: w.to_vec(),
            right: b.to_vec(),
        });
    }
    if ci != in_ch {
        return Err(TensorError::ChannelMismatch {
            op,
            expected: ci,
            found: in_ch,
        });
    }
    if params.stride.contains(&0) {
        return Err(TensorError::UnsupportedStride {
            op,
            stride: params.stride,
        });
    }
    Ok((co, ci, [kx, ky, kz]))
}

/// Standard 3D cross-correlation of a `[B, C, X, Y, Z]` input.
pub fn conv3d(tape: &mut Tape, input: Tensor, params: &ConvParams) -> Result<Tensor, TensorError> {
    let (batch, in_ch, in_ext) = tape.value(input).volume_dims("conv3d")?;
    let (out_ch, _, kernel) = check_weights(tape, "conv3d", params, in_ch)?;
    let mut out_ext = [0; 3];
    for axis in 0..3 {
        let padded = in_ext[axis] + 2 * params.padding[axis];
        if padded < kernel[axis] {
            return Err(TensorError::KernelTooLarge {
                axis,
                extent: padded,
                kernel: kernel[axis],
            });
        }
        out_ext[axis] = (padded - kernel[axis]) / params.stride[axis] + 1;
    }
    let geom = ConvGeometry {
        batch,
        in_ch,
        out_ch,
        kernel,
        stride: params.stride,
        padding: params.padding,
        in_ext,
        out_ext,
    };

    let k = in_ch * geom.kernel_volume();
    let p = geom.out_vox();
    let x = tape.value(input).data();
    let w = tape.value(params.weight).data();
    let b = tape.value(params.bias).data();
    let line = out_ext[2];
    let n_lines = out_ext[0] * out_ext[1];
    let step = tile_lines(k, line);
    let mut out = vec![0.0; batch * out_ch * p];
    let mut col = vec![0.0; if geom.direct() { 0 } else { k * step.min(n_lines) * line }];
    for n in 0..batch {
        let src = &x[n * in_ch * geom.in_vox()..(n + 1) * in_ch * geom.in_vox()];
        let dst = &mut out[n * out_ch * p..(n + 1) * out_ch * p];
        for (co, row) in dst.chunks_exact_mut(p).enumerate() {
            row.fill(b[co]);
        }
        #[cfg(target_arch = "x86_64")]
        if geom.direct() {
            super::direct::correlate(src, w, in_ch, out_ch, in_ext, false, dst);
            continue;
        }
        for l0 in (0..n_lines).step_by(step) {
            let lines = l0..(l0 + step).min(n_lines);
            let t = lines.len() * line;
            let col = &mut col[..k * t];
            im2col(src, in_ch, in_ext, out_ext, kernel, params.stride, params.padding, lines, col);
            gemm(out_ch, k, t, w, k, 1, col, t, 1, &mut dst[l0 * line..], p, 1.0);
        }
    }
    let value = NdArray::new(&[batch, out_ch, out_ext[0], out_ext[1], out_ext[2]], out)?;
    let rg = [input, params.weight, params.bias]
        .iter()
        .any(|&t| tape.requires_grad(t));
    Ok(tape.push(
        value,
        rg,
        Op::Conv {
            input,
            weight: params.weight,
            bias: params.bias,
            geom,
        },
    ))
}

/// Transposed convolution. Only stride 2 is supported; with a 2³ kernel and
/// no padding every spatial extent doubles.
///
/// The weight layout matches [`conv3d`]: `[out_ch, in_ch, kx, ky, kz]`.
pub fn conv3d_transpose(tape: &mut Tape, input: Tensor, params: &ConvParams) -> Result<Tensor, TensorError> {
    if params.stride != [2; 3] {
        return Err(TensorError::UnsupportedStride {
            op: "conv3d_transpose",
            stride: params.stride,
        });
    }
    let (batch, in_ch, in_ext) = tape.value(input).volume_dims("conv3d_transpose")?;
    let (out_ch, _, kernel) = check_weights(tape, "conv3d_transpose", params, in_ch)?;
    let mut out_ext = [0; 3];
    for axis in 0..3 {
        let full = (in_ext[axis] - 1) * 2 + kernel[axis];
        if full <= 2 * params.padding[axis] {
            return Err(TensorError::KernelTooLarge {
                axis,
                extent: full,
                kernel: 2 * params.padding[axis],
            });
        }
        out_ext[axis] = full - 2 * params.padding[axis];
    }
    let geom = ConvGeometry {
        batch,
        in_ch,
        out_ch,
        kernel,
        stride: params.stride,
        padding: params.padding,
        in_ext,
        out_ext,
    };
    let kk = geom.kernel_volume();
    let p_in = geom.in_vox();
    let p_out = geom.out_vox();
    let wt = transpose_weight(tape.value(params.weight).data(), out_ch, in_ch, kk);
    let x = tape.value(input).data();
    let b = tape.value(params.bias).data();
    let mut out = vec![0.0; batch * out_ch * p_out];
    let mut cols = vec![0.0; out_ch * kk * p_in];
    for n in 0..batch {
        let src = &x[n * in_ch * p_in..(n + 1) * in_ch * p_in];
        gemm(out_ch * kk, in_ch, p_in, &wt, in_ch, 1, src, p_in, 1, &mut cols, p_in, 0.0);
        let dst = &mut out[n * out_ch * p_out..(n + 1) * out_ch * p_out];
        for (co, row) in dst.chunks_exact_mut(p_out).enumerate() {
            row.fill(b[co]);
        }
        // The scatter is the adjoint of gathering over the output image.
        col2im(&cols, dst, out_ch, out_ext, in_ext, kernel, params.stride, params.padding, 0..in_ext[0] * in_ext[1]);
    }
    let value = NdArray::new(&[batch, out_ch, out_ext[0], out_ext[1], out_ext[2]], out)?;
    let rg = [input, params.weight, params.bias]
        .iter()
        .any(|&t| tape.requires_grad(t));
    Ok(tape.push(
        value,
        rg,
        Op::ConvTranspose {
            input,
            weight: params.weight,
            bias: params.bias,
            geom,
        },
    ))
}

pub(crate) fn conv_backward(
    geom: &ConvGeometry,
    input: &NdArray,
    weight: &NdArray,
    grad: &NdArray,
    want_input: bool,
) -> Result<ConvGrads, TensorError> {
    let k = geom.in_ch * geom.kernel_volume();
    let p = geom.out_vox();
    let in_vox = geom.in_ch * geom.in_vox();
    let line = geom.out_ext[2];
    let n_lines = geom.out_ext[0] * geom.out_ext[1];
    let step = tile_lines(k, line);
    let x = input.data();
    let g = grad.data();
    let w = weight.data();
    let mut dw = vec![0.0; geom.out_ch * k];
    let mut db = vec![0.0; geom.out_ch];
    let mut dx = want_input.then(|| vec![0.0; geom.batch * in_vox]);
    let mut col = vec![0.0; if geom.direct() { 0 } else { k * step.min(n_lines) * line }];
    let mut dcol = vec![0.0; if want_input { col.len() } else { 0 }];
    for n in 0..geom.batch {
        let gout = &g[n * geom.out_ch * p..(n + 1) * geom.out_ch * p];
        for (co, row) in gout.chunks_exact(p).enumerate() {
            db[co] += row.iter().sum::<f64>();
        }
        let src = &x[n * in_vox..(n + 1) * in_vox];
        #[cfg(target_arch = "x86_64")]
        if geom.direct() {
            super::direct::weight_grad(src, gout, geom.in_ch, geom.out_ch, geom.in_ext, &mut dw);
            if let Some(dx) = dx.as_mut() {
                let dst = &mut dx[n * in_vox..(n + 1) * in_vox];
                super::direct::correlate(gout, w, geom.out_ch, geom.in_ch, geom.in_ext, true, dst);
            }
            continue;
        }
        for l0 in (0..n_lines).step_by(step) {
            let lines = l0..(l0 + step).min(n_lines);
            let t = lines.len() * line;
            let col = &mut col[..k * t];
            im2col(src, geom.in_ch, geom.in_ext, geom.out_ext, geom.kernel, geom.stride, geom.padding, lines.clone(), col);
            let gtile = &gout[l0 * line..];
            // dW += dOut · colᵀ
            gemm(geom.out_ch, t, k, gtile, p, 1, col, 1, t, &mut dw, k, 1.0);
            if let Some(dx) = dx.as_mut() {
                // dCol = Wᵀ · dOut
                let dcol = &mut dcol[..k * t];
                gemm(k, geom.out_ch, t, w, 1, k, gtile, p, 1, dcol, t, 0.0);
                col2im(
                    dcol,
                    &mut dx[n * in_vox..(n + 1) * in_vox],
                    geom.in_ch,
                    geom.in_ext,
                    geom.out_ext,
                    geom.kernel,
                    geom.stride,
                    geom.padding,
                    lines,
                );
            }
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| NdArray::new(input.shape(), d)).transpose()?,
        weight: NdArray::new(weight.shape(), dw)?,
        bias: NdArray::new(&[geom.out_ch], db)?,
    })
}

pub(crate) fn conv_transpose_backward(
    geom: &ConvGeometry,
    input: &NdArray,
    weight: &NdArray,
    grad: &NdArray,
    want_input: bool,
) -> Result<ConvGrads, TensorError> {
    let kk = geom.kernel_volume();
    let p_in = geom.in_vox();
    let p_out = geom.out_vox();
    let rows = geom.out_ch * kk;
    let wt = transpose_weight(weight.data(), geom.out_ch, geom.in_ch, kk);
    let x = input.data();
    let g = grad.data();
    let mut dwt = vec![0.0; rows * geom.in_ch];
    let mut db = vec![0.0; geom.out_ch];
    let mut dx = want_input.then(|| vec![0.0; geom.batch * geom.in_ch * p_in]);
    for n in 0..geom.batch {
        let gout = &g[n * geom.out_ch * p_out..(n + 1) * geom.out_ch * p_out];
        for (co, row) in gout.chunks_exact(p_out).enumerate() {
            db[co] += row.iter().sum::<f64>();
        }
        let mut dcols = vec![0.0; rows * p_in];
        let lines = 0..geom.in_ext[0] * geom.in_ext[1];
        im2col(gout, geom.out_ch, geom.out_ext, geom.in_ext, geom.kernel, geom.stride, geom.padding, lines, &mut dcols);
        let xn = &x[n * geom.in_ch * p_in..(n + 1) * geom.in_ch * p_in];
        // dWt += dCols · xᵀ
        gemm(rows, p_in, geom.in_ch, &dcols, p_in, 1, xn, 1, p_in, &mut dwt, geom.in_ch, 1.0);
        if let Some(dx) = dx.as_mut() {
            // dx = Wtᵀ · dCols
            let dst = &mut dx[n * geom.in_ch * p_in..(n + 1) * geom.in_ch * p_in];
            gemm(geom.in_ch, rows, p_in, &wt, 1, geom.in_ch, &dcols, p_in, 1, dst, p_in, 0.0);
        }
    }
    let mut dw = vec![0.0; dwt.len()];
    for co in 0..geom.out_ch {
        for ci in 0..geom.in_ch {
            for k in 0..kk {
                dw[(co * geom.in_ch + ci) * kk + k] = dwt[(co * kk + k) * geom.in_ch + ci];
            }
        }
    }
    Ok(ConvGrads {
        input: dx
            .map(|d| NdArray::new(input.shape(), d))
            .transpose()?,
        weight: NdArray::new(weight.shape(), dw)?,
        bias: NdArray::new(&[geom.out_ch], db)?,
    })
}

/// `[co, ci, k]` → `[(co, k), ci]`
fn transpose_weight(w: &[f64], out_ch: usize, in_ch: usize, kk: usize) -> Vec<f64> {
    let mut wt = vec![0.0; w.len()];
    for co in 0..out_ch {
        for ci in 0..in_ch {
            for k in 0..kk {
                wt[(co * kk + k) * in_ch + ci] = w[(co * in_ch + ci) * kk + k];
            }
        }
    }
    wt
}

/// Source coordinate for output position `o` and kernel tap `k`, or `None`
/// when it falls in the zero padding.
#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(pad)?;
    (i < extent).then_some(i)
}

/// Half-open range of output positions whose tap `k` lands inside the
/// image (outputs are contiguous because the source index is monotone).
#[inline]
fn tap_range(grid: usize, k: usize, stride: usize, pad: usize, extent: usize) -> (usize, usize) {
    let lo = (0..grid).find(|&o| tap(o, k, stride, pad, extent).is_some());
    match lo {
        Some(lo) => {
            let hi = (lo..grid).find(|&o| tap(o, k, stride, pad, extent).is_none()).unwrap_or(grid);
            (lo, hi)
        }
        None => (0, 0),
    }
}

/// Doubles of im2col scratch per tile. Small enough that the GEMM's packed
/// panels stay in L2.
const TILE_BUDGET: usize = 1 << 18;

/// Output lines per tile for a `k`-row column matrix.
fn tile_lines(k: usize, line: usize) -> usize {
    (TILE_BUDGET / (k * line)).max(1)
}

/// Gathers receptive fields of a `C × image` buffer into a
/// `(C·k³) × T` matrix covering output lines (fixed x and y, all z) `lines`
/// of `grid`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    src: &[f64],
    channels: usize,
    image: [usize; 3],
    grid: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    lines: Range<usize>,
    col: &mut [f64],
) {
    let t = lines.len() * grid[2];
    let img_vox = image.iter().product::<usize>();
    debug_assert_eq!(col.len(), channels * kernel.iter().product::<usize>() * t);
    let mut row = 0;
    for c in 0..channels {
        let src_plane = &src[c * img_vox..(c + 1) * img_vox];
        for kx in 0..kernel[0] {
            for ky in 0..kernel[1] {
                for kz in 0..kernel[2] {
                    let dst = &mut col[row * t..(row + 1) * t];
                    let (lo, hi) = tap_range(grid[2], kz, stride[2], padding[2], image[2]);
                    for l in lines.clone() {
                        let (ox, oy) = (l / grid[1], l % grid[1]);
                        let dst_row = (l - lines.start) * grid[2];
                        let line = &mut dst[dst_row..dst_row + grid[2]];
                        let (Some(ix), Some(iy)) = (
                            tap(ox, kx, stride[0], padding[0], image[0]),
                            tap(oy, ky, stride[1], padding[1], image[1]),
                        ) else {
                            line.fill(0.0);
                            continue;
                        };
                        {
                            let src_row = (ix * image[1] + iy) * image[2];
                            line[..lo].fill(0.0);
                            line[hi..].fill(0.0);
                            let d = &mut line[lo..hi];
                            let first = src_row + lo * stride[2] + kz - padding[2];
                            if stride[2] == 1 {
                                d.copy_from_slice(&src_plane[first..first + (hi - lo)]);
                            } else {
                                for (j, v) in d.iter_mut().enumerate() {
                                    *v = src_plane[first + j * stride[2]];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds the columns of `lines` back
/// into `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    dst: &mut [f64],
    channels: usize,
    image: [usize; 3],
    grid: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    lines: Range<usize>,
) {
    let t = lines.len() * grid[2];
    let img_vox = image.iter().product::<usize>();
    let mut row = 0;
    for c in 0..channels {
        let plane = &mut dst[c * img_vox..(c + 1) * img_vox];
        for kx in 0..kernel[0] {
            for ky in 0..kernel[1] {
                for kz in 0..kernel[2] {
                    let src = &col[row * t..(row + 1) * t];
                    let (lo, hi) = tap_range(grid[2], kz, stride[2], padding[2], image[2]);
                    for l in lines.clone() {
                        let (ox, oy) = (l / grid[1], l % grid[1]);
                        let (Some(ix), Some(iy)) = (
                            tap(ox, kx, stride[0], padding[0], image[0]),
                            tap(oy, ky, stride[1], padding[1], image[1]),
                        ) else {
                            continue;
                        };
                        {
                            let img_row = (ix * image[1] + iy) * image[2];
                            let col_row = (l - lines.start) * grid[2];
                            let first = img_row + lo * stride[2] + kz - padding[2];
                            let s = &src[col_row + lo..col_row + hi];
                            if stride[2] == 1 {
                                for (d, v) in plane[first..first + s.len()].iter_mut().zip(s) {
                                    *d += v;
                                }
                            } else {
                                for (j, v) in s.iter().enumerate() {
                                    plane[first + j * stride[2]] += v;
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `C = A·B + beta·C` with explicit row/column strides for A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    beta: f64,
) {
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= (m - 1) * rsc + n && rsc >= n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}
