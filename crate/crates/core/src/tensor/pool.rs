use super::tape::{Op, Tape, Tensor};
use super::{NdArray, TensorError};

/// Non-overlapping max pooling over `[B, C, X, Y, Z]`.
///
/// Ties go to the lowest linear index inside the window, so the backward
/// pass is deterministic.
pub fn maxpool3d(tape: &mut Tape, input: Tensor, window: [usize; 3]) -> Result<Tensor, TensorError> {
    let (batch, ch, ext) = tape.value(input).volume_dims("maxpool3d")?;
    for axis in 0..3 {
        if window[axis] == 0 || ext[axis] % window[axis] != 0 {
            return Err(TensorError::NotDivisible {
                axis,
                extent: ext[axis],
                multiple: window[axis],
            });
        }
    }
    let out_ext = [ext[0] / window[0], ext[1] / window[1], ext[2] / window[2]];
    let x = tape.value(input).data();
    let out_len = batch * ch * out_ext.iter().product::<usize>();
    let mut out = Vec::with_capacity(out_len);
    let mut argmax = Vec::with_capacity(out_len);
    for plane in 0..batch * ch {
        let base = plane * ext.iter().product::<usize>();
        for ox in 0..out_ext[0] {
            for oy in 0..out_ext[1] {
                for oz in 0..out_ext[2] {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for dx in 0..window[0] {
                        for dy in 0..window[1] {
                            for dz in 0..window[2] {
                                let (ix, iy, iz) = (ox * window[0] + dx, oy * window[1] + dy, oz * window[2] + dz);
                                let idx = base + (ix * ext[1] + iy) * ext[2] + iz;
                                // strict comparison keeps the first (lowest) index on ties
                                if x[idx] > best || best_idx == usize::MAX {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    let value = NdArray::new(&[batch, ch, out_ext[0], out_ext[1], out_ext[2]], out)?;
    let rg = tape.requires_grad(input);
    Ok(tape.push(value, rg, Op::MaxPool { input, argmax }))
}

pub(crate) fn maxpool_backward(input_shape: &[usize], argmax: &[usize], grad: &NdArray) -> NdArray {
    let mut dx = NdArray::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad.data()) {
        d[idx] += g;
    }
    dx
}
