use super::tape::{Op, Tape, Tensor};
use super::{NdArray, TensorError};

/// Smoothing term of the soft Dice ratio.
pub const DICE_EPS: f64 = 1e-5;

/// Soft Dice loss with a squared-magnitude denominator.
///
/// `pred` is `[B, C, X, Y, Z]` with values in `[0, 1]`; `labels` holds
/// `B·X·Y·Z` integer labels where channel `c` is the foreground of label
/// `c + 1`. For each batch item and channel
///
/// ```text
/// D = (2·Σ p·g + ε) / (Σ p² + Σ g² + ε)
/// ```
///
/// and the loss is `1 − mean(D)`.
pub fn soft_dice_loss(tape: &mut Tape, pred: Tensor, labels: &[u8]) -> Result<Tensor, TensorError> {
    let (batch, classes, ext) = tape.value(pred).volume_dims("soft_dice_loss")?;
    let vox: usize = ext.iter().product();
    if labels.len() != batch * vox {
        return Err(TensorError::DataLength {
            shape: vec![batch, ext[0], ext[1], ext[2]],
            expected: batch * vox,
            found: labels.len(),
        });
    }
    let p = tape.value(pred).data();
    let norm = 1.0 / (batch * classes) as f64;
    let mut dice_sum = 0.0;
    let mut dpred = vec![0.0; p.len()];
    for n in 0..batch {
        let lab = &labels[n * vox..(n + 1) * vox];
        for c in 0..classes {
            let off = (n * classes + c) * vox;
            let pc = &p[off..off + vox];
            let target = (c + 1) as u8;
            let (mut inter, mut p2, mut g2) = (0.0, 0.0, 0.0);
            for (&pv, &l) in pc.iter().zip(lab) {
                let g = if l == target { 1.0 } else { 0.0 };
                inter += pv * g;
                p2 += pv * pv;
                g2 += g;
            }
            let num = 2.0 * inter + DICE_EPS;
            let den = p2 + g2 + DICE_EPS;
            dice_sum += num / den;
            let den2 = den * den;
            for ((d, &pv), &l) in dpred[off..off + vox].iter_mut().zip(pc).zip(lab) {
                let g = if l == target { 1.0 } else { 0.0 };
                *d = -norm * (2.0 * g * den - num * 2.0 * pv) / den2;
            }
        }
    }
    let loss = 1.0 - dice_sum * norm;
    let dpred = NdArray::new(tape.shape(pred), dpred)?;
    let rg = tape.requires_grad(pred);
    Ok(tape.push(NdArray::scalar(loss), rg, Op::SoftDice { pred, dpred }))
}
