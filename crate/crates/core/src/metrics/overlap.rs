use super::MetricError;
use crate::data::Mask;

pub(crate) fn check_extents(a: &Mask, b: &Mask) -> Result<(), MetricError> {
    if a.extents() != b.extents() {
        return Err(MetricError::Extents {
            left: a.extents(),
            right: b.extents(),
        });
    }
    Ok(())
}

/// `2|A∩B| / (|A| + |B|)` over nonzero voxels; two empty masks score 1.
pub fn dice_coefficient(pred: &Mask, target: &Mask) -> Result<f64, MetricError> {
    check_extents(pred, target)?;
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.labels().iter().zip(target.labels()) {
        let (p, t) = (p != 0, t != 0);
        a += usize::from(p);
        b += usize::from(t);
        inter += usize::from(p && t);
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Dice of the voxels carrying `label` in each mask.
pub fn dice_for_label(pred: &Mask, target: &Mask, label: u8) -> Result<f64, MetricError> {
    check_extents(pred, target)?;
    dice_coefficient(&pred.select(label), &target.select(label))
}
