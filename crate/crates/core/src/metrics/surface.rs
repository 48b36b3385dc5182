//! 95th-percentile symmetric surface distance.
//!
//! Surfaces are the foreground voxels with at least one background
//! face-neighbour, or lying on the volume edge. Distances from one surface
//! to the other come from an exact Euclidean distance transform (lower
//! envelope of parabolas, one pass per axis). Offsets are formed as
//! `(i - j) * spacing` and the axes are accumulated x, y, z, so every
//! distance is bit-identical to the all-pairs minimum of
//! `sqrt((dx² + dy²) + dz²)`.

use super::overlap::check_extents;
use super::{percentile, MetricError};
use crate::data::{linear_index, Mask};

/// Surface voxels of the nonzero region, in linear-index order.
pub fn surface_voxels(mask: &Mask) -> Vec<[usize; 3]> {
    let e = mask.extents();
    let l = mask.labels();
    let mut out = Vec::new();
    for x in 0..e[0] {
        for y in 0..e[1] {
            for z in 0..e[2] {
                if l[linear_index(e, x, y, z)] == 0 {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x + 1 == e[0] || y + 1 == e[1] || z + 1 == e[2];
                let exposed = edge
                    || [
                        (x - 1, y, z),
                        (x + 1, y, z),
                        (x, y - 1, z),
                        (x, y + 1, z),
                        (x, y, z - 1),
                        (x, y, z + 1),
                    ]
                    .iter()
                    .any(|&(a, b, c)| l[linear_index(e, a, b, c)] == 0);
                if exposed {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// One-dimensional squared distance transform along a strided line.
fn edt_line(f: &mut [f64], spacing: f64, v: &mut [usize], zs: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    let pos = |q: usize| q as f64 * spacing;
    let mut k = 0usize;
    let mut first = None;
    for q in 0..n {
        if f[q].is_finite() {
            first = Some(q);
            break;
        }
    }
    let Some(start) = first else {
        return;
    };
    v[0] = start;
    zs[0] = f64::NEG_INFINITY;
    zs[1] = f64::INFINITY;
    for q in start + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= zs[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= zs[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                zs[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            zs[k] = s;
            zs[k + 1] = f64::INFINITY;
            break;
        }
    }
    let value = |q: usize, p: usize| {
        let d = (q as f64 - p as f64) * spacing;
        d * d + f[p]
    };
    let mut j = 0;
    for q in 0..n {
        while zs[j + 1] < pos(q) {
            j += 1;
        }
        // neighbours guard against rounding in the breakpoints
        let mut best = value(q, v[j]);
        if j > 0 {
            best = best.min(value(q, v[j - 1]));
        }
        if j < k {
            best = best.min(value(q, v[j + 1]));
        }
        out[q] = best;
    }
    f.copy_from_slice(&out[..n]);
}

/// Squared Euclidean distance from every voxel to the nearest seed voxel.
fn squared_distance_map(extents: [usize; 3], seeds: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    let n: usize = extents.iter().product();
    let mut d = vec![f64::INFINITY; n];
    for s in seeds {
        d[linear_index(extents, s[0], s[1], s[2])] = 0.0;
    }
    let longest = *extents.iter().max().expect("three axes");
    let mut line = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut zs = vec![0.0; longest + 1];
    let mut out = vec![0.0; longest];
    let strides = [extents[1] * extents[2], extents[2], 1];
    for axis in [0, 1, 2] {
        let len = extents[axis];
        let stride = strides[axis];
        for start in 0..n {
            if !(start / stride).is_multiple_of(len) {
                continue;
            }
            let seg = &mut line[..len];
            for (k, s) in seg.iter_mut().enumerate() {
                *s = d[start + k * stride];
            }
            edt_line(seg, spacing[axis], &mut v, &mut zs, &mut out);
            for (k, s) in seg.iter().enumerate() {
                d[start + k * stride] = *s;
            }
        }
    }
    d
}

/// Distances from each surface voxel of `from` to the surface of `to`.
pub fn directed_surface_distances(from: &Mask, to: &Mask, spacing: [f64; 3]) -> Result<Vec<f64>, MetricError> {
    check_extents(from, to)?;
    let target = surface_voxels(to);
    let map = squared_distance_map(to.extents(), &target, spacing);
    Ok(surface_voxels(from)
        .iter()
        .map(|p| map[linear_index(from.extents(), p[0], p[1], p[2])].sqrt())
        .collect())
}

/// Length of the volume diagonal, reported when exactly one mask is empty.
pub fn empty_mask_sentinel(extents: [usize; 3], spacing: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| (extents[a] as f64 * spacing[a]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `max(P95(d(A→B)), P95(d(B→A)))` with linear-interpolation percentiles.
///
/// Two empty masks give 0; exactly one empty mask gives the volume
/// diagonal.
pub fn hausdorff95(pred: &Mask, target: &Mask, spacing: [f64; 3]) -> Result<f64, MetricError> {
    check_extents(pred, target)?;
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(MetricError::Spacing(spacing));
    }
    match (pred.foreground_count() == 0, target.foreground_count() == 0) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(empty_mask_sentinel(pred.extents(), spacing)),
        _ => {}
    }
    let mut ab = directed_surface_distances(pred, target, spacing)?;
    let mut ba = directed_surface_distances(target, pred, spacing)?;
    ab.sort_by(f64::total_cmp);
    ba.sort_by(f64::total_cmp);
    Ok(percentile(&ab, 95.0).max(percentile(&ba, 95.0)))
}
