use super::{linear_index, Mask, Volume};

/// Rescales to `[0, 1]`. A constant volume carries no information and maps
/// to all zeros.
pub fn minmax_normalize(v: &Volume) -> Volume {
    let (lo, hi) = v
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    let data = if range > 0.0 {
        v.data().iter().map(|&x| (x - lo) / range).collect()
    } else {
        vec![0.0; v.len()]
    };
    let mut out = Volume::new(v.extents(), data).expect("same extents, finite values");
    out.spacing = v.spacing;
    out
}

/// Source coordinate of output index `i` with corners aligned.
fn source_coord(i: usize, from: usize, to: usize) -> f64 {
    if to == 1 {
        0.0
    } else {
        i as f64 * (from - 1) as f64 / (to - 1) as f64
    }
}

/// Trilinear resampling with aligned corners. Returns a bitwise copy when
/// the extents already match.
pub fn resize_volume(v: &Volume, target: [usize; 3]) -> Volume {
    if v.extents() == target {
        return v.clone();
    }
    let mut ext = v.extents();
    let mut data = v.data().to_vec();
    // separable: one linear pass per axis
    for axis in 0..3 {
        if ext[axis] == target[axis] {
            continue;
        }
        let mut next_ext = ext;
        next_ext[axis] = target[axis];
        let mut next = vec![0.0; next_ext.iter().product()];
        for x in 0..next_ext[0] {
            for y in 0..next_ext[1] {
                for z in 0..next_ext[2] {
                    let mut idx = [x, y, z];
                    let s = source_coord(idx[axis], ext[axis], target[axis]);
                    let i0 = (s.floor() as usize).min(ext[axis] - 1);
                    let i1 = (i0 + 1).min(ext[axis] - 1);
                    let t = s - i0 as f64;
                    idx[axis] = i0;
                    let a = data[linear_index(ext, idx[0], idx[1], idx[2])];
                    idx[axis] = i1;
                    let b = data[linear_index(ext, idx[0], idx[1], idx[2])];
                    next[linear_index(next_ext, x, y, z)] = a + (b - a) * t;
                }
            }
        }
        ext = next_ext;
        data = next;
    }
    let mut out = Volume::new(ext, data).expect("target extents validated by caller");
    for axis in 0..3 {
        out.spacing[axis] = v.spacing[axis] * (v.extents()[axis] - 1) as f64 / (target[axis] - 1).max(1) as f64;
    }
    out
}

/// Nearest-neighbour resampling; never invents labels.
pub fn resize_mask(m: &Mask, target: [usize; 3]) -> Mask {
    if m.extents() == target {
        return m.clone();
    }
    let src = m.extents();
    let pick = |axis: usize, i: usize| -> usize {
        (source_coord(i, src[axis], target[axis]).round() as usize).min(src[axis] - 1)
    };
    let mut labels = Vec::with_capacity(target.iter().product());
    for x in 0..target[0] {
        let sx = pick(0, x);
        for y in 0..target[1] {
            let sy = pick(1, y);
            for z in 0..target[2] {
                labels.push(m.get(sx, sy, pick(2, z)));
            }
        }
    }
    Mask::new(target, labels).expect("target extents validated by caller")
}
