//! Box-structuring-element dilation and erosion, border-clipped.
//!
//! A box is the product of three intervals, so both operations factor into
//! three 1D passes; each pass counts foreground voxels in the clipped window
//! with a running prefix sum.

use crate::volgrid::BinaryVolume;

/// 1 iff any voxel of the clipped box neighbourhood is 1.
pub fn dilate(mask: &BinaryVolume, radius: [usize; 3]) -> BinaryVolume {
    filter(mask, radius, |count, _| count > 0)
}

/// 1 iff every in-grid voxel of the box neighbourhood is 1.
pub fn erode(mask: &BinaryVolume, radius: [usize; 3]) -> BinaryVolume {
    filter(mask, radius, |count, window| count == window)
}

fn filter(mask: &BinaryVolume, radius: [usize; 3], keep: impl Fn(usize, usize) -> bool) -> BinaryVolume {
    let meta = *mask.meta();
    let [nx, ny, nz] = meta.dims();
    let strides = [1, nx, nx * ny];
    let mut values = mask.voxels().to_vec();
    let longest = nx.max(ny).max(nz);
    let mut prefix = vec![0usize; longest + 1];
    let mut line = vec![0u8; longest];

    for axis in 0..3 {
        let r = radius[axis];
        if r == 0 {
            continue;
        }
        let n = meta.dims()[axis];
        let stride = strides[axis];
        for start in line_starts(meta.dims(), axis) {
            for t in 0..n {
                line[t] = values[start + t * stride];
                prefix[t + 1] = prefix[t] + line[t] as usize;
            }
            for t in 0..n {
                let lo = t.saturating_sub(r);
                let hi = (t + r + 1).min(n);
                let count = prefix[hi] - prefix[lo];
                values[start + t * stride] = keep(count, hi - lo) as u8;
            }
        }
    }
    BinaryVolume::new(meta, values).expect("filter output is binary")
}

/// Linear offsets of the first voxel of every line running along `axis`.
pub(crate) fn line_starts(dims: [usize; 3], axis: usize) -> impl Iterator<Item = usize> {
    let [nx, ny, nz] = dims;
    let (a_n, a_s, b_n, b_s) = match axis {
        0 => (ny, nx, nz, nx * ny),
        1 => (nx, 1, nz, nx * ny),
        _ => (nx, 1, ny, nx),
    };
    (0..b_n).flat_map(move |b| (0..a_n).map(move |a| a * a_s + b * b_s))
}
