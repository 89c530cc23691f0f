//! Resampling between the full-resolution grid and the network grid.
//!
//! Output voxel centers follow the align-centers rule: output index `i` on an
//! axis maps to the continuous source index `(i + 0.5) * n_src / n_dst - 0.5`.
//! Coordinates outside `[0, n_src - 1]` are clamped (edge replication).

use thiserror::Error;

use crate::volgrid::{threshold, BinaryVolume, GridMeta, ScalarVolume, Sense};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("target dims {0:?} must all be >= 1")]
    EmptyTarget([usize; 3]),
    #[error("label downsampling needs target dims {target:?} <= source dims {from:?}")]
    NotDownsampling {
        from: [usize; 3],
        target: [usize; 3],
    },
}

/// Continuous source index of output index `i`.
#[inline]
pub fn source_coord(i: usize, n_src: usize, n_dst: usize) -> f64 {
    (i as f64 + 0.5) * (n_src as f64 / n_dst as f64) - 0.5
}

/// Grid of the resampled volume: spacing scales with `n_src / n_dst` and the
/// origin moves so every output sample keeps its world position.
pub fn resampled_meta(meta: &GridMeta, target: [usize; 3]) -> Result<GridMeta, ResampleError> {
    if target.contains(&0) {
        return Err(ResampleError::EmptyTarget(target));
    }
    if target == meta.dims() {
        return Ok(*meta);
    }
    let mut spacing = [0.0; 3];
    let mut origin = [0.0; 3];
    for a in 0..3 {
        let ratio = meta.dims()[a] as f64 / target[a] as f64;
        spacing[a] = meta.spacing()[a] * ratio;
        origin[a] = meta.origin()[a] + meta.spacing()[a] * (0.5 * ratio - 0.5);
    }
    Ok(GridMeta::new(target, spacing, origin).expect("scaled grid stays valid"))
}

/// Per-axis interpolation stencil.
struct AxisStencil {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
    nearest: Vec<usize>,
}

impl AxisStencil {
    fn new(n_src: usize, n_dst: usize) -> Self {
        let max = (n_src - 1) as f64;
        let mut s = AxisStencil {
            lo: Vec::with_capacity(n_dst),
            hi: Vec::with_capacity(n_dst),
            frac: Vec::with_capacity(n_dst),
            nearest: Vec::with_capacity(n_dst),
        };
        for i in 0..n_dst {
            let c = source_coord(i, n_src, n_dst).clamp(0.0, max);
            let lo = c.floor() as usize;
            s.lo.push(lo);
            s.hi.push((lo + 1).min(n_src - 1));
            s.frac.push(c - lo as f64);
            // Halfway ties go to the lower index.
            s.nearest.push(((c - 0.5).ceil().max(0.0) as usize).min(n_src - 1));
        }
        s
    }
}

fn stencils(src: [usize; 3], dst: [usize; 3]) -> [AxisStencil; 3] {
    [
        AxisStencil::new(src[0], dst[0]),
        AxisStencil::new(src[1], dst[1]),
        AxisStencil::new(src[2], dst[2]),
    ]
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Trilinear resampling to `target` dims.
pub fn resample_trilinear(
    volume: &ScalarVolume,
    target: [usize; 3],
) -> Result<ScalarVolume, ResampleError> {
    let meta = resampled_meta(volume.meta(), target)?;
    if target == volume.meta().dims() {
        return Ok(volume.clone());
    }
    let src = volume.meta();
    let [sx, sy, sz] = stencils(src.dims(), target);
    let v = volume.voxels();
    let at = |i: usize, j: usize, k: usize| v[src.index(i, j, k)] as f64;
    let mut out = Vec::with_capacity(meta.len());
    for k in 0..target[2] {
        let (k0, k1, tz) = (sz.lo[k], sz.hi[k], sz.frac[k]);
        for j in 0..target[1] {
            let (j0, j1, ty) = (sy.lo[j], sy.hi[j], sy.frac[j]);
            for i in 0..target[0] {
                let (i0, i1, tx) = (sx.lo[i], sx.hi[i], sx.frac[i]);
                let c00 = lerp(at(i0, j0, k0), at(i1, j0, k0), tx);
                let c10 = lerp(at(i0, j1, k0), at(i1, j1, k0), tx);
                let c01 = lerp(at(i0, j0, k1), at(i1, j0, k1), tx);
                let c11 = lerp(at(i0, j1, k1), at(i1, j1, k1), tx);
                let c0 = lerp(c00, c10, ty);
                let c1 = lerp(c01, c11, ty);
                out.push(lerp(c0, c1, tz) as f32);
            }
        }
    }
    Ok(ScalarVolume::new(meta, out).expect("interpolation of finite values is finite"))
}

/// Volumes that nearest-neighbour resampling can copy voxels between.
pub trait Resample: Sized {
    type Voxel: Copy;
    fn grid(&self) -> &GridMeta;
    fn values(&self) -> &[Self::Voxel];
    fn rebuild(meta: GridMeta, values: Vec<Self::Voxel>) -> Self;
}

impl Resample for BinaryVolume {
    type Voxel = u8;
    fn grid(&self) -> &GridMeta {
        self.meta()
    }
    fn values(&self) -> &[u8] {
        self.voxels()
    }
    fn rebuild(meta: GridMeta, values: Vec<u8>) -> Self {
        BinaryVolume::new(meta, values).expect("copied voxels stay binary")
    }
}

impl Resample for ScalarVolume {
    type Voxel = f32;
    fn grid(&self) -> &GridMeta {
        self.meta()
    }
    fn values(&self) -> &[f32] {
        self.voxels()
    }
    fn rebuild(meta: GridMeta, values: Vec<f32>) -> Self {
        ScalarVolume::new(meta, values).expect("copied voxels stay finite")
    }
}

/// Nearest-neighbour resampling; every output value is copied from the source.
pub fn resample_nearest<V: Resample>(volume: &V, target: [usize; 3]) -> Result<V, ResampleError> {
    let src = *volume.grid();
    let meta = resampled_meta(&src, target)?;
    let [sx, sy, sz] = stencils(src.dims(), target);
    let v = volume.values();
    let mut out = Vec::with_capacity(meta.len());
    for k in 0..target[2] {
        for j in 0..target[1] {
            for i in 0..target[0] {
                out.push(v[src.index(sx.nearest[i], sy.nearest[j], sz.nearest[k])]);
            }
        }
    }
    Ok(V::rebuild(meta, out))
}

/// Trilinear downsampling of the mask as 0/1 scalars, kept where > 0.5.
pub fn downsample_label(
    mask: &BinaryVolume,
    target: [usize; 3],
) -> Result<BinaryVolume, ResampleError> {
    let source = mask.meta().dims();
    if (0..3).any(|a| target[a] > source[a]) {
        return Err(ResampleError::NotDownsampling { from: source, target });
    }
    let soft = resample_trilinear(&mask.to_scalar(), target)?;
    Ok(threshold(&soft, 0.5, Sense::Above))
}
