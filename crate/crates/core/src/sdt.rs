//! Exact Euclidean distance transforms and the signed distance field built
//! from them.
//!
//! `edt_exact` runs three separable passes, one per axis, each computing the
//! lower envelope of parabolas rooted at the previous pass's values
//! (Felzenszwalb & Huttenlocher). Spacing is folded into each axis pass, so
//! distances are in world units.

use thiserror::Error;

use crate::volgrid::{BinaryVolume, GridMeta, ScalarVolume};

#[derive(Debug, Error, PartialEq)]
pub enum SdtError {
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("mask has no background voxels; the signed distance is undefined outside")]
    FullMask,
    #[error("clamp threshold must be positive, got {0}")]
    BadTau(f64),
}

/// Squared world distance from each voxel center to the nearest seed voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredDistanceField {
    meta: GridMeta,
    values: Vec<f64>,
}

impl SquaredDistanceField {
    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.meta.index(i, j, k)]
    }
}

/// Quadratic reference: minimum over all foreground voxels.
pub fn edt_brute(mask: &BinaryVolume) -> Result<SquaredDistanceField, SdtError> {
    let meta = *mask.meta();
    let seeds: Vec<[usize; 3]> = mask
        .voxels()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(idx, _)| meta.coords(idx))
        .collect();
    if seeds.is_empty() {
        return Err(SdtError::EmptyMask);
    }
    let s = meta.spacing();
    let values = (0..meta.len())
        .map(|idx| {
            let c = meta.coords(idx);
            seeds
                .iter()
                .map(|f| {
                    let d = |a: usize| (c[a] as f64 - f[a] as f64) * s[a];
                    d(0) * d(0) + d(1) * d(1) + d(2) * d(2)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(SquaredDistanceField { meta, values })
}

/// Exact squared distance transform in three separable passes.
pub fn edt_exact(mask: &BinaryVolume) -> Result<SquaredDistanceField, SdtError> {
    if mask.voxels().iter().all(|&v| v == 0) {
        return Err(SdtError::EmptyMask);
    }
    let meta = *mask.meta();
    let mut values: Vec<f64> = mask
        .voxels()
        .iter()
        .map(|&v| if v != 0 { 0.0 } else { f64::INFINITY })
        .collect();
    let [nx, ny, nz] = meta.dims();
    let spacing = meta.spacing();
    let strides = [1, nx, nx * ny];
    let longest = nx.max(ny).max(nz);
    let mut scratch = Envelope::with_capacity(longest);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];

    for axis in 0..3 {
        let n = meta.dims()[axis];
        let stride = strides[axis];
        // Starting offsets of every line along `axis`.
        let (outer_a, outer_b) = match axis {
            0 => ((ny, nx), (nz, nx * ny)),
            1 => ((nx, 1), (nz, nx * ny)),
            _ => ((nx, 1), (ny, nx)),
        };
        for b in 0..outer_b.0 {
            for a in 0..outer_a.0 {
                let start = a * outer_a.1 + b * outer_b.1;
                for t in 0..n {
                    line[t] = values[start + t * stride];
                }
                scratch.transform(&line[..n], spacing[axis], &mut out[..n]);
                for t in 0..n {
                    values[start + t * stride] = out[t];
                }
            }
        }
    }
    Ok(SquaredDistanceField { meta, values })
}

/// Reusable buffers for the 1D lower-envelope transform.
struct Envelope {
    roots: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            roots: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[q] = min_p f[p] + (spacing * (q - p))^2`; infinite entries of `f`
    /// contribute no parabola.
    fn transform(&mut self, f: &[f64], spacing: f64, out: &mut [f64]) {
        let pos = |p: usize| p as f64 * spacing;
        self.roots.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let xq = pos(q);
            loop {
                let Some(&v) = self.roots.last() else {
                    self.roots.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let xv = pos(v);
                let cross = ((fq + xq * xq) - (f[v] + xv * xv)) / (2.0 * (xq - xv));
                if cross <= *self.bounds.last().unwrap() {
                    self.roots.pop();
                    self.bounds.pop();
                } else {
                    self.roots.push(q);
                    self.bounds.push(cross);
                    break;
                }
            }
        }
        if self.roots.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let xq = pos(q);
            while k + 1 < self.roots.len() && self.bounds[k + 1] < xq {
                k += 1;
            }
            let p = self.roots[k];
            let d = xq - pos(p);
            *o = d * d + f[p];
        }
    }
}

/// Signed distance to the voxelized surface: the center-to-center distance
/// to the nearest voxel of the other class, less half the smallest spacing,
/// so the implied surface sits midway between opposite-class centers.
/// Negative inside, positive outside; every magnitude is at least half a
/// voxel, so no value is zero.
pub fn signed_distance(mask: &BinaryVolume) -> Result<ScalarVolume, SdtError> {
    let half = 0.5 * mask.meta().spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    signed_with_offset(mask, half)
}

/// Signed center-to-center distance without the half-voxel offset: a voxel
/// face-adjacent to the other class gets magnitude one spacing.
pub fn signed_distance_centers(mask: &BinaryVolume) -> Result<ScalarVolume, SdtError> {
    signed_with_offset(mask, 0.0)
}

fn signed_with_offset(mask: &BinaryVolume, offset: f64) -> Result<ScalarVolume, SdtError> {
    let fg = mask.count();
    if fg == 0 {
        return Err(SdtError::EmptyMask);
    }
    if fg == mask.voxels().len() {
        return Err(SdtError::FullMask);
    }
    let outside = edt_exact(mask)?;
    let inside = edt_exact(&mask.complement())?;
    let values = mask
        .voxels()
        .iter()
        .zip(outside.values.iter().zip(&inside.values))
        .map(|(&m, (&o, &i))| {
            if m != 0 {
                -((i.sqrt() - offset) as f32)
            } else {
                (o.sqrt() - offset) as f32
            }
        })
        .collect();
    Ok(ScalarVolume::new(*mask.meta(), values).expect("distances are finite"))
}

/// Limits every value to `[-tau, tau]`.
pub fn clamp_sdf(field: &ScalarVolume, tau: f64) -> Result<ScalarVolume, SdtError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SdtError::BadTau(tau));
    }
    let t = tau as f32;
    Ok(field.map(|v| v.clamp(-t, t)).expect("clamping keeps values finite"))
}
