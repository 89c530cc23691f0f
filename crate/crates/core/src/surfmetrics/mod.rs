//! Evaluation: overlap metrics, the contour band, surface extraction and
//! surface distances, and the relative gain between two methods.

mod distance;
mod mesh;
mod morphology;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sdt::edt_exact;
use crate::volgrid::{threshold, BinaryVolume, ScalarVolume, Sense, VolumeError};

pub use distance::{
    directed_distances, point_triangle_distance, pool, surface_distances, surface_samples,
    DistanceError, SurfaceDistances, SurfaceSample, TriangleIndex,
};
pub use mesh::{
    extract_isosurface, extract_surface_binary, extract_surface_sdf, MeshError, TriMesh,
};
pub use morphology::{dilate, erode};

/// The 5x5x5 box used for the contour band.
pub const DEFAULT_BAND_RADIUS: [usize; 3] = [2, 2, 2];

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("gain is undefined for a zero baseline")]
    ZeroBaseline,
}

/// Voxels within the box neighbourhood of the true contour: dilation minus
/// erosion of the truth.
pub fn contour_band(truth: &BinaryVolume, radius: [usize; 3]) -> BinaryVolume {
    dilate(truth, radius)
        .difference(&erode(truth, radius))
        .expect("same grid")
}

/// `2|A ∩ B| / (|A| + |B|)`, and 1 when both are empty.
pub fn dice(a: &BinaryVolume, b: &BinaryVolume) -> Result<f64, MetricError> {
    a.meta().same_dims(b.meta())?;
    let (mut both, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.voxels().iter().zip(b.voxels()) {
        na += x as usize;
        nb += y as usize;
        both += (x & y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Dice restricted to the contour band of `truth`. Not symmetric.
pub fn contour_dice(
    pred: &BinaryVolume,
    truth: &BinaryVolume,
    radius: [usize; 3],
) -> Result<f64, MetricError> {
    pred.meta().same_dims(truth.meta())?;
    let band = contour_band(truth, radius);
    dice(&pred.intersect(&band)?, &truth.intersect(&band)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Relative improvement of `candidate` over `baseline`, in percent. Equal
/// values give 0 even when both are zero.
pub fn gain(baseline: f64, candidate: f64, direction: Direction) -> Result<f64, MetricError> {
    if candidate == baseline {
        return Ok(0.0);
    }
    if baseline == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok(match direction {
        Direction::HigherBetter => 100.0 * (candidate - baseline) / baseline,
        Direction::LowerBetter => 100.0 * (baseline - candidate) / baseline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub dice: f64,
    pub contour_dice: f64,
    /// Absent when either surface is empty.
    pub asd: Option<f64>,
    pub rmsd: Option<f64>,
}

/// How surface distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Exact point-to-triangle distances between extracted meshes.
    Mesh,
    /// Center-to-center distances between boundary voxels.
    BoundaryVoxels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub band_radius: [usize; 3],
    pub samples_per_triangle: usize,
    pub distance_mode: DistanceMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            band_radius: DEFAULT_BAND_RADIUS,
            samples_per_triangle: 3,
            distance_mode: DistanceMode::Mesh,
        }
    }
}

/// A prediction and the rule that turns it into a segmentation and surface.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    /// Label map; surface at the 0.5 level of the mask.
    Labelmap(&'a BinaryVolume),
    /// Signed distance field; segmentation below 0 and surface at its zero level.
    Sdf(&'a ScalarVolume),
}

impl Prediction<'_> {
    pub fn segmentation(&self) -> BinaryVolume {
        match self {
            Prediction::Labelmap(m) => (*m).clone(),
            Prediction::Sdf(f) => threshold(f, 0.0, Sense::Below),
        }
    }

    pub fn surface(&self) -> TriMesh {
        match self {
            Prediction::Labelmap(m) => extract_surface_binary(m),
            Prediction::Sdf(f) => extract_surface_sdf(f),
        }
    }
}

/// All four metrics for one case.
pub fn evaluate_case(
    pred: Prediction<'_>,
    truth: &BinaryVolume,
    config: &EvalConfig,
) -> Result<MetricSet, MetricError> {
    let seg = pred.segmentation();
    seg.meta().same_dims(truth.meta())?;
    let dice = dice(&seg, truth)?;
    let contour_dice = contour_dice(&seg, truth, config.band_radius)?;
    let distances = match config.distance_mode {
        DistanceMode::Mesh => {
            let a = pred.surface();
            let b = extract_surface_binary(truth);
            if a.is_empty() || b.is_empty() {
                None
            } else {
                Some(surface_distances(&a, &b, config.samples_per_triangle)?)
            }
        }
        DistanceMode::BoundaryVoxels => boundary_voxel_distances(&seg, truth),
    };
    Ok(MetricSet {
        dice,
        contour_dice,
        asd: distances.map(|d| d.asd),
        rmsd: distances.map(|d| d.rmsd),
    })
}

/// Foreground voxels with a background face neighbour (or on the grid border).
pub fn boundary_voxels(mask: &BinaryVolume) -> BinaryVolume {
    let meta = *mask.meta();
    let [nx, ny, nz] = meta.dims();
    BinaryVolume::from_fn(meta, |i, j, k| {
        if !mask.get(i, j, k) {
            return false;
        }
        let c = [i, j, k];
        let n = [nx, ny, nz];
        (0..3).any(|a| {
            let mut lo = c;
            let mut hi = c;
            if c[a] == 0 || c[a] + 1 == n[a] {
                return true;
            }
            lo[a] -= 1;
            hi[a] += 1;
            !mask.get(lo[0], lo[1], lo[2]) || !mask.get(hi[0], hi[1], hi[2])
        })
    })
}

/// Symmetric distances between the boundary voxel centers of two masks.
pub fn boundary_voxel_distances(a: &BinaryVolume, b: &BinaryVolume) -> Option<SurfaceDistances> {
    let (ba, bb) = (boundary_voxels(a), boundary_voxels(b));
    let to_b = edt_exact(&bb).ok()?;
    let to_a = edt_exact(&ba).ok()?;
    let mut samples = Vec::new();
    for (idx, &v) in ba.voxels().iter().enumerate() {
        if v != 0 {
            samples.push((1.0, to_b.values()[idx].sqrt()));
        }
    }
    for (idx, &v) in bb.voxels().iter().enumerate() {
        if v != 0 {
            samples.push((1.0, to_a.values()[idx].sqrt()));
        }
    }
    Some(pool(&samples))
}
