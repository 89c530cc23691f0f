//! Dense voxel containers shared by every stage of the pipeline.
//!
//! All volumes store one value per voxel in x-fastest order: the voxel
//! `(i, j, k)` lives at `i + nx * (j + ny * k)`. Values are sampled at voxel
//! centers, and the world position of voxel `(i, j, k)` is
//! `origin + (i * sx, j * sy, k * sz)`.

mod vvol;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use vvol::{read_binary, read_scalar, read_volume, write_volume, MAGIC};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid grid: {0}")]
    InvalidMeta(String),
    #[error("voxel count {found} does not match dims {dims:?} ({expected} voxels)")]
    CountMismatch {
        dims: [usize; 3],
        expected: usize,
        found: usize,
    },
    #[error("binary voxel {index} has value {value}, expected 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("scalar voxel {index} is not finite")]
    NonFinite { index: usize },
    #[error("grids differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:?}")]
    BadMagic { path: PathBuf, found: Vec<u8> },
    #[error("{path}: malformed header: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("{path}: unknown dtype {dtype:?}")]
    UnknownDtype { path: PathBuf, dtype: String },
    #[error("{path}: unsupported voxel order {order:?}")]
    UnknownOrder { path: PathBuf, order: String },
    #[error("{path}: truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{path}: payload has {found} bytes but dims {dims:?} need {expected}")]
    PayloadLength {
        path: PathBuf,
        dims: [usize; 3],
        expected: usize,
        found: usize,
    },
    #[error("{path}: expected a {expected} volume, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: &'static str,
        found: &'static str,
    },
}

pub type Result<T, E = VolumeError> = std::result::Result<T, E>;

/// Lattice geometry of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl GridMeta {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidMeta(format!("dims {dims:?} must all be >= 1")));
        }
        if dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none() {
            return Err(VolumeError::InvalidMeta(format!("dims {dims:?} overflow")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidMeta(format!(
                "spacing {spacing:?} must be finite and > 0"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(VolumeError::InvalidMeta(format!("origin {origin:?} must be finite")));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, origin at zero.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// World position of the center of voxel `(i, j, k)`.
    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Continuous index coordinates of a world point.
    pub fn to_index_space(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// World extent covered by the voxels (n * spacing per axis).
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// World position midway between the first and last voxel centers.
    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + 0.5 * (self.dims[a] - 1) as f64 * self.spacing[a];
        }
        c
    }

    pub fn same_dims(&self, other: &GridMeta) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(VolumeError::DimsMismatch(self.dims, other.dims))
        }
    }
}

/// Occupancy grid with values in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryVolume {
    meta: GridMeta,
    voxels: Vec<u8>,
}

impl BinaryVolume {
    pub fn new(meta: GridMeta, voxels: Vec<u8>) -> Result<Self> {
        check_count(&meta, voxels.len())?;
        if let Some((index, &value)) = voxels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(VolumeError::NotBinary { index, value });
        }
        Ok(Self { meta, voxels })
    }

    pub fn zeros(meta: GridMeta) -> Self {
        Self {
            voxels: vec![0; meta.len()],
            meta,
        }
    }

    pub fn from_fn(meta: GridMeta, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = meta.dims;
        let mut voxels = Vec::with_capacity(meta.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    voxels.push(f(i, j, k) as u8);
                }
            }
        }
        Self { meta, voxels }
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<u8> {
        self.voxels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.voxels[self.meta.index(i, j, k)] != 0
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.meta.index(i, j, k);
        self.voxels[idx] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            meta: self.meta,
            voxels: self.voxels.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// The mask as a 0.0 / 1.0 scalar field.
    pub fn to_scalar(&self) -> ScalarVolume {
        ScalarVolume {
            meta: self.meta,
            voxels: self.voxels.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn with_meta(self, meta: GridMeta) -> Result<Self> {
        check_count(&meta, self.voxels.len())?;
        Ok(Self { meta, ..self })
    }

    pub fn intersect(&self, other: &BinaryVolume) -> Result<Self> {
        self.meta.same_dims(&other.meta)?;
        Ok(Self {
            meta: self.meta,
            voxels: zip_map(&self.voxels, &other.voxels, |a, b| a & b),
        })
    }

    /// Voxels set in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryVolume) -> Result<Self> {
        self.meta.same_dims(&other.meta)?;
        Ok(Self {
            meta: self.meta,
            voxels: zip_map(&self.voxels, &other.voxels, |a, b| a & (1 - b)),
        })
    }
}

/// Real-valued field stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    meta: GridMeta,
    voxels: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(meta: GridMeta, voxels: Vec<f32>) -> Result<Self> {
        check_count(&meta, voxels.len())?;
        if let Some(index) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite { index });
        }
        Ok(Self { meta, voxels })
    }

    pub fn filled(meta: GridMeta, value: f32) -> Self {
        assert!(value.is_finite());
        Self {
            voxels: vec![value; meta.len()],
            meta,
        }
    }

    pub fn from_fn(meta: GridMeta, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let [nx, ny, nz] = meta.dims;
        let mut voxels = Vec::with_capacity(meta.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    voxels.push(f(i, j, k));
                }
            }
        }
        Self::new(meta, voxels)
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.meta.index(i, j, k)]
    }

    pub fn with_meta(self, meta: GridMeta) -> Result<Self> {
        check_count(&meta, self.voxels.len())?;
        Ok(Self { meta, ..self })
    }

    /// Elementwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.meta, self.voxels.iter().map(|&v| f(v)).collect())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Either kind of volume, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Binary(BinaryVolume),
    Scalar(ScalarVolume),
}

impl Volume {
    pub fn meta(&self) -> &GridMeta {
        match self {
            Volume::Binary(v) => v.meta(),
            Volume::Scalar(v) => v.meta(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Volume::Binary(_) => "binary",
            Volume::Scalar(_) => "scalar",
        }
    }
}

impl From<BinaryVolume> for Volume {
    fn from(v: BinaryVolume) -> Self {
        Volume::Binary(v)
    }
}

impl From<ScalarVolume> for Volume {
    fn from(v: ScalarVolume) -> Self {
        Volume::Scalar(v)
    }
}

/// Which side of the level counts as foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Above,
    Below,
}

/// Voxel is 1 iff strictly above (or strictly below) `level`.
pub fn threshold(volume: &ScalarVolume, level: f64, sense: Sense) -> BinaryVolume {
    let voxels = volume
        .voxels
        .iter()
        .map(|&v| {
            let v = v as f64;
            match sense {
                Sense::Above => (v > level) as u8,
                Sense::Below => (v < level) as u8,
            }
        })
        .collect();
    BinaryVolume {
        meta: volume.meta,
        voxels,
    }
}

fn check_count(meta: &GridMeta, found: usize) -> Result<()> {
    if found == meta.len() {
        Ok(())
    } else {
        Err(VolumeError::CountMismatch {
            dims: meta.dims,
            expected: meta.len(),
            found,
        })
    }
}

fn zip_map(a: &[u8], b: &[u8], f: impl Fn(u8, u8) -> u8) -> Vec<u8> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
