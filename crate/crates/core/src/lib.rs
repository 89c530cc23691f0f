//! Volumetric building blocks for comparing label-guided and
//! distance-field-guided segmentation: voxel containers and their file
//! format, synthetic primitives, exact signed distance transforms,
//! resampling between resolutions, and the evaluation metric suite.

pub mod resample;
pub mod sdt;
pub mod shapegen;
pub mod surfmetrics;
pub mod volgrid;

pub use volgrid::{BinaryVolume, GridMeta, ScalarVolume, Sense, Volume, VolumeError};
