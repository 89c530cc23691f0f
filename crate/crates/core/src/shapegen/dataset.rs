use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{voxelize, Quat, Shape, ShapeError, ShapeKind, ShapeSpec};
use crate::volgrid::{write_volume, GridMeta};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub train_per_shape: usize,
    pub test_per_shape: usize,
    /// Range for every length parameter (half-extents, semi-axes, radius,
    /// half-height, rhomboid half-edges), world units.
    pub size_range: [f64; 2],
    /// Rhomboid shear angles, degrees, within (0, 90].
    pub shear_range_deg: [f64; 2],
    pub seed: u64,
    /// Extra draws allowed for a case whose voxelization comes out empty.
    pub max_retries: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            dims: [128; 3],
            spacing: [1.0; 3],
            train_per_shape: 8,
            test_per_shape: 4,
            size_range: [10.0, 24.0],
            shear_range_deg: [60.0, 90.0],
            seed: 0,
            max_retries: 16,
        }
    }
}

impl GeneratorConfig {
    pub fn meta(&self) -> Result<GridMeta, ShapeError> {
        Ok(GridMeta::new(self.dims, self.spacing, [0.0; 3])?)
    }

    fn validate(&self) -> Result<(), ShapeError> {
        let [lo, hi] = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ShapeError::Config(format!("size range {:?}", self.size_range)));
        }
        let [a, b] = self.shear_range_deg;
        if !(a > 0.0 && a <= b && b <= 90.0) {
            return Err(ShapeError::Config(format!(
                "shear range {:?} must lie in (0, 90]",
                self.shear_range_deg
            )));
        }
        self.meta().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: String,
    pub kind: ShapeKind,
    pub center: [f64; 3],
    pub rotation: Quat,
    pub size: Shape,
    /// Volume file, relative to the manifest's directory.
    pub path: PathBuf,
    pub split: Split,
}

impl CaseEntry {
    pub fn spec(&self) -> ShapeSpec {
        ShapeSpec {
            center: self.center,
            rotation: self.rotation,
            shape: self.size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub grid: ManifestGrid,
    pub entries: Vec<CaseEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &CaseEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn meta(&self) -> Result<GridMeta, ShapeError> {
        Ok(GridMeta::new(self.grid.dims, self.grid.spacing, [0.0; 3])?)
    }
}

/// Reads `manifest.json` from `dir` and checks its entries.
pub fn load_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest, ShapeError> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|source| ShapeError::Io {
        path: path.clone(),
        source,
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| ShapeError::Manifest {
            path: path.clone(),
            source,
        })?;
    let mut ids = std::collections::HashSet::new();
    for e in &manifest.entries {
        if !ids.insert(&e.id) {
            return Err(ShapeError::Config(format!("duplicate case id {}", e.id)));
        }
        if e.kind != e.size.kind() {
            return Err(ShapeError::Config(format!("case {}: kind/size mismatch", e.id)));
        }
        e.spec().validate()?;
    }
    Ok(manifest)
}

/// Draws, voxelizes and writes every case, then writes the manifest.
///
/// Case `n` (in manifest order) draws from stream `n` of a ChaCha generator
/// keyed by the seed, so each case is independent of the others.
pub fn generate_dataset(
    config: &GeneratorConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, ShapeError> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| ShapeError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let meta = config.meta()?;

    let mut entries = Vec::new();
    let mut case_index = 0u64;
    for (split, count) in [
        (Split::Train, config.train_per_shape),
        (Split::Test, config.test_per_shape),
    ] {
        for kind in ShapeKind::ALL {
            for n in 0..count {
                let id = format!("{}_{}_{n:03}", split.name(), kind.name());
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(case_index);
                case_index += 1;

                let mut found = None;
                for _ in 0..=config.max_retries {
                    let spec = draw_spec(config, &meta, kind, &mut rng)?;
                    let vol = voxelize(&spec, &meta);
                    if vol.count() > 0 {
                        found = Some((spec, vol));
                        break;
                    }
                }
                let (spec, vol) = found.ok_or_else(|| ShapeError::EmptyVoxelization {
                    case: id.clone(),
                    attempts: config.max_retries + 1,
                })?;
                let path = PathBuf::from(format!("{id}.vvol"));
                write_volume(out_dir.join(&path), &vol.into())?;
                entries.push(CaseEntry {
                    id,
                    kind,
                    center: spec.center,
                    rotation: spec.rotation,
                    size: spec.shape,
                    path,
                    split,
                });
            }
        }
    }

    let manifest = DatasetManifest {
        seed: config.seed,
        grid: ManifestGrid {
            dims: config.dims,
            spacing: config.spacing,
        },
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| ShapeError::Io { path, source })?;
    Ok(manifest)
}

fn draw_spec(
    config: &GeneratorConfig,
    meta: &GridMeta,
    kind: ShapeKind,
    rng: &mut ChaCha8Rng,
) -> Result<ShapeSpec, ShapeError> {
    let [lo, hi] = config.size_range;
    let mut len = || if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    let shape = match kind {
        ShapeKind::Cuboid => Shape::Cuboid {
            half_extents: [len(), len(), len()],
        },
        ShapeKind::Ellipsoid => Shape::Ellipsoid {
            semi_axes: [len(), len(), len()],
        },
        ShapeKind::Cylinder => Shape::Cylinder {
            radius: len(),
            half_height: len(),
        },
        ShapeKind::Rhomboid => {
            let edges = [len(), len(), len()];
            let [a, b] = config.shear_range_deg;
            let mut angle = || {
                let deg = if a < b { rng.gen_range(a..=b) } else { a };
                deg.to_radians().min(std::f64::consts::FRAC_PI_2)
            };
            Shape::Rhomboid {
                edges,
                shear: [angle(), angle()],
            }
        }
    };
    let rotation = Quat::random(rng);
    let radius = shape.bounding_radius();
    let grid_center = meta.center();
    let extent = meta.extent();
    let mut center = [0.0; 3];
    for a in 0..3 {
        let margin = 0.45 * extent[a] - radius;
        if margin < 0.0 {
            return Err(ShapeError::Config(format!(
                "a {} of bounding radius {radius:.2} does not fit in 90% of a {:.1}-unit axis",
                kind.name(),
                extent[a]
            )));
        }
        center[a] = grid_center[a] + if margin > 0.0 { rng.gen_range(-margin..=margin) } else { 0.0 };
    }
    ShapeSpec::new(shape, center, rotation)
}
