use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sdfseg_core::resample::resampled_meta;
use sdfseg_core::shapegen::GeneratorConfig;
use sdfseg_core::surfmetrics::EvalConfig;
use sdfseg_core::GridMeta;
use sdfseg_net::{Head, NetSpec, TrainConfig};
use serde::{Deserialize, Serialize};

/// Network shape shared by both arms; only the head differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub levels: usize,
    pub base_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { levels: 2, base_channels: 8 }
    }
}

/// Everything one experiment needs, read from a single JSON file. Missing
/// fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: GeneratorConfig,
    /// Network grid; must divide the dataset grid on every axis.
    pub coarse_dims: [usize; 3],
    pub net: NetConfig,
    /// Shared by both arms. `seed` is replaced by the run seed and `sdf_unit`
    /// by the coarse voxel size, so `weight_epsilon` and `clamp_tau` are in
    /// coarse voxels.
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Optional clamp applied to the stored full-resolution SDF files, world units.
    pub sdf_clamp: Option<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: GeneratorConfig::default(),
            coarse_dims: [32; 3],
            net: NetConfig::default(),
            train: TrainConfig { epochs: 60, learning_rate: 3e-3, clamp_tau: Some(2.0), ..TrainConfig::default() },
            eval: EvalConfig::default(),
            sdf_clamp: None,
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Full scale: 512³ grids, 64³ network input, three levels, 19 training
    /// and 6 test cases per shape.
    pub fn full_scale() -> Self {
        let base = ExperimentConfig::default();
        ExperimentConfig {
            dataset: GeneratorConfig {
                dims: [512; 3],
                train_per_shape: 19,
                test_per_shape: 6,
                size_range: [40.0, 96.0],
                ..GeneratorConfig::default()
            },
            coarse_dims: [64; 3],
            net: NetConfig { levels: 3, base_channels: 8 },
            ..base
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate().with_context(|| format!("checking {}", path.display()))?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        let full = self.dataset.dims;
        for a in 0..3 {
            let c = self.coarse_dims[a];
            if c == 0 || !full[a].is_multiple_of(c) {
                bail!("coarse dims {:?} must divide dataset dims {full:?}", self.coarse_dims);
            }
        }
        if self.seeds.is_empty() {
            bail!("no seeds");
        }
        for head in [Head::Pwc, Head::Pwr] {
            self.spec(head).validate()?;
            self.train.validate(head)?;
        }
        if let Some(tau) = self.sdf_clamp {
            if !(tau > 0.0 && tau.is_finite()) {
                bail!("sdf clamp must be > 0, got {tau}");
            }
        }
        if self.dataset.train_per_shape == 0 {
            bail!("no training cases");
        }
        Ok(())
    }

    pub fn spec(&self, head: Head) -> NetSpec {
        NetSpec {
            levels: self.net.levels,
            base_channels: self.net.base_channels,
            input_dims: self.coarse_dims,
            head,
        }
    }

    /// The configuration of one seed: dataset and training both use it.
    pub fn for_seed(&self, seed: u64) -> ExperimentConfig {
        let mut c = self.clone();
        c.dataset.seed = seed;
        c.train.seed = seed;
        c.seeds = vec![seed];
        c
    }

    pub fn full_meta(&self) -> Result<GridMeta> {
        Ok(self.dataset.meta()?)
    }

    pub fn coarse_meta(&self) -> Result<GridMeta> {
        Ok(resampled_meta(&self.full_meta()?, self.coarse_dims)?)
    }

    /// Training settings with the seed and the coarse voxel size filled in.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let unit = self.coarse_meta()?.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(TrainConfig { seed: self.dataset.seed, sdf_unit: unit, ..self.train })
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}
