use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use sdfseg_core::resample::{downsample_label, resample_trilinear};
use sdfseg_core::sdt::{clamp_sdf, signed_distance};
use sdfseg_core::shapegen::{generate_dataset, load_manifest, CaseEntry, DatasetManifest, Split};
use sdfseg_core::surfmetrics::{evaluate_case, extract_surface_binary, extract_surface_sdf, Prediction, TriMesh};
use sdfseg_core::volgrid::{read_binary, read_scalar, read_volume, threshold, write_volume};
use sdfseg_core::{BinaryVolume, ScalarVolume, Sense, Volume};
use sdfseg_net::{predict as net_predict, read_params, train_with_progress, write_params, Head, Params, TrainCase, TrainTarget};

use crate::config::ExperimentConfig;
use crate::report::{CaseRow, RunReport};

/// Where one seed's files live.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn sdf(&self, id: &str) -> PathBuf {
        self.root.join("sdf").join(format!("{id}.vvol"))
    }

    pub fn model(&self, arm: Head) -> PathBuf {
        self.root.join("models").join(format!("{arm}.vnet"))
    }

    pub fn loss_history(&self, arm: Head) -> PathBuf {
        self.root.join("models").join(format!("{arm}_loss.csv"))
    }

    pub fn raw(&self, arm: Head, id: &str) -> PathBuf {
        self.root.join("pred").join(arm.name()).join(format!("{id}_raw.vvol"))
    }

    pub fn segmentation(&self, arm: Head, id: &str) -> PathBuf {
        self.root.join("pred").join(arm.name()).join(format!("{id}_seg.vvol"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_vol(path: &Path, volume: Volume) -> Result<()> {
    create_parent(path)?;
    write_volume(path, &volume).with_context(|| format!("writing {}", path.display()))
}

fn mask_of(layout: &Layout, e: &CaseEntry) -> Result<BinaryVolume> {
    let path = layout.data().join(&e.path);
    read_binary(&path).with_context(|| format!("case {}: reading {}", e.id, path.display()))
}

pub fn manifest(layout: &Layout) -> Result<DatasetManifest> {
    load_manifest(layout.data()).with_context(|| format!("loading the dataset in {}", layout.data().display()))
}

/// Seconds since `t`.
pub(crate) fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

pub fn generate(config: &ExperimentConfig, layout: &Layout) -> Result<DatasetManifest> {
    Ok(generate_dataset(&config.dataset, layout.data())?)
}

/// One full-resolution SDF file per case.
pub fn sdf(config: &ExperimentConfig, layout: &Layout) -> Result<usize> {
    let manifest = manifest(layout)?;
    for e in &manifest.entries {
        let mask = mask_of(layout, e)?;
        let mut field = signed_distance(&mask).with_context(|| format!("case {}", e.id))?;
        if let Some(tau) = config.sdf_clamp {
            field = clamp_sdf(&field, tau)?;
        }
        write_vol(&layout.sdf(&e.id), field.into())?;
    }
    Ok(manifest.entries.len())
}

/// Network input: the mask as 0/1 scalars, trilinearly downsampled.
pub fn network_input(mask: &BinaryVolume, dims: [usize; 3]) -> Result<ScalarVolume> {
    Ok(resample_trilinear(&mask.to_scalar(), dims)?)
}

pub fn training_cases(config: &ExperimentConfig, layout: &Layout, arm: Head) -> Result<Vec<TrainCase>> {
    let manifest = manifest(layout)?;
    let dims = config.coarse_dims;
    manifest
        .split(Split::Train)
        .map(|e| {
            let mask = mask_of(layout, e)?;
            let target = match arm {
                Head::Pwc => TrainTarget::Label(downsample_label(&mask, dims)?),
                Head::Pwr => {
                    let path = layout.sdf(&e.id);
                    let field = read_scalar(&path)
                        .with_context(|| format!("case {}: reading {} (run the sdf stage first)", e.id, path.display()))?;
                    TrainTarget::Sdf(resample_trilinear(&field, dims)?)
                }
            };
            Ok(TrainCase { id: e.id.clone(), input: network_input(&mask, dims)?, target })
        })
        .collect()
}

/// Trains one arm and writes its parameters and per-epoch loss.
pub fn train(
    config: &ExperimentConfig,
    layout: &Layout,
    arm: Head,
    log: &dyn Fn(&str),
) -> Result<Params<f32>> {
    let cases = training_cases(config, layout, arm)?;
    let train_config = config.train_config()?;
    let total = train_config.epochs;
    let every = (total / 10).max(1);
    let outcome = train_with_progress::<f32>(&config.spec(arm), &train_config, &cases, |epoch, loss| {
        if epoch % every == 0 || epoch == total {
            log(&format!("{arm} epoch {epoch}/{total} loss {loss:.6}"));
        }
    })
    .with_context(|| format!("training {arm}"))?;
    let model = layout.model(arm);
    create_parent(&model)?;
    write_params(&model, &outcome.params)?;
    let mut csv = String::from("epoch,loss\n");
    for (n, loss) in outcome.history.iter().enumerate() {
        writeln!(csv, "{},{loss}", n + 1).unwrap();
    }
    let path = layout.loss_history(arm);
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(outcome.params)
}

/// Thresholding rule of each arm: probability above 0.5, distance below 0.
pub fn segment(arm: Head, raw: &ScalarVolume) -> BinaryVolume {
    match arm {
        Head::Pwc => threshold(raw, 0.5, Sense::Above),
        Head::Pwr => threshold(raw, 0.0, Sense::Below),
    }
}

/// Full-resolution raw output and segmentation for every case of `split`.
pub fn predict(config: &ExperimentConfig, layout: &Layout, arm: Head, split: Split) -> Result<usize> {
    let path = layout.model(arm);
    let params: Params<f32> =
        read_params(&path).with_context(|| format!("reading {} (run the train stage first)", path.display()))?;
    if *params.spec() != config.spec(arm) {
        bail!("{} was trained for {:?}, the config describes {:?}", path.display(), params.spec(), config.spec(arm));
    }
    let manifest = manifest(layout)?;
    let mut n = 0;
    for e in manifest.split(split) {
        let mask = mask_of(layout, e)?;
        let raw = net_predict(&params, &mask.to_scalar()).with_context(|| format!("case {}", e.id))?;
        let seg = segment(arm, &raw);
        write_vol(&layout.raw(arm, &e.id), raw.into())?;
        write_vol(&layout.segmentation(arm, &e.id), seg.into())?;
        n += 1;
    }
    Ok(n)
}

/// Scores both arms on the test split.
pub fn evaluate(config: &ExperimentConfig, layout: &Layout) -> Result<Vec<CaseRow>> {
    let manifest = manifest(layout)?;
    let tests: Vec<&CaseEntry> = manifest.split(Split::Test).collect();
    let missing: Vec<String> = tests
        .iter()
        .flat_map(|e| [Head::Pwc, Head::Pwr].map(|arm| (arm, e)))
        .filter(|(arm, e)| !layout.raw(*arm, &e.id).exists() || !layout.segmentation(*arm, &e.id).exists())
        .map(|(arm, e)| format!("{}/{}", arm, e.id))
        .collect();
    if !missing.is_empty() {
        bail!("missing predictions: {}", missing.join(", "));
    }
    let mut rows = Vec::new();
    for e in tests {
        let truth = mask_of(layout, e)?;
        for arm in [Head::Pwc, Head::Pwr] {
            let metrics = match arm {
                Head::Pwc => {
                    let seg = read_binary(layout.segmentation(arm, &e.id))?;
                    evaluate_case(Prediction::Labelmap(&seg), &truth, &config.eval)
                }
                Head::Pwr => {
                    let raw = read_scalar(layout.raw(arm, &e.id))?;
                    evaluate_case(Prediction::Sdf(&raw), &truth, &config.eval)
                }
            }
            .with_context(|| format!("evaluating {arm}/{}", e.id))?;
            rows.push(CaseRow { id: e.id.clone(), arm, metrics });
        }
    }
    Ok(rows)
}

/// Mesh of a volume file: masks at their 0.5 level; scalar files by the
/// arm's rule (thresholded probability for pwc, zero level for pwr).
pub fn surface(input: &Path, arm: Head) -> Result<TriMesh> {
    let volume = read_volume(input).with_context(|| format!("reading {}", input.display()))?;
    Ok(match (volume, arm) {
        (Volume::Binary(m), _) => extract_surface_binary(&m),
        (Volume::Scalar(f), Head::Pwc) => extract_surface_binary(&segment(Head::Pwc, &f)),
        (Volume::Scalar(f), Head::Pwr) => extract_surface_sdf(&f),
    })
}

/// Stage timings of one seed, seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Timings {
    pub generate: f64,
    pub sdf: f64,
    pub train_pwc: f64,
    pub train_pwr: f64,
    pub predict: f64,
    pub evaluate: f64,
}

/// Every stage for one seed, ending with the written report.
pub fn run_seed(config: &ExperimentConfig, seed: u64, log: &dyn Fn(&str)) -> Result<RunReport> {
    let config = config.for_seed(seed);
    config.validate()?;
    let layout = Layout::new(config.seed_dir(seed));
    let mut timings = Timings::default();

    let t = Instant::now();
    let manifest = generate(&config, &layout)?;
    timings.generate = secs(t);
    log(&format!("seed {seed}: generated {} cases", manifest.entries.len()));

    let t = Instant::now();
    sdf(&config, &layout)?;
    timings.sdf = secs(t);

    for arm in [Head::Pwc, Head::Pwr] {
        let t = Instant::now();
        train(&config, &layout, arm, &|m| log(&format!("seed {seed}: {m}")))?;
        match arm {
            Head::Pwc => timings.train_pwc = secs(t),
            Head::Pwr => timings.train_pwr = secs(t),
        }
    }

    let t = Instant::now();
    for arm in [Head::Pwc, Head::Pwr] {
        predict(&config, &layout, arm, Split::Test)?;
    }
    timings.predict = secs(t);

    let t = Instant::now();
    let rows = evaluate(&config, &layout)?;
    timings.evaluate = secs(t);

    let report = RunReport::new(&config, seed, rows, timings)?;
    report.write(&layout.report_dir())?;
    log(&format!("seed {seed}: done in {:.0} s", report.total_seconds()));
    Ok(report)
}
