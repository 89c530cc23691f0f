use std::fs;

use sdfseg_core::shapegen::{GeneratorConfig, Split};
use sdfseg_core::surfmetrics::TriMesh;
use sdfseg_core::volgrid::{read_binary, read_scalar, threshold, write_volume};
use sdfseg_core::{BinaryVolume, GridMeta, Sense};
use sdfseg_lab::report::{parse_cases_csv, summary_markdown, CASES_FILE, SUMMARY_FILE};
use sdfseg_lab::stages::{self, Layout};
use sdfseg_lab::{ExperimentConfig, NetConfig, RunReport, Timings};
use sdfseg_net::{Head, TrainConfig};

fn small(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: GeneratorConfig {
            dims: [24; 3],
            train_per_shape: 1,
            test_per_shape: 1,
            size_range: [3.0, 6.0],
            ..GeneratorConfig::default()
        },
        coarse_dims: [12; 3],
        net: NetConfig { levels: 2, base_channels: 4 },
        train: TrainConfig { epochs: 3, clamp_tau: Some(20.0), ..TrainConfig::default() },
        seeds: vec![5],
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn quiet(_: &str) {}

#[test]
fn generate_counts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(dir.path());
    config.dataset.train_per_shape = 2;
    let layout = Layout::new(dir.path());
    let m = stages::generate(&config, &layout).unwrap();
    assert_eq!((m.split(Split::Train).count(), m.split(Split::Test).count()), (8, 4));
    let files = |d: &std::path::Path| {
        let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let first = files(&layout.data());
    assert_eq!(first.iter().filter(|(n, _)| n.ends_with(".vvol")).count(), 12);
    stages::generate(&config, &layout).unwrap();
    assert_eq!(files(&layout.data()), first);
}

#[test]
fn full_scale_preset_has_76_training_and_24_test_cases() {
    let d = ExperimentConfig::full_scale().dataset;
    assert_eq!((4 * d.train_per_shape, 4 * d.test_per_shape), (76, 24));
    let d = ExperimentConfig::default().dataset;
    assert_eq!((4 * d.train_per_shape, 4 * d.test_per_shape), (32, 16));
}

#[test]
fn sdf_stage_round_trips_masks_and_clamps() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(dir.path());
    let layout = Layout::new(dir.path());
    let m = stages::generate(&config, &layout).unwrap();
    stages::sdf(&config, &layout).unwrap();
    let bytes: Vec<Vec<u8>> = m.entries.iter().map(|e| fs::read(layout.sdf(&e.id)).unwrap()).collect();
    for e in &m.entries {
        let mask = read_binary(layout.data().join(&e.path)).unwrap();
        let sdf = read_scalar(layout.sdf(&e.id)).unwrap();
        assert_eq!(threshold(&sdf, 0.0, Sense::Below), mask);
    }
    stages::sdf(&config, &layout).unwrap();
    let again: Vec<Vec<u8>> = m.entries.iter().map(|e| fs::read(layout.sdf(&e.id)).unwrap()).collect();
    assert_eq!(again, bytes);

    config.sdf_clamp = Some(2.0);
    stages::sdf(&config, &layout).unwrap();
    for e in &m.entries {
        let (lo, hi) = read_scalar(layout.sdf(&e.id)).unwrap().min_max();
        assert!(lo >= -2.0 && hi <= 2.0);
    }
}

#[test]
fn pipeline_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path()).for_seed(5);
    let layout = Layout::new(config.seed_dir(5));
    let m = stages::generate(&config, &layout).unwrap();
    stages::sdf(&config, &layout).unwrap();
    for arm in [Head::Pwc, Head::Pwr] {
        stages::train(&config, &layout, arm, &quiet).unwrap();
        let history = fs::read_to_string(layout.loss_history(arm)).unwrap();
        assert_eq!(history.lines().count(), 1 + config.train.epochs);
        assert_eq!(stages::predict(&config, &layout, arm, Split::Test).unwrap(), 4);
    }
    for e in m.split(Split::Test) {
        let mask = read_binary(layout.data().join(&e.path)).unwrap();
        let prob = read_scalar(layout.raw(Head::Pwc, &e.id)).unwrap();
        assert_eq!(prob.meta(), mask.meta());
        assert!(prob.voxels().iter().all(|v| (0.0..=1.0).contains(v)));
        let dist = read_scalar(layout.raw(Head::Pwr, &e.id)).unwrap();
        assert_eq!(dist.meta(), mask.meta());
        assert_eq!(threshold(&dist, 0.0, Sense::Below), read_binary(layout.segmentation(Head::Pwr, &e.id)).unwrap());
        assert_eq!(threshold(&prob, 0.5, Sense::Above), read_binary(layout.segmentation(Head::Pwc, &e.id)).unwrap());
    }
    let rows = stages::evaluate(&config, &layout).unwrap();
    assert_eq!(rows.len(), 8);
    let report = RunReport::new(&config, 5, rows, Timings::default()).unwrap();
    report.write(&layout.report_dir()).unwrap();
    let csv = fs::read_to_string(layout.report_dir().join(CASES_FILE)).unwrap();
    let md = fs::read_to_string(layout.report_dir().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary_markdown(5, &parse_cases_csv(&csv).unwrap()), md);

    // A model trained for a different network is refused.
    let mut other = config.clone();
    other.net.base_channels = 2;
    assert!(stages::predict(&other, &layout, Head::Pwc, Split::Test).is_err());
}

#[test]
fn missing_predictions_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    let layout = Layout::new(dir.path());
    stages::generate(&config, &layout).unwrap();
    let err = stages::evaluate(&config, &layout).unwrap_err().to_string();
    assert!(err.contains("pwc/test_cuboid_000") && err.contains("pwr/test_cylinder_000"), "{err}");
}

#[test]
fn ground_truth_predictions_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(dir.path());
    let layout = Layout::new(dir.path());
    let m = stages::generate(&config, &layout).unwrap();
    stages::sdf(&config, &layout).unwrap();
    for e in m.split(Split::Test) {
        let mask = read_binary(layout.data().join(&e.path)).unwrap();
        let sdf = read_scalar(layout.sdf(&e.id)).unwrap();
        for (arm, raw) in [(Head::Pwc, mask.to_scalar()), (Head::Pwr, sdf)] {
            fs::create_dir_all(layout.raw(arm, &e.id).parent().unwrap()).unwrap();
            write_volume(layout.raw(arm, &e.id), &raw.into()).unwrap();
            write_volume(layout.segmentation(arm, &e.id), &mask.clone().into()).unwrap();
        }
    }
    let rows = stages::evaluate(&config, &layout).unwrap();
    let report = RunReport::new(&config, 0, rows, Timings::default()).unwrap();
    for means in [report.pwc, report.pwr] {
        assert_eq!((means.dice, means.contour_dice), (1.0, 1.0));
        assert!(means.asd.unwrap() < 1e-9 && means.rmsd.unwrap() < 1e-9);
    }
    let g = report.gains;
    assert_eq!((g.dice, g.contour_dice), (Some(0.0), Some(0.0)));
    let md = summary_markdown(0, &report.cases);
    assert!(md.contains("| Dice (x100) | 100.00 | 100.00 | 0.00% |"), "{md}");
    assert!(md.contains("| ASD | 0.000 | 0.000 |"), "{md}");
}

#[test]
fn surfaces_of_truth_and_background() {
    let dir = tempfile::tempdir().unwrap();
    let meta = GridMeta::unit([10; 3]).unwrap();
    let cube = BinaryVolume::from_fn(meta, |i, j, k| [i, j, k].iter().all(|&c| (3..7).contains(&c)));
    let path = dir.path().join("cube.vvol");
    write_volume(&path, &cube.clone().into()).unwrap();
    let mesh = stages::surface(&path, Head::Pwc).unwrap();
    assert!(mesh.is_closed() && !mesh.is_empty());
    let obj = dir.path().join("cube.obj");
    mesh.write_obj(&obj).unwrap();
    let back = TriMesh::parse_obj(&fs::read_to_string(&obj).unwrap()).unwrap();
    assert_eq!((back.vertices.len(), back.triangles.len()), (mesh.vertices.len(), mesh.triangles.len()));

    write_volume(&path, &BinaryVolume::zeros(meta).into()).unwrap();
    let empty = stages::surface(&path, Head::Pwr).unwrap();
    empty.write_obj(&obj).unwrap();
    assert!(!fs::read_to_string(&obj).unwrap().lines().any(|l| l.starts_with("v ")));
}
