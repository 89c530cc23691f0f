use std::fs;

use sdfseg_core::shapegen::GeneratorConfig;
use sdfseg_lab::report::CASES_FILE;
use sdfseg_lab::stages::Layout;
use sdfseg_lab::{run_all, ExperimentConfig, NetConfig};
use sdfseg_net::{Head, TrainConfig};

fn config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: GeneratorConfig { dims: [16; 3], train_per_shape: 1, test_per_shape: 1, size_range: [2.0, 3.5], ..Default::default() },
        coarse_dims: [8; 3],
        net: NetConfig { levels: 2, base_channels: 4 },
        train: TrainConfig { epochs: 2, clamp_tau: Some(20.0), ..TrainConfig::default() },
        seeds: vec![1],
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn identical_runs_give_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(&config(a.path()), &|_| {}).unwrap();
    run_all(&config(b.path()), &|_| {}).unwrap();
    let read = |d: &std::path::Path, f: &str| fs::read(d.join("seed_1").join(f)).unwrap();
    assert_eq!(read(a.path(), &format!("report/{CASES_FILE}")), read(b.path(), &format!("report/{CASES_FILE}")));
    for arm in [Head::Pwc, Head::Pwr] {
        let la = Layout::new(a.path().join("seed_1"));
        let lb = Layout::new(b.path().join("seed_1"));
        assert_eq!(fs::read(la.loss_history(arm)).unwrap(), fs::read(lb.loss_history(arm)).unwrap());
        assert_eq!(fs::read(la.model(arm)).unwrap(), fs::read(lb.model(arm)).unwrap());
    }
}

#[test]
fn arm_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path()).for_seed(1);
    let layout = Layout::new(c.seed_dir(1));
    sdfseg_lab::stages::generate(&c, &layout).unwrap();
    sdfseg_lab::stages::sdf(&c, &layout).unwrap();
    let pwr_first = sdfseg_lab::stages::train(&c, &layout, Head::Pwr, &|_| {}).unwrap();
    let pwc_second = sdfseg_lab::stages::train(&c, &layout, Head::Pwc, &|_| {}).unwrap();
    let pwc_again = sdfseg_lab::stages::train(&c, &layout, Head::Pwc, &|_| {}).unwrap();
    let pwr_again = sdfseg_lab::stages::train(&c, &layout, Head::Pwr, &|_| {}).unwrap();
    assert_eq!(pwc_second, pwc_again);
    assert_eq!(pwr_first, pwr_again);
}

#[test]
fn zero_learning_rate_keeps_the_loss_constant() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path()).for_seed(1);
    c.train.learning_rate = 0.0;
    c.train.epochs = 3;
    let layout = Layout::new(c.seed_dir(1));
    sdfseg_lab::stages::generate(&c, &layout).unwrap();
    sdfseg_lab::stages::sdf(&c, &layout).unwrap();
    for arm in [Head::Pwc, Head::Pwr] {
        sdfseg_lab::stages::train(&c, &layout, arm, &|_| {}).unwrap();
        let text = fs::read_to_string(layout.loss_history(arm)).unwrap();
        let losses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert!(losses.windows(2).all(|w| w[0] == w[1]), "{arm}: {losses:?}");
    }
}
