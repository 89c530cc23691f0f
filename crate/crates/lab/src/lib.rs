//! Experiment harness: generate synthetic shapes, compute distance maps,
//! train the labelmap (pwc) and distance-regression (pwr) networks, predict,
//! score, and write per-case and summary reports.

pub mod config;
pub mod report;
pub mod stages;

use std::fs;

use anyhow::{Context, Result};

pub use config::{ExperimentConfig, NetConfig};
pub use report::{ArmMeans, CaseRow, Gains, RunReport};
pub use stages::{Layout, Timings};

pub const AGGREGATE_FILE: &str = "summary.md";

/// Runs every seed of the config and writes the cross-seed summary into the
/// output directory.
pub fn run_all(config: &ExperimentConfig, log: &dyn Fn(&str)) -> Result<Vec<RunReport>> {
    config.validate()?;
    let reports = config
        .seeds
        .iter()
        .map(|&seed| stages::run_seed(config, seed, log))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&config.output_dir).with_context(|| format!("creating {}", config.output_dir.display()))?;
    let path = config.output_dir.join(AGGREGATE_FILE);
    fs::write(&path, report::aggregate_markdown(&reports)).with_context(|| format!("writing {}", path.display()))?;
    Ok(reports)
}
