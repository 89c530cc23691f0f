use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sdfseg_core::surfmetrics::{gain, Direction, MetricSet};
use sdfseg_net::Head;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::stages::Timings;

pub const CASES_FILE: &str = "cases.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub id: String,
    pub arm: Head,
    pub metrics: MetricSet,
}

/// Means over the test cases of one arm. Surface distances average the
/// cases where both surfaces exist; `undefined` counts the others.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMeans {
    pub cases: usize,
    pub dice: f64,
    pub contour_dice: f64,
    pub asd: Option<f64>,
    pub rmsd: Option<f64>,
    pub undefined: usize,
}

impl ArmMeans {
    pub fn of(rows: &[CaseRow], arm: Head) -> ArmMeans {
        let rows: Vec<&MetricSet> = rows.iter().filter(|r| r.arm == arm).map(|r| &r.metrics).collect();
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        ArmMeans {
            cases: rows.len(),
            dice: mean(rows.iter().map(|m| m.dice).collect()).unwrap_or(f64::NAN),
            contour_dice: mean(rows.iter().map(|m| m.contour_dice).collect()).unwrap_or(f64::NAN),
            asd: mean(rows.iter().filter_map(|m| m.asd).collect()),
            rmsd: mean(rows.iter().filter_map(|m| m.rmsd).collect()),
            undefined: rows.iter().filter(|m| m.asd.is_none()).count(),
        }
    }
}

/// Gain of PWR over PWC per metric, percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub dice: Option<f64>,
    pub contour_dice: Option<f64>,
    pub asd: Option<f64>,
    pub rmsd: Option<f64>,
}

impl Gains {
    pub fn of(pwc: &ArmMeans, pwr: &ArmMeans) -> Gains {
        let g = |a: Option<f64>, b: Option<f64>, d| gain(a?, b?, d).ok();
        Gains {
            dice: g(Some(pwc.dice), Some(pwr.dice), Direction::HigherBetter),
            contour_dice: g(Some(pwc.contour_dice), Some(pwr.contour_dice), Direction::HigherBetter),
            asd: g(pwc.asd, pwr.asd, Direction::LowerBetter),
            rmsd: g(pwc.rmsd, pwr.rmsd, Direction::LowerBetter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub cases: Vec<CaseRow>,
    pub pwc: ArmMeans,
    pub pwr: ArmMeans,
    pub gains: Gains,
    pub timings: Timings,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig, seed: u64, cases: Vec<CaseRow>, timings: Timings) -> Result<Self> {
        let pwc = ArmMeans::of(&cases, Head::Pwc);
        let pwr = ArmMeans::of(&cases, Head::Pwr);
        Ok(RunReport { seed, config: config.clone(), gains: Gains::of(&pwc, &pwr), pwc, pwr, cases, timings })
    }

    pub fn total_seconds(&self) -> f64 {
        let t = &self.timings;
        t.generate + t.sdf + t.train_pwc + t.train_pwr + t.predict + t.evaluate
    }

    /// PWR has higher contour Dice and lower ASD and RMSD than PWC.
    pub fn pwr_wins(&self) -> bool {
        let lower = |a: Option<f64>, b: Option<f64>| matches!((a, b), (Some(c), Some(r)) if r < c);
        self.pwr.contour_dice > self.pwc.contour_dice
            && lower(self.pwc.asd, self.pwr.asd)
            && lower(self.pwc.rmsd, self.pwr.rmsd)
    }

    /// Writes the per-case CSV, the Markdown table and the full JSON report,
    /// after checking that the stored gains follow from the stored means.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let recomputed = Gains::of(&self.pwc, &self.pwr);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
            (None, None) => true,
            _ => false,
        };
        let g = &self.gains;
        if !(close(g.dice, recomputed.dice)
            && close(g.contour_dice, recomputed.contour_dice)
            && close(g.asd, recomputed.asd)
            && close(g.rmsd, recomputed.rmsd))
        {
            bail!("stored gains {g:?} do not follow from the means ({recomputed:?})");
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let put = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        };
        put(CASES_FILE, cases_csv(&self.cases))?;
        put(SUMMARY_FILE, summary_markdown(self.seed, &self.cases))?;
        put(REPORT_FILE, serde_json::to_string_pretty(self).expect("report serializes") + "\n")?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per case and arm; empty fields where a surface was missing.
pub fn cases_csv(rows: &[CaseRow]) -> String {
    let mut out = String::from("id,arm,dice,contour_dice,asd,rmsd\n");
    for r in rows {
        let m = &r.metrics;
        writeln!(out, "{},{},{},{},{},{}", r.id, r.arm, m.dice, m.contour_dice, opt(m.asd), opt(m.rmsd)).unwrap();
    }
    out
}

pub fn parse_cases_csv(text: &str) -> Result<Vec<CaseRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("id,arm,dice,contour_dice,asd,rmsd") {
        bail!("unexpected CSV header");
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                bail!("line {}: expected 6 fields", n + 2);
            }
            let num = |s: &str| s.parse::<f64>().with_context(|| format!("line {}: bad number {s:?}", n + 2));
            let maybe = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(CaseRow {
                id: f[0].to_string(),
                arm: f[1].parse().map_err(anyhow::Error::msg)?,
                metrics: MetricSet { dice: num(f[2])?, contour_dice: num(f[3])?, asd: maybe(f[4])?, rmsd: maybe(f[5])? },
            })
        })
        .collect()
}

fn fixed(v: Option<f64>, scale: f64, places: usize) -> String {
    v.map(|x| format!("{:.*}", places, x * scale)).unwrap_or_else(|| "n/a".into())
}

fn percent(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}%")).unwrap_or_else(|| "n/a".into())
}

/// Table of means and gains, computed from the per-case rows alone.
pub fn summary_markdown(seed: u64, rows: &[CaseRow]) -> String {
    let pwc = ArmMeans::of(rows, Head::Pwc);
    let pwr = ArmMeans::of(rows, Head::Pwr);
    let g = Gains::of(&pwc, &pwr);
    let mut out = format!("# Seed {seed}\n\nAverage metrics over {} test cases.\n\n", pwc.cases);
    out += "| | PWC | PWR | Gain |\n|---|---:|---:|---:|\n";
    let mut row = |name: &str, a: Option<f64>, b: Option<f64>, gain: Option<f64>, scale, places| {
        writeln!(out, "| {name} | {} | {} | {} |", fixed(a, scale, places), fixed(b, scale, places), percent(gain)).unwrap();
    };
    row("Dice (x100)", Some(pwc.dice), Some(pwr.dice), g.dice, 100.0, 2);
    row("contourDice (x100)", Some(pwc.contour_dice), Some(pwr.contour_dice), g.contour_dice, 100.0, 2);
    row("ASD", pwc.asd, pwr.asd, g.asd, 1.0, 3);
    row("RMSD", pwc.rmsd, pwr.rmsd, g.rmsd, 1.0, 3);
    if pwc.undefined + pwr.undefined > 0 {
        writeln!(
            out,
            "\nSurface distances exclude cases with an empty surface: {} PWC, {} PWR.",
            pwc.undefined, pwr.undefined
        )
        .unwrap();
    }
    out
}

/// Cross-seed summary of several runs.
pub fn aggregate_markdown(reports: &[RunReport]) -> String {
    let mut out = String::from("# Runs\n\n| Seed | contourDice PWC | contourDice PWR | ASD PWC | ASD PWR | RMSD PWC | RMSD PWR | PWR better on all three | Seconds |\n|---:|---:|---:|---:|---:|---:|---:|:---:|---:|\n");
    for r in reports {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {:.0} |",
            r.seed,
            fixed(Some(r.pwc.contour_dice), 100.0, 2),
            fixed(Some(r.pwr.contour_dice), 100.0, 2),
            fixed(r.pwc.asd, 1.0, 3),
            fixed(r.pwr.asd, 1.0, 3),
            fixed(r.pwc.rmsd, 1.0, 3),
            fixed(r.pwr.rmsd, 1.0, 3),
            if r.pwr_wins() { "yes" } else { "no" },
            r.total_seconds()
        )
        .unwrap();
    }
    let wins = reports.iter().filter(|r| r.pwr_wins()).count();
    writeln!(out, "\nPWR better on contour Dice, ASD and RMSD in {wins} of {} runs.", reports.len()).unwrap();
    out
}
