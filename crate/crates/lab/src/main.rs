use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sdfseg_core::shapegen::Split;
use sdfseg_lab::report::{summary_markdown, CASES_FILE};
use sdfseg_lab::{run_all, stages, ExperimentConfig, Layout, RunReport, Timings};
use sdfseg_net::Head;

#[derive(Parser)]
#[command(name = "sdfseg", version, about = "Labelmap vs. signed-distance segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the dataset and training (default: the first configured seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// No progress messages.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arm {
    Pwc,
    Pwr,
}

impl From<Arm> for Head {
    fn from(a: Arm) -> Head {
        match a {
            Arm::Pwc => Head::Pwc,
            Arm::Pwr => Head::Pwr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Draw and voxelize the synthetic dataset.
    Generate(Common),
    /// Signed distance maps of every case.
    Sdf {
        #[command(flatten)]
        common: Common,
        /// Clamp the stored maps to +-TAU (world units).
        #[arg(long)]
        clamp_tau: Option<f64>,
    },
    /// Train one arm on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        arm: Arm,
    },
    /// Full-resolution predictions of one arm.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        arm: Arm,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Score both arms on the test split and write the reports.
    Evaluate(Common),
    /// Export the surface of a volume file as OBJ.
    Surface {
        /// Mask, probability or distance volume.
        input: PathBuf,
        /// Extraction rule for scalar volumes.
        #[arg(long, value_enum, default_value = "pwr")]
        arm: Arm,
        /// OBJ file to write.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Every stage for every configured seed (or just --seed).
    Run(Common),
    /// Print the default config (or the full-scale preset) as JSON.
    Config {
        #[arg(long)]
        full_scale: bool,
    },
}

/// One seed's view of the experiment.
struct SeedRun {
    config: ExperimentConfig,
    seed: u64,
    layout: Layout,
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve(&self) -> Result<SeedRun> {
        let config = self.load()?;
        let seed = config.seeds[0];
        Ok(SeedRun { layout: Layout::new(config.seed_dir(seed)), config: config.for_seed(seed), seed, quiet: self.quiet })
    }
}

fn logger(quiet: bool) -> impl Fn(&str) {
    move |m: &str| {
        if !quiet {
            eprintln!("{m}");
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cx = c.resolve()?;
            let m = stages::generate(&cx.config, &cx.layout)?;
            let train = m.split(Split::Train).count();
            println!("{} training and {} test cases in {}", train, m.entries.len() - train, cx.layout.data().display());
        }
        Command::Sdf { common, clamp_tau } => {
            let mut cx = common.resolve()?;
            if clamp_tau.is_some() {
                cx.config.sdf_clamp = clamp_tau;
                cx.config.validate()?;
            }
            let n = stages::sdf(&cx.config, &cx.layout)?;
            println!("{n} distance maps");
        }
        Command::Train { common, arm } => {
            let cx = common.resolve()?;
            let arm = Head::from(arm);
            stages::train(&cx.config, &cx.layout, arm, &logger(cx.quiet))?;
            println!("wrote {}", cx.layout.model(arm).display());
        }
        Command::Predict { common, arm, split } => {
            let cx = common.resolve()?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let n = stages::predict(&cx.config, &cx.layout, arm.into(), split)?;
            println!("{n} predictions");
        }
        Command::Evaluate(c) => {
            let cx = c.resolve()?;
            let t = Instant::now();
            let rows = stages::evaluate(&cx.config, &cx.layout)?;
            let timings = Timings { evaluate: t.elapsed().as_secs_f64(), ..Timings::default() };
            let report = RunReport::new(&cx.config, cx.seed, rows, timings)?;
            let dir = cx.layout.report_dir();
            report.write(&dir)?;
            print!("{}", summary_markdown(cx.seed, &report.cases));
            eprintln!("per-case values in {}", dir.join(CASES_FILE).display());
        }
        Command::Surface { input, arm, output } => {
            let mesh = stages::surface(&input, arm.into())?;
            if mesh.is_empty() {
                eprintln!("warning: {} has an empty surface", input.display());
            }
            mesh.write_obj(&output).with_context(|| format!("writing {}", output.display()))?;
            println!("{} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
        }
        Command::Run(c) => {
            let reports = run_all(&c.load()?, &logger(c.quiet))?;
            for r in &reports {
                println!("{}", summary_markdown(r.seed, &r.cases));
            }
        }
        Command::Config { full_scale } => {
            let c = if full_scale { ExperimentConfig::full_scale() } else { ExperimentConfig::default() };
            print!("{}", c.to_json());
        }
    }
    Ok(())
}
