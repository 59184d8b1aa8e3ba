use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ioc_cli::{compare_timing, plot_artifacts, run_experiment, ExperimentConfig, FilterKind};
use ioc_core::benchmarks;
use ioc_core::MeasurementMode;

#[derive(Parser)]
#[command(name = "ioc", version, about = "Online inverse optimal control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate measurements and run a filter over them.
    Run(Overrides),
    /// Run EKF and UKF on the same measurements and compare step times.
    CompareTiming(Overrides),
    /// Render SVG plots from a run directory or CSV file.
    Plot {
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the built-in benchmarks.
    ListBenchmarks,
}

#[derive(Args)]
struct Overrides {
    /// TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    filter: Option<FilterKind>,
    #[arg(long)]
    mode: Option<MeasurementMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Scalar q in Q_t = q I.
    #[arg(long)]
    process_noise: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Output directory; relative paths are resolved against $IOC_OUTPUT_ROOT when set.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Overrides {
    fn apply(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_toml_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.benchmark {
            c.benchmark = v;
            c.system = None;
        }
        if let Some(v) = self.filter {
            c.filter = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if let Some(v) = self.horizon {
            c.horizon = Some(v);
        }
        if let Some(v) = self.process_noise {
            c.process_noise = v;
        }
        if let Some(v) = self.noise_scale {
            c.noise_scale = v;
        }
        if let Some(v) = self.output {
            c.output_dir = v;
        }
        Ok(c)
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
        Command::Run(o) => {
            let a = run_experiment(&o.apply()?)?;
            for t in &a.trials {
                println!("{}", t.estimates.display());
            }
        }
        Command::CompareTiming(o) => {
            let c = compare_timing(&o.apply()?)?;
            print!("{}", c.summary.to_text());
            println!("{}", c.timing_csv.display());
        }
        Command::Plot { input } => {
            for p in plot_artifacts(&input)? {
                println!("{}", p.display());
            }
        }
        Command::ListBenchmarks => {
            for name in benchmarks::names() {
                let spec = benchmarks::by_name(name).expect("listed benchmark builds");
                let m = &spec.model;
                println!(
                    "{name}: n={} m={} N={} T={} R={:e} theta*={:?}",
                    m.state_dim(),
                    m.control_dim(),
                    m.param_dim(),
                    spec.horizon(),
                    spec.noise_variance,
                    spec.ground_truth.as_slice()
                );
            }
        }
    }
    Ok(())
}
