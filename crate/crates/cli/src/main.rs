use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inctpv::data::TargetMode;
use inctpv_cli::{compare_runs, export_training, generate, run_experiment, time_methods, CliResult, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "inctpv", version, about = "Incremental TpV reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for phantoms and noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Images reconstructed concurrently.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    GroundTruth,
    Incremental,
}

#[derive(Subcommand)]
enum Command {
    /// Write ground truths, observations, and starting guesses.
    Generate(Common),
    /// Reconstruct a dataset with one method and write a run directory.
    Run {
        #[command(flatten)]
        common: Common,
        /// Use identity guess operators for inc_dg.
        #[arg(long)]
        identity_guess: bool,
    },
    /// Align per-image metrics of several runs on the same dataset.
    Compare {
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time several methods; each `--config` is one row.
    Time {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        identity_guess: bool,
    },
    /// Export per-step training pairs and a manifest.
    ExportTraining {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "incremental")]
        mode: Mode,
    },
}

fn load(common: &Common, identity_guess: bool) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        out: common.out.clone(),
        seed: common.seed,
        workers: common.workers,
        identity_guess,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(common) => {
            let dir = generate(&load(&common, false)?)?;
            println!("{}", dir.display());
        }
        Command::Run { common, identity_guess } => {
            let report = run_experiment(&load(&common, identity_guess)?)?;
            for f in &report.failures {
                eprintln!("inctpv: skipped index={} name={} {}", f.index, f.name, f.error);
            }
            println!(
                "{} images={} failed={} dataset={}",
                report.dir.display(),
                report.metrics.len(),
                report.failures.len(),
                report.dataset_hash
            );
        }
        Command::Compare { runs, out } => {
            let labels = compare_runs(&runs, &out)?;
            println!("{} {}", out.display(), labels.join(","));
        }
        Command::Time {
            configs,
            out,
            repeats,
            seed,
            identity_guess,
        } => {
            let cfgs = configs
                .iter()
                .map(|p| {
                    let mut cfg = ExperimentConfig::load(p)?;
                    cfg.apply(&Overrides {
                        seed,
                        identity_guess,
                        ..Default::default()
                    });
                    Ok(cfg)
                })
                .collect::<CliResult<Vec<_>>>()?;
            for row in time_methods(&cfgs, repeats, &out)? {
                println!(
                    "{} mean_s={:.4} std_s={:.4} cp={}",
                    row.label, row.mean_s, row.std_s, row.mean_cp_iterations
                );
            }
        }
        Command::ExportTraining { common, mode } => {
            let mode = match mode {
                Mode::GroundTruth => TargetMode::GroundTruth,
                Mode::Incremental => TargetMode::Incremental,
            };
            let cfg = load(&common, false)?;
            let manifest = export_training(&cfg, mode)?;
            println!("pairs={}", manifest.pairs.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("inctpv: error {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
