use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdgr::harness::{self, ExperimentConfig, Overrides, HYPERPARAMETERS, SWEEP_RATIOS};

/// Continual imitation learning experiments on the PathWorld benchmark.
#[derive(Parser)]
#[command(name = "tdgr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every (method, seed) pair of a configuration.
    Run(RunArgs),
    /// Replay-ratio sweep for t-DGR and DGR.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated replay ratios.
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_RATIOS)]
        ratios: Vec<f64>,
    },
    /// Render SVG figures from a results directory.
    Plot {
        /// Results directory written by `run` or `sweep`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Coverage and compounding-error analyses.
    Analyze {
        #[arg(long, default_value = "out/analysis")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the hyperparameter table: reference values next to the shipped defaults.
    Hyperparams,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs trained in parallel.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Runs only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> tdgr::Result<ExperimentConfig> {
        let overrides = Overrides { output_dir: self.out.clone(), seed: self.seed };
        let cfg = overrides.apply(ExperimentConfig::load(&self.config)?);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit status when some runs failed but their partial results were saved.
const PARTIAL_FAILURE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> tdgr::Result<ExitCode> {
    match command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcome = harness::cmd_run(&cfg, args.workers)?;
            println!("{}", std::fs::read_to_string(cfg.output_dir.join("summary.md"))?);
            println!("{} runs trained, {} reused; results in {}", outcome.trained, outcome.resumed, cfg.output_dir.display());
            Ok(status(outcome.failures().count()))
        }
        Command::Sweep { run, ratios } => {
            let cfg = run.load()?;
            let report = harness::cmd_sweep(&cfg, &ratios, run.workers)?;
            println!("{}", harness::sweep_table(&report.rows));
            Ok(status(report.outcome.failures().count()))
        }
        Command::Plot { out } => {
            for path in harness::cmd_plot(&out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { out, seed } => {
            for path in harness::cmd_analyze(&out, seed)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Hyperparams => {
            println!("| key | reference | shipped | meaning |\n|---|---|---|---|");
            for h in HYPERPARAMETERS {
                println!("| {} | {} | {} | {} |", h.key, h.reference, h.shipped, h.description);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn status(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failures} runs failed; partial results were saved");
        ExitCode::from(PARTIAL_FAILURE)
    }
}
