use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use roadedge_cli::{eval_cmd, infer_cmd, simulate_cmd, trace_path, train_cmd, RunConfig};

fn config_help() -> String {
    format!(
        "Configuration file keys and their defaults (TOML; unknown keys are rejected):\n\n{}",
        RunConfig::defaults_toml()
    )
}

/// Radar road-boundary detection: simulate, train, infer and evaluate.
#[derive(Parser)]
#[command(name = "roadedge", version, after_long_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a labeled synthetic frame sequence to a JSONL dataset.
    Simulate {
        /// Scenario kind: straight, curved, fork, intersection or urban.
        #[arg(long)]
        kind: String,
        /// Number of 10 Hz frames.
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Scenario and sensor noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; a `.gz` suffix writes gzip.
        #[arg(long)]
        out: PathBuf,
        /// TOML config; only the [radar] section is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the segmentation network; writes the checkpoint and `<stem>.loss.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Train without the distance loss (lambda_dist = 0).
        #[arg(long)]
        no_distance_loss: bool,
        /// Train and infer with default temporal features.
        #[arg(long)]
        no_temporal: bool,
        /// Overrides train.epochs [default: 6].
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides the root seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Segment every frame and fit curves; writes one JSON line per frame.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate one or more checkpoints; writes JSON/CSV reports and SVG plots.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint; repeat for several ablation arms.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        report_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            kind,
            frames,
            seed,
            out,
            config,
        } => simulate_cmd(&kind, frames, seed, &out, &RunConfig::load(config.as_deref())?),
        Command::Train {
            data,
            config,
            out,
            no_distance_loss,
            no_temporal,
            epochs,
            seed,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            cfg.apply_seed(seed);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if no_distance_loss {
                cfg.loss.lambda_dist = 0.0;
            }
            if no_temporal {
                cfg.train.temporal = false;
            }
            let trace = train_cmd(&data, &out, &cfg)?;
            if let Some(last) = trace.last() {
                eprintln!(
                    "trained {} epochs, final mean loss {:.5}; trace in {}",
                    trace.len(),
                    last.total,
                    trace_path(&out).display()
                );
            }
            Ok(())
        }
        Command::Infer {
            data,
            model,
            out,
            config,
        } => infer_cmd(&data, &model, &out, &RunConfig::load(config.as_deref())?),
        Command::Eval {
            data,
            models,
            report_dir,
            config,
        } => {
            let report = eval_cmd(&data, &models, &report_dir, &RunConfig::load(config.as_deref())?)?;
            for a in &report.arms {
                eprintln!(
                    "{}: accuracy {:?}, median chamfer {:?}, median hausdorff {:?}",
                    a.arm, a.accuracy, a.median_chamfer, a.median_hausdorff
                );
            }
            Ok(())
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
