use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use catwgan_cli::commands::{self, BaselineKind, PrepareMode};
use catwgan_cli::config::ExperimentConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "catwgan", version, about = "Adversarial feature learning for dermoscopy classification")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-class dataset in the raw input layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Crop, augment and pool raw images into a dataset directory.
    Prepare {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "unsup")]
        mode: PrepareMode,
        /// Pool size per class.
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the adversarial model; resumes from the latest checkpoint in --out.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoising-autoencoder baseline.
    TrainDae {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe every checkpoint on a labeled validation set.
    Validate {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        valset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "d1")]
        network: String,
    },
    /// Fit probes on --trainset and report the averaged scores on --testset.
    Eval {
        /// Ensemble list file (one checkpoint dir per line) or a checkpoint dir.
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        trainset: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "d1")]
        network: String,
    },
    /// Sample the generator into a PNG grid.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hand-crafted or autoencoder features through the same probe.
    Baseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        trainset: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { out, per_class, side, seed } => commands::cmd_synth(&out, per_class, side, seed)?,
        Command::Prepare { images, masks, labels, out, mode, per_class, seed } => {
            if let Some(n) = per_class {
                cfg.prepare.per_class = n;
            }
            if let Some(s) = seed {
                cfg.prepare.seed = s;
            }
            let raw = commands::load_raw(&images, &masks, &labels)?;
            commands::cmd_prepare(&raw, mode, &out, &cfg)?;
        }
        Command::Train { data, labeled, out } => {
            print!("{}", toml::to_string(&cfg.train).context("echoing config")?);
            commands::cmd_train(&cfg, &data, labeled.as_deref(), &out)?;
        }
        Command::TrainDae { data, out } => commands::cmd_train_dae(&cfg, &data, &out)?,
        Command::Validate { checkpoints, valset, out, network } => {
            commands::cmd_validate(&cfg, &checkpoints, &valset, &network, &out)?
        }
        Command::Eval { ensemble, trainset, testset, out, network } => {
            let r = commands::cmd_eval(&cfg, &ensemble, &trainset, &testset, &network, &out)?;
            print!("{}", r.to_csv());
        }
        Command::Generate { checkpoint, n, grid, out, seed } => {
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            commands::cmd_generate(&cfg, &checkpoint, n, grid, &out)?;
        }
        Command::Baseline { kind, checkpoint, trainset, testset, out } => {
            let (width, r) = commands::cmd_baseline(&cfg, kind, checkpoint.as_deref(), &trainset, &testset, &out)?;
            println!("feature_width,{width}");
            print!("{}", r.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
