//! `texscan`: texture defect detection from the command line.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use texscan::Exec;

use crate::config::RunConfig;
use crate::manifest::Manifest;

const DEFAULT_OUT: &str = "texscan-out";

#[derive(Debug, Parser)]
#[command(
    name = "texscan",
    version,
    about = "Texture defect detection with an autoencoder and Fourier high-pass differencing"
)]
struct Cli {
    /// JSON run configuration; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for training, augmentation and corpus generation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 selects the sequential reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory [default: texscan-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Which normals score the template candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holdout {
    /// Normal images of the test split.
    #[default]
    Test,
    /// The training images themselves.
    Train,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic corpus into the output directory.
    Gen,
    /// Train the autoencoder on `<data>/train/good`.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Build a template per training image and keep the best one.
    Templates {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        holdout: Holdout,
    },
    /// Score an image, a folder, or a dataset's test split.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Image file, image folder, or dataset root containing `test/`.
        #[arg(long)]
        input: PathBuf,
        /// Write per-image intermediate images here.
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// AUC over the (tau, th) grid.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare fourier-only, reconstruction-only and combined scoring.
    Ablate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Full experiment: corpus, training, template, sweep, ablation, scores.
    Run {
        /// Existing dataset root; a synthetic corpus is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Repeat the run recorded in a manifest.
    Replay { manifest: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train { .. } => "train",
            Command::Templates { .. } => "templates",
            Command::Detect { .. } => "detect",
            Command::Sweep { .. } => "sweep",
            Command::Ablate { .. } => "ablate",
            Command::Run { .. } => "run",
            Command::Replay { .. } => "replay",
        }
    }

    /// Input paths made absolute so the manifest is usable from anywhere.
    fn resolved(self) -> Result<Self> {
        let abs = |p: PathBuf| -> Result<PathBuf> {
            std::path::absolute(&p).with_context(|| format!("resolving {}", p.display()))
        };
        Ok(match self {
            Command::Train { data } => Command::Train { data: abs(data)? },
            Command::Templates {
                checkpoint,
                data,
                holdout,
            } => Command::Templates {
                checkpoint: abs(checkpoint)?,
                data: abs(data)?,
                holdout,
            },
            Command::Detect {
                checkpoint,
                template,
                input,
                debug_dir,
            } => Command::Detect {
                checkpoint: abs(checkpoint)?,
                template: abs(template)?,
                input: abs(input)?,
                debug_dir: debug_dir.map(abs).transpose()?,
            },
            Command::Sweep {
                checkpoint,
                template,
                data,
            } => Command::Sweep {
                checkpoint: abs(checkpoint)?,
                template: abs(template)?,
                data: abs(data)?,
            },
            Command::Ablate {
                checkpoint,
                template,
                data,
            } => Command::Ablate {
                checkpoint: abs(checkpoint)?,
                template: abs(template)?,
                data: abs(data)?,
            },
            Command::Run { data } => Command::Run {
                data: data.map(abs).transpose()?,
            },
            other => other,
        })
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn init_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("starting worker pool")?;
    Ok(())
}

fn execute(command: Command, config: RunConfig, threads: usize, out: &Path) -> Result<()> {
    config.validate()?;
    init_pool(threads)?;
    let command = command.resolved()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = commands::Context {
        config,
        exec: Exec::from_threads(threads),
        out: out.to_path_buf(),
    };
    match &command {
        Command::Gen => commands::gen(&ctx)?,
        Command::Train { data } => commands::train(&ctx, data)?,
        Command::Templates {
            checkpoint,
            data,
            holdout,
        } => commands::templates(&ctx, checkpoint, data, *holdout)?,
        Command::Detect {
            checkpoint,
            template,
            input,
            debug_dir,
        } => commands::detect(&ctx, checkpoint, template, input, debug_dir.as_deref())?,
        Command::Sweep {
            checkpoint,
            template,
            data,
        } => commands::sweep(&ctx, checkpoint, template, data)?,
        Command::Ablate {
            checkpoint,
            template,
            data,
        } => commands::ablate(&ctx, checkpoint, template, data)?,
        Command::Run { data } => commands::run(&ctx, data.as_deref())?,
        Command::Replay { .. } => unreachable!("replay is dispatched before execute"),
    }
    let path = Manifest::new(command, out, threads, &ctx.config).write(out)?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn real_main(cli: Cli) -> Result<()> {
    if let Command::Replay { manifest } = &cli.command {
        if cli.config.is_some() || cli.seed.is_some() {
            bail!("replay takes its config and seeds from the manifest; drop --config/--seed");
        }
        let m = Manifest::read(manifest)?;
        if let Command::Replay { .. } = m.command {
            bail!(
                "manifest {} records a replay, not a run",
                manifest.display()
            );
        }
        let threads = cli.threads.unwrap_or(m.threads);
        let out = cli.out.unwrap_or(m.out);
        return execute(m.command, m.config, threads, &out);
    }
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    execute(
        cli.command,
        config,
        cli.threads.unwrap_or_else(default_threads),
        &out,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("texscan {name}: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
