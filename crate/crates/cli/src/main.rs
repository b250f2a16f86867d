//! `wmlab`: run the watermarking pipeline stage by stage.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error, 3 the checked claim did not hold (ownership not proven, or a
//! text that is not a stego).

mod commands;
mod config;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::commands::Layout;
use crate::config::{AttackKind, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "wmlab", version, about = "Black-box watermarking lab for CTC speech recognizers")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: config `out`, then $WMLAB_OUT, then ./wmlab-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the tone-language corpus and the owner clips.
    Datagen,
    /// Train the baseline recognizer.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Hide the message in n stego texts.
    StegoEncode,
    /// Decode stego texts, one per line (default: the encoded stegos).
    StegoDecode { file: Option<PathBuf> },
    /// Build the trigger set and the fine-tuning mixture.
    TriggerSynth,
    /// Fine-tune the baseline on the mixture.
    Embed {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Query a model with the trigger set; exits 0 iff ownership is proven.
    Extract {
        /// Model to query [default: the watermarked model].
        #[arg(long, conflicts_with = "kind")]
        model: Option<PathBuf>,
        /// Query the model left by this attack instead.
        #[arg(long, value_enum)]
        kind: Option<AttackKind>,
    },
    /// Attack the watermarked model and check the owner's mark.
    Attack {
        #[arg(long, value_enum)]
        kind: Option<AttackKind>,
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Merge every report and print a summary table.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Datagen => "datagen",
            Command::Train { .. } => "train",
            Command::StegoEncode => "stego-encode",
            Command::StegoDecode { .. } => "stego-decode",
            Command::TriggerSynth => "trigger-synth",
            Command::Embed { .. } => "embed",
            Command::Extract { .. } => "extract",
            Command::Attack { .. } => "attack",
            Command::Report => "report",
        }
    }
}

fn resolve(cli: &Cli) -> Result<(ExperimentConfig, Layout), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os("WMLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wmlab-out"));
    Ok((cfg, Layout::new(out)))
}

/// Runs one command; `Ok(false)` means it finished but the checked claim failed.
fn run(cmd: &Command, cfg: &ExperimentConfig, layout: &Layout) -> anyhow::Result<bool> {
    std::fs::create_dir_all(&layout.root)?;
    let (report, ok) = match cmd {
        Command::Datagen => (commands::datagen(cfg, layout)?, true),
        Command::Train { epochs } => (commands::train_baseline(cfg, layout, *epochs)?, true),
        Command::StegoEncode => (commands::stego_encode(cfg, layout)?, true),
        Command::StegoDecode { file } => commands::stego_decode(layout, file.as_deref())?,
        Command::TriggerSynth => (commands::trigger_synth(cfg, layout)?, true),
        Command::Embed { epochs } => (commands::embed_watermark(cfg, layout, *epochs)?, true),
        Command::Extract { model, kind } => {
            let (path, name) = match (model, kind) {
                (Some(p), _) => (p.clone(), "extract".to_string()),
                (None, Some(k)) => (layout.attacked(*k), format!("extract-{}", k.name())),
                (None, None) => (layout.watermarked(), "extract".to_string()),
            };
            commands::extract_from(cfg, layout, &path, &name)?
        }
        Command::Attack { kind, sparsity, epochs } => {
            let kind = kind.unwrap_or(cfg.attack.kind);
            (commands::attack(cfg, layout, kind, *sparsity, *epochs)?, true)
        }
        Command::Report => (commands::summarize(layout)?, true),
    };
    print!("{report}");
    Ok(ok)
}

fn log_run(layout: &Layout, args: &str, outcome: &str) {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let line = format!("ts={ts}\targs={args}\toutcome={outcome}\n");
    let written = std::fs::create_dir_all(&layout.root).and_then(|_| {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(layout.run_log())?
            .write_all(line.as_bytes())
    });
    if let Err(e) = written {
        log::warn!("cannot append to {}: {e}", layout.run_log().display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let args = args.join(" ");
    let (cfg, layout) = match resolve(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("wmlab: {e}");
            return ExitCode::from(2);
        }
    };
    log::info!("{} -> {}", cli.command.name(), layout.root.display());
    match run(&cli.command, &cfg, &layout) {
        Ok(true) => {
            log_run(&layout, &args, "ok");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            log_run(&layout, &args, "claim-failed");
            ExitCode::from(3)
        }
        Err(e) => {
            log_run(&layout, &args, "error");
            eprintln!("wmlab {}: {e:#}", cli.command.name());
            if e.downcast_ref::<CliError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
