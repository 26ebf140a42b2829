mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cocsi_core::config::ExperimentConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cocsi", version, about = "Cooperative CSI feedback experiments")]
struct Cli {
    /// Experiment config file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for datasets, checkpoints, CSVs and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Sets both dataset.seed and train.seed; --set entries still win.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override a config key, e.g. --set train.epochs=50. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Zero out wall-clock fields so outputs are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Dataset file [default: <out>/dataset.cocd].
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Model checkpoint [default: <out>/model/best.cocw].
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate the channel dataset.
    GenData,
    /// Train a magnitude or phase network on the dataset.
    Train,
    /// Fine-tune a trained magnitude network on a shifted channel distribution.
    Finetune,
    /// Evaluate a checkpoint on the test split.
    Eval,
    /// Train one model per BPD in eval.bpd_list and seed.
    SweepBpd,
    /// NMSE of a trained magnitude network under uplink bit errors.
    SweepBer,
    /// Search magnitude/phase splits of a fixed bit budget.
    AllocBits,
    /// Export first-layer encoder attention profiles.
    VisualizeWeights,
    /// Run the comparison suite named by eval.suite.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Finetune => "finetune",
            Command::Eval => "eval",
            Command::SweepBpd => "sweep-bpd",
            Command::SweepBer => "sweep-ber",
            Command::AllocBits => "alloc-bits",
            Command::VisualizeWeights => "visualize-weights",
            Command::Compare => "compare",
        }
    }
}

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub data: PathBuf,
    pub model: PathBuf,
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut overrides = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(format!("dataset.seed={seed}"));
        overrides.push(format!("train.seed={seed}"));
    }
    overrides.extend(cli.overrides.iter().cloned());
    if cli.deterministic {
        overrides.push("train.deterministic=true".into());
    }
    Ok(ExperimentConfig::load(cli.config.as_deref(), &overrides)?)
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("COCSI_THREADS") else {
        return Ok(());
    };
    let n = v
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Unsupported(format!("COCSI_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Unsupported(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let cfg = load_config(&cli)?;
    std::fs::create_dir_all(&cli.out).map_err(CliError::io(&cli.out))?;
    let ctx = Context {
        data: cli.data.clone().unwrap_or_else(|| cli.out.join("dataset.cocd")),
        model: cli
            .model
            .clone()
            .unwrap_or_else(|| cli.out.join("model").join("best.cocw")),
        out: cli.out.clone(),
        cfg,
    };
    let artifacts = match cli.command {
        Command::GenData => commands::gen_data(&ctx)?,
        Command::Train => commands::train(&ctx)?,
        Command::Finetune => commands::finetune(&ctx)?,
        Command::Eval => commands::eval(&ctx)?,
        Command::SweepBpd => commands::sweep_bpd(&ctx)?,
        Command::SweepBer => commands::sweep_ber(&ctx)?,
        Command::AllocBits => commands::alloc_bits(&ctx)?,
        Command::VisualizeWeights => commands::visualize_weights(&ctx)?,
        Command::Compare => commands::compare(&ctx)?,
    };
    let manifest = manifest::Manifest {
        command: cli.command.name(),
        cfg: &ctx.cfg,
        artifacts,
    };
    let path = manifest.write(&ctx.out)?;
    for a in &manifest.artifacts {
        println!("{}", a.display());
    }
    log::info!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
