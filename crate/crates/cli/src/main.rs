use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use latentlab::harness::{self, parse_specs, ExperimentConfig, REPORT_DIR_ENV};
use latentlab::training::{LatentLoss, Variant};

/// Polyomino analogy benchmark with a latent-block transformer: data
/// generation, training, latent interventions and collapse diagnostics.
///
/// Exit status: 0 on success, 1 when a stage fails, 2 on bad usage.
#[derive(Parser)]
#[command(name = "latentlab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (sectioned key = value file). Built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; data, init and noise seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long, global = true, env = REPORT_DIR_ENV)]
    report_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and eval splits.
    GenData {
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_eval: Option<usize>,
        /// Overwrite a non-empty data directory.
        #[arg(long)]
        force: bool,
    },
    /// Train one variant and write its checkpoint directory.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        /// Retrain even if this config already has a checkpoint.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint under latent interventions.
    Eval {
        #[command(flatten)]
        ckpt: CheckpointArgs,
        /// `all` or a comma-separated list, e.g. oracle,standard,zeros.
        #[arg(long, default_value = "all")]
        specs: String,
        /// Pause-trained checkpoint for PAUSE_BASELINE.
        #[arg(long)]
        pause_checkpoint: Option<PathBuf>,
        #[arg(long)]
        noise_seed: Option<u64>,
        /// Bypass threshold in percentage points.
        #[arg(long)]
        bypass_threshold: Option<f64>,
    },
    /// Collapse diagnostics of a checkpoint's free-running latents.
    Diagnose {
        #[command(flatten)]
        ckpt: CheckpointArgs,
    },
    /// Summarize every stage's outputs into report.md and run_manifest.json.
    Report,
}

#[derive(Args)]
struct TrainArgs {
    /// LATENT, PAUSE or MASKED_LATENT.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// mse or cosine.
    #[arg(long)]
    latent_loss_type: Option<LatentLoss>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of latent steps K.
    #[arg(long)]
    latent_size: Option<usize>,
}

#[derive(Args)]
struct CheckpointArgs {
    /// Checkpoint directory; defaults to the one `train` writes for the config.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Variant whose default checkpoint to use when --checkpoint is absent.
    #[arg(long, default_value = "LATENT")]
    variant: Variant,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let t = &mut cfg.training;
        if let Some(v) = self.variant {
            t.variant = v;
        }
        if let Some(v) = self.epochs {
            t.num_train_epochs = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.gamma {
            t.gamma = v;
        }
        if let Some(v) = self.latent_loss_type {
            t.latent_loss_type = v;
        }
        if let Some(v) = self.batch_size {
            t.per_device_train_batch_size = v;
        }
        if let Some(v) = self.latent_size {
            cfg.model.latent_size = v;
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = &c.data_dir {
        cfg.paths.data_dir = p.clone();
    }
    if let Some(p) = &c.checkpoint_dir {
        cfg.paths.checkpoint_dir = p.clone();
    }
    if let Some(p) = &c.report_dir {
        cfg.paths.report_dir = p.clone();
    }
    Ok(cfg)
}

fn finish(mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    cfg.sync();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::GenData { n_train, n_eval, force } => {
            if let Some(n) = n_train {
                cfg.data.n_train = n;
            }
            if let Some(n) = n_eval {
                cfg.data.n_eval = n;
            }
            let cfg = finish(cfg)?;
            let m = harness::gen_data(&cfg, force)?;
            println!("{} files in {}", m.files().count(), cfg.paths.data_dir.display());
        }
        Command::Train { train, force } => {
            train.apply(&mut cfg);
            let cfg = finish(cfg)?;
            let out = harness::train_stage(&cfg, force)?;
            if let Some(last) = out.report.epochs.last() {
                println!(
                    "epoch {}: ce {:.4}, oracle acc {:.4}, free-running acc {:.4}",
                    last.epoch, last.mean_ce, last.oracle_acc, last.free_running_acc
                );
            }
            println!("checkpoint: {}", out.dir.display());
        }
        Command::Eval { ckpt, specs, pause_checkpoint, noise_seed, bypass_threshold } => {
            if noise_seed.is_some() {
                cfg.interventions.noise_seed = noise_seed;
            }
            if let Some(t) = bypass_threshold {
                cfg.interventions.bypass_threshold = t;
            }
            let cfg = finish(cfg)?;
            let specs = parse_specs(&specs)?;
            let dir = ckpt.checkpoint.unwrap_or_else(|| cfg.checkpoint_path(ckpt.variant));
            let out = harness::eval_stage(&cfg, &dir, &specs, pause_checkpoint.as_deref())?;
            match &out.summary {
                Some(s) => print!("{}", s.to_markdown()),
                None => {
                    for r in &out.results {
                        println!("{}: {:.4}", r.spec.kind, r.accuracy);
                    }
                }
            }
            println!("results: {}", out.dir.display());
        }
        Command::Diagnose { ckpt } => {
            let cfg = finish(cfg)?;
            let dir = ckpt.checkpoint.unwrap_or_else(|| cfg.checkpoint_path(ckpt.variant));
            let out = harness::diagnose_stage(&cfg, &dir)?;
            let r = &out.report;
            println!(
                "retrieval@1/5/10 {:.1}/{:.1}/{:.1}%  USP {:.1}%  within pred {:.3}  within oracle {:.3}",
                r.retrieval_at_1, r.retrieval_at_5, r.retrieval_at_10, r.usp, r.within_pred, r.within_oracle
            );
            println!("{}", r.collapse_statement());
            println!("results: {}", out.dir.display());
        }
        Command::Report => {
            let cfg = finish(cfg)?;
            println!("{}", harness::report_stage(&cfg)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
