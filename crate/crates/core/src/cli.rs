//! The `mimo-djscc` command line: `train`, `evaluate`, `entropy`, `report`.
//!
//! Every command resolves an [`ExperimentConfig`], takes a lock on the output
//! directory, and writes `config.snapshot` (TOML) and `seed` next to its
//! artifacts:
//!
//! ```text
//! out/config.snapshot  out/seed  out/checkpoints/{best,last}.json
//! out/logs/train.log   out/results/{eval,entropy}.csv  out/plots/*.png
//! ```

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::entropy::subchannel_entropy_sweep;
use crate::error::{Error, Result};
use crate::eval::{emit_report, read_entropy_csv, read_eval_csv, snr_sweep_eval, write_entropy_csv, write_eval_csv};
use crate::train::{Checkpoint, TrainOutput, Trainer};

pub const LOCK_FILE: &str = ".lock";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const SEED_FILE: &str = "seed";

#[derive(Debug, Parser)]
#[command(name = "mimo-djscc", version, about = "Deep JSCC image transmission over MIMO channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a codec; writes checkpoints/ and logs/.
    Train(CommonArgs),
    /// PSNR sweep over test SNR; writes results/eval.csv.
    Evaluate(CheckpointArgs),
    /// Sub-channel entropy sweep; writes results/entropy.csv.
    Entropy(CheckpointArgs),
    /// Render plots from results/*.csv.
    Report(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for training, evaluation and the entropy sweep.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted `key=value` override, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckpointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint to load; defaults to `<out>/checkpoints/best.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

impl CommonArgs {
    /// `--seed` counts as a set of overrides placed before the explicit ones.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut overrides = Vec::new();
        if let Some(seed) = self.seed {
            for key in ["train.seed", "eval.seed", "entropy.seed"] {
                overrides.push(format!("{key}={seed}"));
            }
        }
        overrides.extend(self.overrides.iter().cloned());
        if let Some(out) = &self.out {
            overrides.push(format!("output_dir={}", toml::Value::String(out.display().to_string())));
        }
        ExperimentConfig::resolve(self.config.as_deref(), &overrides)
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare(args: &CommonArgs) -> Result<(ExperimentConfig, OutputLock)> {
    let cfg = args.resolve()?;
    let lock = OutputLock::acquire(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join(SNAPSHOT_FILE), &cfg.to_toml())?;
    write_file(&cfg.output_dir.join(SEED_FILE), &format!("{}\n", cfg.train.seed))?;
    Ok((cfg, lock))
}

fn load_checkpoint(cfg: &ExperimentConfig, explicit: Option<&Path>) -> Result<Checkpoint> {
    let path = explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join("checkpoints").join("best.json"));
    Checkpoint::load(&path)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let (cfg, _lock) = prepare(&args)?;
            let (train_set, _) = cfg.dataset.load()?;
            let system = cfg.train.build_system(cfg.dataset.shape())?;
            let output = TrainOutput {
                checkpoint_dir: Some(cfg.output_dir.join("checkpoints")),
                log_path: Some(cfg.output_dir.join("logs").join("train.log")),
            };
            let outcome = Trainer::new(&cfg.train).output(output).run(system, &train_set)?;
            if let (Some(last), Some(best)) = (outcome.last.history.last(), outcome.best.history.last()) {
                log::info!(
                    "trained {} epochs, best val_loss {:.3} at epoch {}",
                    last.epoch,
                    best.val_loss,
                    best.epoch
                );
            }
            Ok(())
        }
        Command::Evaluate(args) => {
            let (cfg, _lock) = prepare(&args.common)?;
            let system = load_checkpoint(&cfg, args.checkpoint.as_deref())?.system()?;
            let (_, test_set) = cfg.dataset.load()?;
            let results = snr_sweep_eval(&system, &test_set, &cfg.eval)?;
            write_eval_csv(&results, &cfg.output_dir.join("results").join("eval.csv"))
        }
        Command::Entropy(args) => {
            let (cfg, _lock) = prepare(&args.common)?;
            let system = load_checkpoint(&cfg, args.checkpoint.as_deref())?.system()?;
            let (_, test_set) = cfg.dataset.load()?;
            let reports = subchannel_entropy_sweep(&system, &test_set, &cfg.entropy, true)?;
            write_entropy_csv(&reports, &cfg.output_dir.join("results").join("entropy.csv"))
        }
        Command::Report(args) => {
            let (cfg, _lock) = prepare(&args)?;
            let results_dir = cfg.output_dir.join("results");
            let eval_csv = results_dir.join("eval.csv");
            let entropy_csv = results_dir.join("entropy.csv");
            let results = if eval_csv.exists() { read_eval_csv(&eval_csv)? } else { Vec::new() };
            let entropy = if entropy_csv.exists() {
                read_entropy_csv(&entropy_csv)?
            } else {
                Vec::new()
            };
            if results.is_empty() && entropy.is_empty() {
                return Err(Error::Input(format!("no results to report under {}", results_dir.display())));
            }
            emit_report(&results, &entropy, &cfg.output_dir).map(|_| ())
        }
    }
}

/// One-line machine-parsable rendering: `error[<kind>]: <message>`.
pub fn format_error(err: &Error) -> String {
    let msg = err.to_string().replace(['\n', '\r'], " ");
    format!("error[{}]: {}", err.kind(), msg.trim())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors go to stderr as a single line from [`format_error`].
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("{}", format_error(&Error::Usage(first)));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", format_error(&e));
            1
        }
    }
}
