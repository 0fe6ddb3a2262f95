//! `stwnn` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

use crate::error::Result;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "stwnn", version, about = "Spatio-temporal WiFi activity recognition pipeline")]
pub struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled CSI dataset (CSI1 files + manifest).
    Synth(SynthArgs),
    /// Cut CSI streams into multi-scale volumes (VOL1 files + manifest).
    Segment(SegmentArgs),
    /// Train a network on a volume manifest.
    Train(TrainArgs),
    /// Evaluate weights on one split of a volume manifest.
    Eval(EvalArgs),
    /// Probe prediction agreement under small time shifts.
    Shift(ShiftArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Streams per class, split over train/val/test.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stream length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub n_tx: Option<usize>,
    #[arg(long)]
    pub n_rx: Option<usize>,
    #[arg(long)]
    pub n_sub: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct SegmentFlags {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Comma-separated temporal scales, e.g. `1,2,4`.
    #[arg(long)]
    pub scales: Option<String>,
    /// Volume shape after resizing: `sub,time,ant`.
    #[arg(long)]
    pub target_shape: Option<String>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// CSI manifest produced by `synth` (or written by hand).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub seg: SegmentFlags,
}

#[derive(Debug, Args, Default)]
pub struct NetFlags {
    /// Comma-separated residual block widths.
    #[arg(long)]
    pub blocks: Option<String>,
    /// `kd,kh,kw` (odd sizes).
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// tanh, relu or linear.
    #[arg(long)]
    pub score_fn: Option<String>,
    /// stwnn or wnn2d.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub net_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Volume manifest produced by `segment`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output weight file (WGT1).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history table; defaults next to the weights.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Global gradient norm cap; 0 disables.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[command(flatten)]
    pub net: NetFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Directory for `metrics.tsv` and `report.txt`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub net: NetFlags,
}

#[derive(Debug, Args)]
pub struct ShiftArgs {
    /// CSI manifest (raw streams, not volumes).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Agreement table (tab-separated).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_shift: Option<usize>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub seg: SegmentFlags,
    #[command(flatten)]
    pub net: NetFlags,
}

fn overrides(cfg: &mut RunConfig, pairs: &[(&str, Option<String>)]) -> Result<()> {
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    Ok(())
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

impl SegmentFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        overrides(
            cfg,
            &[
                ("segment.window", s(&self.window)),
                ("segment.overlap", s(&self.overlap)),
                ("segment.scales", self.scales.clone()),
                ("segment.target_shape", self.target_shape.clone()),
            ],
        )
    }
}

impl NetFlags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        overrides(
            cfg,
            &[
                ("net.block_channels", self.blocks.clone()),
                ("net.kernel", self.kernel.clone()),
                ("net.feature_dim", s(&self.feature_dim)),
                ("net.score_fn", self.score_fn.clone()),
                ("net.variant", self.variant.clone()),
                ("net.seed", s(&self.net_seed)),
            ],
        )
    }
}

/// Merges defaults, the config file and the subcommand's flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    match &cli.command {
        Command::Synth(a) => overrides(
            &mut cfg,
            &[
                ("synth.classes", s(&a.classes)),
                ("synth.per_class", s(&a.per_class)),
                ("synth.seed", s(&a.seed)),
                ("synth.duration_s", s(&a.duration)),
                ("synth.noise_std", s(&a.noise_std)),
                ("synth.val_fraction", s(&a.val_fraction)),
                ("synth.test_fraction", s(&a.test_fraction)),
                ("synth.n_tx", s(&a.n_tx)),
                ("synth.n_rx", s(&a.n_rx)),
                ("synth.n_sub", s(&a.n_sub)),
                ("synth.sample_rate_hz", s(&a.sample_rate)),
            ],
        )?,
        Command::Segment(a) => a.seg.apply(&mut cfg)?,
        Command::Train(a) => {
            overrides(
                &mut cfg,
                &[
                    ("train.epochs", s(&a.epochs)),
                    ("train.lr", s(&a.lr)),
                    ("train.lambda", s(&a.lambda)),
                    ("train.momentum", s(&a.momentum)),
                    ("train.batch_size", s(&a.batch_size)),
                    ("train.seed", s(&a.seed)),
                    ("train.grad_clip", s(&a.grad_clip)),
                ],
            )?;
            a.net.apply(&mut cfg)?;
        }
        Command::Eval(a) => a.net.apply(&mut cfg)?,
        Command::Shift(a) => {
            overrides(&mut cfg, &[("shift.max_shift", s(&a.max_shift))])?;
            a.seg.apply(&mut cfg)?;
            a.net.apply(&mut cfg)?;
        }
    }
    Ok(cfg)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("STWNN_LOG", "info");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging();
    match resolve_config(&cli).and_then(|cfg| commands::dispatch(&cli.command, &cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() { EXIT_USAGE } else { EXIT_RUNTIME }
        }
    }
}
