//! Run configuration: defaults, then a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::csi::{DEFAULT_N_RX, DEFAULT_N_SUB, DEFAULT_N_TX, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};
use crate::net::{NetworkConfig, ScoreFn, Variant};
use crate::train::TrainConfig;
use crate::volume::SegmentationConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub noise_std: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sub: usize,
    pub sample_rate_hz: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 20,
            seed: 0,
            duration_s: 1.0,
            noise_std: 0.1,
            val_fraction: 0.15,
            test_fraction: 0.15,
            n_tx: DEFAULT_N_TX,
            n_rx: DEFAULT_N_RX,
            n_sub: DEFAULT_N_SUB,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl SynthSettings {
    /// `(train, val, test)` streams per class.
    pub fn split_counts(&self) -> Result<(usize, usize, usize)> {
        if self.classes == 0 || self.per_class == 0 {
            return Err(Error::validation("--classes and --per-class must be >= 1"));
        }
        for (name, f) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::config(format!("synth.{name} {f} must lie in [0, 1)")));
            }
        }
        let n = self.per_class as f64;
        let test = ((n * self.test_fraction).round() as usize).max(1);
        let val = (n * self.val_fraction).round() as usize;
        if test + val >= self.per_class {
            return Err(Error::validation(format!(
                "--per-class {} leaves no training streams ({test} test, {val} val)",
                self.per_class
            )));
        }
        Ok((self.per_class - test - val, val, test))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub synth: SynthSettings,
    pub segment: SegmentationConfig,
    /// Explicitly set `net.*` keys; everything else keeps the model default
    /// (or, when loading weights, the stored value).
    pub net: BTreeMap<String, String>,
    pub train: TrainConfig,
    pub max_shift: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthSettings::default(),
            segment: SegmentationConfig::default(),
            net: BTreeMap::new(),
            train: TrainConfig::default(),
            max_shift: 4,
        }
    }
}

pub const KEYS: &[&str] = &[
    "synth.classes",
    "synth.per_class",
    "synth.seed",
    "synth.duration_s",
    "synth.noise_std",
    "synth.val_fraction",
    "synth.test_fraction",
    "synth.n_tx",
    "synth.n_rx",
    "synth.n_sub",
    "synth.sample_rate_hz",
    "segment.window",
    "segment.overlap",
    "segment.scales",
    "segment.target_shape",
    "net.block_channels",
    "net.kernel",
    "net.feature_dim",
    "net.score_fn",
    "net.variant",
    "net.seed",
    "train.lambda",
    "train.lr",
    "train.momentum",
    "train.epochs",
    "train.batch_size",
    "train.seed",
    "train.grad_clip",
    "shift.max_shift",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse(key, p)).collect()
}

fn parse_triple(key: &str, v: &str) -> Result<[usize; 3]> {
    let l = parse_list(key, v)?;
    l.try_into().map_err(|_| Error::config(format!("{key}: expected three comma-separated integers, got {v:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "synth.classes" => self.synth.classes = parse(key, v)?,
            "synth.per_class" => self.synth.per_class = parse(key, v)?,
            "synth.seed" => self.synth.seed = parse(key, v)?,
            "synth.duration_s" => self.synth.duration_s = parse(key, v)?,
            "synth.noise_std" => self.synth.noise_std = parse(key, v)?,
            "synth.val_fraction" => self.synth.val_fraction = parse(key, v)?,
            "synth.test_fraction" => self.synth.test_fraction = parse(key, v)?,
            "synth.n_tx" => self.synth.n_tx = parse(key, v)?,
            "synth.n_rx" => self.synth.n_rx = parse(key, v)?,
            "synth.n_sub" => self.synth.n_sub = parse(key, v)?,
            "synth.sample_rate_hz" => self.synth.sample_rate_hz = parse(key, v)?,
            "segment.window" => self.segment.window = parse(key, v)?,
            "segment.overlap" => self.segment.overlap = parse(key, v)?,
            "segment.scales" => self.segment.scales = parse_list(key, v)?,
            "segment.target_shape" => {
                let [a, b, c] = parse_triple(key, v)?;
                self.segment.target_shape = (a, b, c);
            }
            "net.block_channels" => {
                parse_list(key, v)?;
                self.net.insert(key.into(), v.trim().into());
            }
            "net.kernel" => {
                parse_triple(key, v)?;
                self.net.insert(key.into(), v.trim().into());
            }
            "net.feature_dim" | "net.seed" => {
                parse::<u64>(key, v)?;
                self.net.insert(key.into(), v.trim().into());
            }
            "net.score_fn" => {
                v.trim().parse::<ScoreFn>().map_err(|e| Error::config(format!("{key}: {e}")))?;
                self.net.insert(key.into(), v.trim().into());
            }
            "net.variant" => {
                v.trim().parse::<Variant>().map_err(|e| Error::config(format!("{key}: {e}")))?;
                self.net.insert(key.into(), v.trim().into());
            }
            "train.lambda" => self.train.lambda = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.momentum" => self.train.momentum = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.grad_clip" => self.train.grad_clip = parse(key, v)?,
            "shift.max_shift" => self.max_shift = parse(key, v)?,
            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("{}:{}: expected `key = value`", origin.display(), i + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::config(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Applies the explicitly set `net.*` keys on top of `base`.
    pub fn network(&self, base: NetworkConfig) -> Result<NetworkConfig> {
        let mut c = base;
        for (k, v) in &self.net {
            match k.as_str() {
                "net.block_channels" => c = c.with_blocks(parse_list(k, v)?),
                "net.kernel" => c.kernel = parse_triple(k, v)?,
                "net.feature_dim" => c.feature_dim = parse(k, v)?,
                "net.seed" => c.seed = parse(k, v)?,
                "net.score_fn" => c.score_fn = v.parse()?,
                "net.variant" => c.variant = v.parse()?,
                _ => unreachable!("validated in set"),
            }
        }
        Ok(c)
    }
}
