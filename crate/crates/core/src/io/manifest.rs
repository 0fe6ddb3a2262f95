use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::write_file;
use crate::csi::{DEFAULT_N_RX, DEFAULT_N_SUB, DEFAULT_N_TX, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// As written in the manifest; relative paths are relative to the
    /// manifest's directory (see [`DatasetManifest::resolve`]).
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Text manifest:
///
/// ```text
/// # comment
/// @n_classes	3
/// @n_tx	3
/// @n_rx	3
/// @n_sub	30
/// @sample_rate_hz	100
/// streams/c0_0000.csi	0	train
/// ```
///
/// Header lines are optional except `@n_classes`; the shape constants default
/// to 3x3 antennas, 30 subcarriers, 100 Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub n_classes: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sub: usize,
    pub sample_rate_hz: f64,
    /// Directory the manifest was read from.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(n_classes: usize) -> Self {
        Self {
            entries: Vec::new(),
            n_classes,
            n_tx: DEFAULT_N_TX,
            n_rx: DEFAULT_N_RX,
            n_sub: DEFAULT_N_SUB,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::validation("manifest declares zero classes"));
        }
        if self.entries.is_empty() {
            return Err(Error::validation("manifest has no entries"));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.label >= self.n_classes {
                return Err(Error::validation(format!(
                    "{}: label {} out of range for {} classes",
                    e.path.display(),
                    e.label,
                    self.n_classes
                )));
            }
            if !seen.insert(&e.path) {
                return Err(Error::validation(format!("duplicate path {}", e.path.display())));
            }
        }
        for need in [Split::Train, Split::Test] {
            if self.split(need).next().is_none() {
                return Err(Error::validation(format!("manifest has no {need} entries")));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# path\tlabel\tsplit\n");
        s.push_str(&format!("@n_classes\t{}\n", self.n_classes));
        s.push_str(&format!("@n_tx\t{}\n", self.n_tx));
        s.push_str(&format!("@n_rx\t{}\n", self.n_rx));
        s.push_str(&format!("@n_sub\t{}\n", self.n_sub));
        s.push_str(&format!("@sample_rate_hz\t{}\n", self.sample_rate_hz));
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\t{}\n", e.path.display(), e.label, e.split));
        }
        s
    }
}

/// Parses manifest text; `origin` is only used in error messages and as the
/// base directory for relative entries.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<DatasetManifest> {
    let err = |line: usize, msg: String| Error::Manifest { path: origin.to_path_buf(), line, msg };
    let mut m = DatasetManifest::new(0);
    m.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut n_classes = None;
    let mut seen = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if let Some(key) = fields[0].strip_prefix('@') {
            if fields.len() != 2 {
                return Err(err(lineno, format!("header @{key} needs exactly one value")));
            }
            let v = fields[1].trim();
            let count = || {
                v.parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| err(lineno, format!("@{key} must be a positive integer, got {v:?}")))
            };
            match key {
                "n_classes" => n_classes = Some(count()?),
                "n_tx" => m.n_tx = count()?,
                "n_rx" => m.n_rx = count()?,
                "n_sub" => m.n_sub = count()?,
                "sample_rate_hz" => {
                    m.sample_rate_hz = v
                        .parse::<f64>()
                        .ok()
                        .filter(|r| r.is_finite() && *r > 0.0)
                        .ok_or_else(|| err(lineno, format!("@sample_rate_hz must be positive, got {v:?}")))?
                }
                _ => return Err(err(lineno, format!("unknown header @{key}"))),
            }
            continue;
        }
        if fields.len() != 3 {
            return Err(err(lineno, format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let n = n_classes.ok_or_else(|| err(lineno, "entry before @n_classes header".into()))?;
        let path = PathBuf::from(fields[0]);
        if fields[0].is_empty() {
            return Err(err(lineno, "empty path".into()));
        }
        let label: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("label {:?} is not a class id", fields[1])))?;
        if label >= n {
            return Err(err(lineno, format!("label {label} out of range for {n} classes")));
        }
        let split: Split = fields[2].trim().parse().map_err(|e| err(lineno, e))?;
        if !seen.insert(path.clone()) {
            return Err(err(lineno, format!("duplicate path {}", path.display())));
        }
        m.entries.push(ManifestEntry { path, label, split });
    }

    let total = text.lines().count();
    m.n_classes = n_classes.ok_or_else(|| err(total, "missing @n_classes header".into()))?;
    if m.entries.is_empty() {
        return Err(err(total, "no entries".into()));
    }
    for need in [Split::Train, Split::Test] {
        if m.split(need).next().is_none() {
            return Err(err(total, format!("no {need} entries")));
        }
    }
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    write_file(path, manifest.to_text().as_bytes())
}
