use std::path::{Path, PathBuf};

use super::{Command, EvalArgs, RunConfig, SegmentArgs, ShiftArgs, SynthArgs, TrainArgs};
use crate::csi::{amplitude, synth_stream, synthetic_activity};
use crate::error::{Error, Result};
use crate::io::{
    history_tsv, load_manifest, load_stream, load_volumes, metrics_report, metrics_tsv, read_weights, save_stream,
    save_volumes, save_weights, shift_tsv, write_manifest, DatasetManifest, ManifestEntry, Split,
};
use crate::net::{build_model, Model, NetworkConfig};
use crate::train::{evaluate, shift_report, train, Sample};
use crate::volume::{group_by_segment, process_segment, segment_stream};

pub(super) fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    log::info!("run config: {cfg:?}");
    match cmd {
        Command::Synth(a) => synth(a, cfg),
        Command::Segment(a) => segment(a, cfg),
        Command::Train(a) => train_cmd(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Shift(a) => shift(a, cfg),
    }
}

/// splitmix64 finalizer; decorrelates per-stream seeds from the master seed.
fn mix(seed: u64, class: usize, index: usize) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(1 + ((class as u64) << 24) + index as u64));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn synth(a: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let s = &cfg.synth;
    let (n_train, n_val, _) = s.split_counts()?;
    let mut manifest = DatasetManifest::new(s.classes);
    (manifest.n_tx, manifest.n_rx, manifest.n_sub, manifest.sample_rate_hz) = (s.n_tx, s.n_rx, s.n_sub, s.sample_rate_hz);
    for class in 0..s.classes {
        for k in 0..s.per_class {
            let spec = synthetic_activity(class, s.classes, mix(s.seed, class, k), s.duration_s, s.noise_std, s.n_tx * s.n_rx);
            let stream = synth_stream(&spec, s.n_tx, s.n_rx, s.n_sub, s.sample_rate_hz)?;
            let rel = PathBuf::from(format!("streams/c{class}_{k:04}.csi"));
            save_stream(&a.out.join(&rel), &stream)?;
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            manifest.entries.push(ManifestEntry { path: rel, label: class, split });
        }
    }
    let path = a.out.join("manifest.tsv");
    write_manifest(&path, &manifest)?;
    log::info!("wrote {} streams and {}", manifest.entries.len(), path.display());
    Ok(())
}

fn segment(a: &SegmentArgs, cfg: &RunConfig) -> Result<()> {
    let seg = &cfg.segment;
    seg.validate()?;
    let input = load_manifest(&a.manifest)?;
    let mut out = DatasetManifest { entries: Vec::new(), base_dir: PathBuf::new(), ..input.clone() };
    for (i, entry) in input.entries.iter().enumerate() {
        let path = input.resolve(entry);
        let stream = load_stream(&path)?;
        if (stream.n_tx, stream.n_rx, stream.n_sub) != (input.n_tx, input.n_rx, input.n_sub) {
            return Err(Error::dim(format!(
                "{}: stream is {}x{}x{}, manifest declares {}x{}x{}",
                path.display(),
                stream.n_tx,
                stream.n_rx,
                stream.n_sub,
                input.n_tx,
                input.n_rx,
                input.n_sub
            )));
        }
        let segments = match segment_stream(&amplitude(&stream)?, seg) {
            Ok(s) => s,
            Err(Error::InsufficientData(msg)) => {
                log::warn!("{}: skipped: {msg}", path.display());
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut volumes = Vec::with_capacity(segments.len() * seg.scales.len());
        for (k, s) in segments.iter().enumerate() {
            volumes.extend(process_segment(s, seg, k, Some(entry.label))?);
        }
        log::info!(
            "{}: {} packets -> {} segments, {} volumes",
            path.display(),
            stream.len(),
            segments.len(),
            volumes.len()
        );
        let stem = entry.path.file_stem().map_or_else(|| "stream".into(), |s| s.to_string_lossy().into_owned());
        let rel = PathBuf::from(format!("volumes/{i:05}_{stem}.vol"));
        save_volumes(&a.out.join(&rel), &volumes)?;
        out.entries.push(ManifestEntry { path: rel, label: entry.label, split: entry.split });
    }
    if out.entries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no stream in {} is long enough for window {}",
            a.manifest.display(),
            seg.window
        )));
    }
    let path = a.out.join("manifest.tsv");
    write_manifest(&path, &out)?;
    log::info!("wrote {} volume files and {}", out.entries.len(), path.display());
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse().map_err(Error::Usage)
}

/// One sample per segment of every file in `split`.
fn load_samples(manifest: &DatasetManifest, split: Split) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for entry in manifest.split(split) {
        let path = manifest.resolve(entry);
        let volumes = load_volumes(&path)?;
        if let Some(v) = volumes.iter().find(|v| v.label.is_some_and(|l| l != entry.label)) {
            return Err(Error::validation(format!(
                "{}: volume label {:?} disagrees with manifest label {}",
                path.display(),
                v.label,
                entry.label
            )));
        }
        for (_, input) in group_by_segment(&volumes)? {
            out.push(Sample { input, label: entry.label });
        }
    }
    if let Some(first) = out.first() {
        let shape = first.input.shape().to_vec();
        if let Some(bad) = out.iter().find(|s| s.input.shape() != shape.as_slice()) {
            return Err(Error::dim(format!("mixed input shapes {:?} and {:?}", shape, bad.input.shape())));
        }
    }
    Ok(out)
}

fn train_cmd(a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    cfg.train.validate()?;
    let manifest = load_manifest(&a.manifest)?;
    let train_set = load_samples(&manifest, Split::Train)?;
    let first = train_set.first().ok_or_else(|| Error::usage("training split holds no volumes"))?;
    let net = cfg.network(NetworkConfig::new(manifest.n_classes, first.input.shape()[0]))?;
    let model = build_model(&net)?;
    let mut val_set = load_samples(&manifest, Split::Val)?;
    if val_set.is_empty() {
        log::warn!("no validation entries; selecting the checkpoint on the training split");
        val_set = train_set.clone();
    }
    log::info!(
        "training {} parameters on {} samples ({} validation)",
        model.param_count(),
        train_set.len(),
        val_set.len()
    );
    let (best, history) = train(&model, &train_set, &val_set, &cfg.train)?;
    for r in &history {
        println!("epoch {}\tloss {:.6}\tval_oa {:.4}", r.epoch, r.train_loss, r.val_oa);
    }
    save_weights(&a.out, &best)?;
    let history_path = a.history.clone().unwrap_or_else(|| a.out.with_extension("history.tsv"));
    crate::io::write_text(&history_path, &history_tsv(&history))?;
    log::info!("wrote {} and {}", a.out.display(), history_path.display());
    Ok(())
}

/// Loads weights and checks them against explicit overrides and the data.
fn load_model(path: &Path, cfg: &RunConfig, n_classes: usize, in_channels: usize) -> Result<Model> {
    let model = read_weights(path)?;
    let stored = model.config();
    let expected = cfg.network(stored.clone())?;
    if &expected != stored {
        return Err(Error::Compatibility(format!(
            "{} was trained with {stored:?}, the run requests {expected:?}",
            path.display()
        )));
    }
    if stored.n_classes != n_classes || stored.in_channels != in_channels {
        return Err(Error::Compatibility(format!(
            "{} expects {} classes and {} input channels, the data has {n_classes} and {in_channels}",
            path.display(),
            stored.n_classes,
            stored.in_channels
        )));
    }
    Ok(model)
}

fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let split = parse_split(&a.split)?;
    let manifest = load_manifest(&a.manifest)?;
    let samples = load_samples(&manifest, split)?;
    let first = samples.first().ok_or_else(|| Error::usage(format!("split {split} holds no volumes")))?;
    let model = load_model(&a.weights, cfg, manifest.n_classes, first.input.shape()[0])?;
    let metrics = evaluate(&model, &samples)?;
    let report = metrics_report(&metrics);
    print!("{report}");
    crate::io::write_text(&a.out.join("metrics.tsv"), &metrics_tsv(&metrics))?;
    crate::io::write_text(&a.out.join("report.txt"), &report)?;
    log::info!("OA {:.4} on {} {split} samples", metrics.overall_accuracy, samples.len());
    Ok(())
}

fn shift(a: &ShiftArgs, cfg: &RunConfig) -> Result<()> {
    let split = parse_split(&a.split)?;
    cfg.segment.validate()?;
    let manifest = load_manifest(&a.manifest)?;
    let model = load_model(&a.weights, cfg, manifest.n_classes, cfg.segment.scales.len())?;
    let mut reports = Vec::new();
    for entry in manifest.split(split) {
        let path = manifest.resolve(entry);
        let stream = load_stream(&path)?;
        match shift_report(&model, &stream, &cfg.segment, cfg.max_shift) {
            Ok(r) => reports.push((entry.path.display().to_string(), r)),
            Err(Error::Usage(msg)) | Err(Error::InsufficientData(msg)) => {
                log::warn!("{}: skipped: {msg}", path.display())
            }
            Err(e) => return Err(e),
        }
    }
    if reports.is_empty() {
        return Err(Error::InsufficientData(format!("no {split} stream supports shift {}", cfg.max_shift)));
    }
    let table = shift_tsv(&reports);
    crate::io::write_text(&a.out, &table)?;
    let pooled = table.lines().last().unwrap_or_default();
    let agreement = pooled.rsplit('\t').next().unwrap_or_default();
    println!("shift agreement {agreement} over {} streams (max shift {})", reports.len(), cfg.max_shift);
    Ok(())
}
