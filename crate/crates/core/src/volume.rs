//! Sliding-window segmentation and multi-scale 3D volume construction.
//!
//! A real `[N_S, I, N_T, N_R]` amplitude signal is cut into windows of `W`
//! packets overlapping by `overlap`. Each window is flattened to a
//! `N_S x W x (N_T * N_R)` volume (tx-major antenna pairs), sampled at each
//! temporal stride `tau`, and trilinearly resized to a fixed target shape.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_SCALES: [usize; 3] = [1, 2, 4];
/// `(d_sub, d_time, d_ant)`.
pub const DEFAULT_TARGET: (usize, usize, usize) = (30, 32, 9);
pub const DEFAULT_WINDOW: usize = 32;
pub const DEFAULT_OVERLAP: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub window: usize,
    pub overlap: usize,
    pub scales: Vec<usize>,
    /// `(d_sub, d_time, d_ant)`.
    pub target_shape: (usize, usize, usize),
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            overlap: DEFAULT_OVERLAP,
            scales: DEFAULT_SCALES.to_vec(),
            target_shape: DEFAULT_TARGET,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("window must be >= 1 packet"));
        }
        if self.overlap >= self.window {
            return Err(Error::config(format!(
                "overlap {} must be strictly less than window {}",
                self.overlap, self.window
            )));
        }
        validate_scales(&self.scales, self.window)?;
        let (a, b, c) = self.target_shape;
        if a == 0 || b == 0 || c == 0 {
            return Err(Error::config("target shape dims must be >= 1"));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.window - self.overlap
    }
}

fn validate_scales(scales: &[usize], window: usize) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::config("at least one temporal scale is required"));
    }
    if scales.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::config(format!("scales {scales:?} must be ascending and distinct")));
    }
    if let Some(bad) = scales.iter().find(|&&t| t == 0 || t > window) {
        return Err(Error::config(format!("scale {bad} must lie in 1..={window}")));
    }
    Ok(())
}

/// One multi-scale sample: `[N_S, W', N_T * N_R]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    pub data: Tensor,
    pub scale: usize,
    pub source_segment: usize,
    pub label: Option<usize>,
}

impl Volume3D {
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }
}

/// Start packet of every full window: `k * (W - overlap)`.
pub fn segment_starts(n_packets: usize, window: usize, overlap: usize) -> Result<Vec<usize>> {
    if window == 0 || overlap >= window {
        return Err(Error::config(format!(
            "overlap {overlap} must be strictly less than window {window}"
        )));
    }
    if n_packets < window {
        return Err(Error::InsufficientData(format!(
            "{n_packets} packets cannot fill a window of {window}"
        )));
    }
    let stride = window - overlap;
    let count = (n_packets - window) / stride + 1;
    Ok((0..count).map(|k| k * stride).collect())
}

fn check_signal(signal: &Tensor) -> Result<[usize; 4]> {
    match *signal.shape() {
        [s, i, t, r] => Ok([s, i, t, r]),
        ref other => Err(Error::dim(format!("signal must be [N_S, I, N_T, N_R], got {other:?}"))),
    }
}

/// Copies packets `start..start + window` out of a `[N_S, I, N_T, N_R]` signal.
pub fn extract_window(signal: &Tensor, start: usize, window: usize) -> Result<Tensor> {
    let [ns, ni, nt, nr] = check_signal(signal)?;
    if window == 0 || start + window > ni {
        return Err(Error::InsufficientData(format!(
            "window [{start}, {}) exceeds {ni} packets",
            start + window
        )));
    }
    let pairs = nt * nr;
    let mut out = Vec::with_capacity(ns * window * pairs);
    for s in 0..ns {
        let base = (s * ni + start) * pairs;
        out.extend_from_slice(&signal.data()[base..base + window * pairs]);
    }
    Tensor::new(vec![ns, window, nt, nr], out)
}

/// Cuts the signal into overlapping `[N_S, W, N_T, N_R]` windows; a trailing
/// partial window is dropped.
pub fn segment_stream(signal: &Tensor, cfg: &SegmentationConfig) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    let [_, ni, _, _] = check_signal(signal)?;
    segment_starts(ni, cfg.window, cfg.overlap)?
        .into_iter()
        .map(|start| extract_window(signal, start, cfg.window))
        .collect()
}

/// Flattens the antenna axes (tx-major) of a `[N_S, W, N_T, N_R]` segment.
pub fn build_volume(segment: &Tensor) -> Result<Volume3D> {
    let [ns, w, nt, nr] = check_signal(segment)?;
    let data = segment.clone().reshape(vec![ns, w, nt * nr])?;
    Ok(Volume3D { data, scale: 1, source_segment: 0, label: None })
}

/// Keeps time indices `0, tau, 2 tau, ...` for each scale and flattens each result.
pub fn multiscale_sample(segment: &Tensor, scales: &[usize]) -> Result<Vec<Volume3D>> {
    let [ns, w, nt, nr] = check_signal(segment)?;
    validate_scales(scales, w)?;
    let pairs = nt * nr;
    scales
        .iter()
        .map(|&tau| {
            let kept: Vec<usize> = (0..w).step_by(tau).collect();
            let mut out = Vec::with_capacity(ns * kept.len() * pairs);
            for s in 0..ns {
                for &t in &kept {
                    let base = (s * w + t) * pairs;
                    out.extend_from_slice(&segment.data()[base..base + pairs]);
                }
            }
            Ok(Volume3D {
                data: Tensor::new(vec![ns, kept.len(), pairs], out)?,
                scale: tau,
                source_segment: 0,
                label: None,
            })
        })
        .collect()
}

/// Linear resampling weights along one axis with corner alignment.
fn axis_taps(n_src: usize, n_dst: usize) -> Vec<(usize, usize, f64)> {
    (0..n_dst)
        .map(|u| {
            if n_src == 1 || n_dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = (u * (n_src - 1)) as f64 / (n_dst - 1) as f64;
            let lo = (pos.floor() as usize).min(n_src - 1);
            let hi = (lo + 1).min(n_src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Resamples one axis of a row-major 3D array; `dims` is updated in place.
fn resample_axis(data: &[f64], dims: &mut [usize; 3], axis: usize, n_dst: usize) -> Vec<f64> {
    let taps = axis_taps(dims[axis], n_dst);
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let n_src = dims[axis];
    let mut out = vec![0.0; outer * n_dst * inner];
    for o in 0..outer {
        for (u, &(lo, hi, frac)) in taps.iter().enumerate() {
            let dst = &mut out[(o * n_dst + u) * inner..(o * n_dst + u + 1) * inner];
            let a = &data[(o * n_src + lo) * inner..(o * n_src + lo + 1) * inner];
            let b = &data[(o * n_src + hi) * inner..(o * n_src + hi + 1) * inner];
            for ((d, x), y) in dst.iter_mut().zip(a).zip(b) {
                *d = if frac == 0.0 { *x } else { x * (1.0 - frac) + y * frac };
            }
        }
    }
    dims[axis] = n_dst;
    out
}

/// Trilinear, corner-aligned resize to `(d_sub, d_time, d_ant)`.
pub fn upsample(volume: &Volume3D, target: (usize, usize, usize)) -> Result<Volume3D> {
    let (a, b, c) = target;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::config("upsample target dims must be >= 1"));
    }
    let (s0, s1, s2) = volume.dims();
    if (s0, s1, s2) == target {
        return Ok(volume.clone());
    }
    let mut dims = [s0, s1, s2];
    let mut data = volume.data.data().to_vec();
    for (axis, n) in [a, b, c].into_iter().enumerate() {
        if dims[axis] != n {
            data = resample_axis(&data, &mut dims, axis, n);
        }
    }
    Ok(Volume3D { data: Tensor::new(vec![a, b, c], data)?, ..volume.clone() })
}

/// Per-volume standardization: `(x - mean) / (std + 1e-8)`.
pub fn normalize(volume: &Volume3D) -> Volume3D {
    let x = volume.data.data();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + 1e-8;
    let data = x.iter().map(|v| (v - mean) / denom).collect();
    Volume3D {
        data: Tensor::new(volume.data.shape().to_vec(), data).expect("shape preserved"),
        ..volume.clone()
    }
}

/// Multi-scale, resized and standardized volumes for one segment.
pub fn process_segment(
    segment: &Tensor,
    cfg: &SegmentationConfig,
    source_segment: usize,
    label: Option<usize>,
) -> Result<Vec<Volume3D>> {
    multiscale_sample(segment, &cfg.scales)?
        .iter()
        .map(|v| {
            let mut v = normalize(&upsample(v, cfg.target_shape)?);
            v.source_segment = source_segment;
            v.label = label;
            Ok(v)
        })
        .collect()
}

/// Stacks same-shaped volumes as channels of a `[C, d_time, d_sub, d_ant]`
/// network input (time becomes the leading spatial axis).
pub fn stack_channels(volumes: &[Volume3D]) -> Result<Tensor> {
    let first = volumes.first().ok_or_else(|| Error::usage("no volumes to stack"))?;
    let (ns, nt, na) = first.dims();
    let mut out = Vec::with_capacity(volumes.len() * ns * nt * na);
    for v in volumes {
        if v.dims() != (ns, nt, na) {
            return Err(Error::dim(format!(
                "cannot stack volume {:?} with {:?}",
                v.dims(),
                (ns, nt, na)
            )));
        }
        let d = v.data.data();
        for t in 0..nt {
            for s in 0..ns {
                out.extend_from_slice(&d[(s * nt + t) * na..(s * nt + t + 1) * na]);
            }
        }
    }
    Tensor::new(vec![volumes.len(), nt, ns, na], out)
}

/// Network input for the window starting at `start`.
pub fn window_input(signal: &Tensor, start: usize, cfg: &SegmentationConfig) -> Result<Tensor> {
    let seg = extract_window(signal, start, cfg.window)?;
    stack_channels(&process_segment(&seg, cfg, 0, None)?)
}

/// Network inputs for every segment of `signal`.
pub fn segment_inputs(signal: &Tensor, cfg: &SegmentationConfig) -> Result<Vec<Tensor>> {
    segment_stream(signal, cfg)?
        .iter()
        .map(|seg| stack_channels(&process_segment(seg, cfg, 0, None)?))
        .collect()
}

/// Regroups a flat volume list into one stacked input per source segment,
/// in order of first appearance; scales keep their stored order.
pub fn group_by_segment(volumes: &[Volume3D]) -> Result<Vec<(usize, Tensor)>> {
    let mut groups: Vec<(usize, Vec<Volume3D>)> = Vec::new();
    for v in volumes {
        match groups.iter_mut().find(|(seg, _)| *seg == v.source_segment) {
            Some((_, g)) => g.push(v.clone()),
            None => groups.push((v.source_segment, vec![v.clone()])),
        }
    }
    groups.into_iter().map(|(seg, g)| Ok((seg, stack_channels(&g)?))).collect()
}
