//! 3D residual network with feature self-attention.
//!
//! Input is a `[C, T, S, A]` tensor: one channel per temporal scale, time as
//! the leading spatial axis, then subcarrier and antenna pair. Each residual
//! block is followed by stride-2 temporal average pooling; the pooled output
//! of every block is projected to `feature_dim` and the projections are the
//! attention inputs `alpha_i`. Scores are `beta_i = phi(chi . alpha_i + b)`,
//! weights are `softmax(beta)`, and the mask is `sum_i w_i alpha_i`.
//!
//! The classifier maps the last block's pooled channels to logits `O`. A
//! gate head maps the mask to one multiplicative factor per logit, giving the
//! second prediction `softmax(O * gate(mask))` used by the combined loss.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreFn {
    Tanh,
    Relu,
    Linear,
}

impl ScoreFn {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            ScoreFn::Tanh => g.tanh(x),
            ScoreFn::Relu => g.relu(x),
            ScoreFn::Linear => x,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ScoreFn::Tanh => 0,
            ScoreFn::Relu => 1,
            ScoreFn::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ScoreFn::Tanh),
            1 => Some(ScoreFn::Relu),
            2 => Some(ScoreFn::Linear),
            _ => None,
        }
    }
}

impl FromStr for ScoreFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(ScoreFn::Tanh),
            "relu" => Ok(ScoreFn::Relu),
            "linear" => Ok(ScoreFn::Linear),
            other => Err(Error::config(format!("unknown score function {other:?}"))),
        }
    }
}

impl fmt::Display for ScoreFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreFn::Tanh => "tanh",
            ScoreFn::Relu => "relu",
            ScoreFn::Linear => "linear",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Full spatiotemporal kernels.
    Stwnn,
    /// Temporal kernel extent forced to 1, channels widened to match parameter count.
    Wnn2d,
}

impl Variant {
    pub fn code(self) -> u8 {
        match self {
            Variant::Stwnn => 0,
            Variant::Wnn2d => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Stwnn),
            1 => Some(Variant::Wnn2d),
            _ => None,
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stwnn" => Ok(Variant::Stwnn),
            "wnn2d" => Ok(Variant::Wnn2d),
            other => Err(Error::config(format!("unknown variant {other:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Stwnn => "stwnn",
            Variant::Wnn2d => "wnn2d",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub n_classes: usize,
    /// Input channels, one per temporal scale.
    pub in_channels: usize,
    pub block_channels: Vec<usize>,
    /// `(k_time, k_sub, k_ant)`; every extent must be odd.
    pub kernel: [usize; 3],
    /// Number of attention inputs; one per residual block.
    pub n_feature_vectors: usize,
    pub feature_dim: usize,
    pub score_fn: ScoreFn,
    pub variant: Variant,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(n_classes: usize, in_channels: usize) -> Self {
        Self {
            n_classes,
            in_channels,
            block_channels: vec![8, 16, 32],
            kernel: [3, 3, 3],
            n_feature_vectors: 3,
            feature_dim: 32,
            score_fn: ScoreFn::Tanh,
            variant: Variant::Stwnn,
            seed: 0,
        }
    }

    /// Replaces the block widths, keeping one attention input per block.
    pub fn with_blocks(mut self, channels: Vec<usize>) -> Self {
        self.n_feature_vectors = channels.len();
        self.block_channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config(format!("n_classes {} must be >= 2", self.n_classes)));
        }
        if self.in_channels == 0 || self.feature_dim == 0 {
            return Err(Error::config("in_channels and feature_dim must be >= 1"));
        }
        if self.block_channels.is_empty() || self.block_channels.contains(&0) {
            return Err(Error::config("block_channels must be non-empty and positive"));
        }
        if self.kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::config(format!("kernel extents {:?} must be odd", self.kernel)));
        }
        if self.n_feature_vectors != self.block_channels.len() {
            return Err(Error::config(format!(
                "n_feature_vectors {} must equal the number of blocks {}",
                self.n_feature_vectors,
                self.block_channels.len()
            )));
        }
        Ok(())
    }

    /// Kernel extents actually used by the variant.
    pub fn effective_kernel(&self) -> [usize; 3] {
        match self.variant {
            Variant::Stwnn => self.kernel,
            Variant::Wnn2d => [1, self.kernel[1], self.kernel[2]],
        }
    }

    /// Block widths actually used: the 2D variant widens its blocks until its
    /// parameter count is as close as possible to the 3D layout's.
    pub fn effective_channels(&self) -> Vec<usize> {
        match self.variant {
            Variant::Stwnn => self.block_channels.clone(),
            Variant::Wnn2d => {
                let target = count_params(self, &self.block_channels, self.kernel);
                let kernel = self.effective_kernel();
                let mut best = (usize::MAX, self.block_channels.clone());
                for step in 100..=400 {
                    let m = step as f64 / 100.0;
                    let widths: Vec<usize> = self
                        .block_channels
                        .iter()
                        .map(|c| ((*c as f64 * m).round() as usize).max(1))
                        .collect();
                    let diff = count_params(self, &widths, kernel).abs_diff(target);
                    if diff < best.0 {
                        best = (diff, widths);
                    }
                }
                best.1
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Uniform { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

struct LayerSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn layer_specs(cfg: &NetworkConfig, widths: &[usize], kernel: [usize; 3]) -> Vec<LayerSpec> {
    let kvol: usize = kernel.iter().product();
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init| specs.push(LayerSpec { name, shape, init });
    let mut c_in = cfg.in_channels;
    for (i, &c_out) in widths.iter().enumerate() {
        let k = |ci| vec![c_out, ci, kernel[0], kernel[1], kernel[2]];
        push(format!("block{i}.conv1.weight"), k(c_in), Init::Uniform { fan_in: c_in * kvol, fan_out: c_out * kvol });
        push(format!("block{i}.conv1.bias"), vec![c_out], Init::Zeros);
        push(format!("block{i}.conv2.weight"), k(c_out), Init::Uniform { fan_in: c_out * kvol, fan_out: c_out * kvol });
        push(format!("block{i}.conv2.bias"), vec![c_out], Init::Zeros);
        if c_in != c_out {
            push(format!("block{i}.shortcut.weight"), vec![c_out, c_in, 1, 1, 1], Init::Uniform { fan_in: c_in, fan_out: c_out });
            push(format!("block{i}.shortcut.bias"), vec![c_out], Init::Zeros);
        }
        push(format!("tap{i}.weight"), vec![cfg.feature_dim, c_out], Init::Uniform { fan_in: c_out, fan_out: cfg.feature_dim });
        push(format!("tap{i}.bias"), vec![cfg.feature_dim], Init::Zeros);
        c_in = c_out;
    }
    let fd = cfg.feature_dim;
    push("attention.chi".into(), vec![1, fd], Init::Uniform { fan_in: fd, fan_out: 1 });
    push("attention.bias".into(), vec![1], Init::Zeros);
    push("classifier.weight".into(), vec![cfg.n_classes, c_in], Init::Uniform { fan_in: c_in, fan_out: cfg.n_classes });
    push("classifier.bias".into(), vec![cfg.n_classes], Init::Zeros);
    push("gate.weight".into(), vec![cfg.n_classes, fd], Init::Uniform { fan_in: fd, fan_out: cfg.n_classes });
    push("gate.bias".into(), vec![cfg.n_classes], Init::Ones);
    specs
}

fn count_params(cfg: &NetworkConfig, widths: &[usize], kernel: [usize; 3]) -> usize {
    layer_specs(cfg, widths, kernel).iter().map(|s| s.shape.iter().product::<usize>()).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Learned weights of one network, in a fixed construction order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: NetworkConfig,
    params: Vec<Param>,
}

pub fn build_model(config: &NetworkConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = layer_specs(config, &config.effective_channels(), config.effective_kernel())
        .into_iter()
        .map(|spec| {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Uniform { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
                }
            };
            Ok(Param { name: spec.name, value: Tensor::new(spec.shape, data)? })
        })
        .collect::<Result<_>>()?;
    Ok(Model { config: config.clone(), params })
}

impl Model {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Replaces every parameter value; shapes and order must match.
    pub fn set_params(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Compatibility(format!(
                "{} tensors supplied for {} parameters",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Compatibility(format!(
                    "{}: expected shape {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    v.shape()
                )));
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    /// Mutable access for the optimizer.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }
}

/// Graph handles of one residual block.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub conv1: (Var, Var),
    pub conv2: (Var, Var),
    pub shortcut: Option<(Var, Var)>,
}

/// `relu(conv2(relu(conv1(x))) + shortcut(x))` with size-preserving padding;
/// the shortcut is identity unless a 1x1x1 projection is supplied.
pub fn residual_block_forward(g: &mut Graph, x: Var, block: &BlockVars) -> Result<Var> {
    let same = |g: &Graph, w: Var| {
        let s = g.shape(w);
        [s[2] / 2, s[3] / 2, s[4] / 2]
    };
    let pad1 = same(g, block.conv1.0);
    let h = g.conv3d(x, block.conv1.0, block.conv1.1, [1; 3], pad1)?;
    let h = g.relu(h);
    let pad2 = same(g, block.conv2.0);
    let h = g.conv3d(h, block.conv2.0, block.conv2.1, [1; 3], pad2)?;
    let skip = match block.shortcut {
        Some((w, b)) => g.conv3d(x, w, b, [1; 3], [0; 3])?,
        None => x,
    };
    let sum = g.add(h, skip)?;
    Ok(g.relu(sum))
}

/// Scores, softmax weights and convex-combination mask over `features`.
pub fn attention_forward(
    g: &mut Graph,
    features: &[Var],
    chi: Var,
    bias: Var,
    score_fn: ScoreFn,
) -> Result<(Var, Var)> {
    if features.is_empty() {
        return Err(Error::usage("attention needs at least one feature vector"));
    }
    let scores = features
        .iter()
        .map(|&a| {
            let s = g.linear(a, chi, bias)?;
            Ok(score_fn.apply(g, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let beta = g.concat(&scores)?;
    let weights = g.softmax(beta);
    let mask = g.weighted_sum(weights, features)?;
    Ok((mask, weights))
}

/// Attention parameters `chi` and `b` as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub chi: Vec<f64>,
    pub b: f64,
}

/// Value-level attention: returns `(mask, weights)`.
pub fn attention(
    features: &[Vec<f64>],
    params: &AttentionParams,
    score_fn: ScoreFn,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if features.is_empty() {
        return Err(Error::usage("attention needs at least one feature vector"));
    }
    let dim = params.chi.len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(Error::dim(format!("every feature vector must have length {dim}")));
    }
    let mut g = Graph::new();
    let feats: Vec<Var> = features.iter().map(|f| g.constant(Tensor::vector(f.clone()))).collect();
    let chi = g.constant(Tensor::new(vec![1, dim], params.chi.clone())?);
    let b = g.constant(Tensor::scalar(params.b));
    let (mask, weights) = attention_forward(&mut g, &feats, chi, b, score_fn)?;
    Ok((g.value(mask).data().to_vec(), g.value(weights).data().to_vec()))
}

/// Graph handles produced by one forward pass.
#[derive(Debug)]
pub struct ForwardVars {
    /// One handle per model parameter, in model order.
    pub params: Vec<Var>,
    pub logits: Var,
    pub probs: Var,
    pub mask: Var,
    pub weights: Var,
    pub gate: Var,
    pub masked_probs: Var,
}

impl Model {
    /// Records the full forward pass on `g`. Parameters are leaves that
    /// require gradients when `trainable`.
    pub fn forward_graph(&self, g: &mut Graph, input: &Tensor, trainable: bool) -> Result<ForwardVars> {
        let cfg = &self.config;
        if input.ndim() != 4 || input.shape()[0] != cfg.in_channels {
            return Err(Error::dim(format!(
                "model expects input [{}, T, S, A], got {:?}",
                cfg.in_channels,
                input.shape()
            )));
        }
        let params: Vec<Var> = self.params.iter().map(|p| g.leaf(p.value.clone(), trainable)).collect();
        let mut it = params.iter().copied();
        let mut next = || it.next().expect("parameter layout matches config");

        let mut x = g.constant(input.clone());
        let mut c_in = cfg.in_channels;
        let mut taps = Vec::with_capacity(cfg.block_channels.len());
        let mut pooled_last = None;
        for c_out in cfg.effective_channels() {
            let conv1 = (next(), next());
            let conv2 = (next(), next());
            let shortcut = (c_in != c_out).then(|| (next(), next()));
            let block = BlockVars { conv1, conv2, shortcut };
            let h = residual_block_forward(g, x, &block)?;
            x = g.temporal_pool(h)?;
            let pooled = g.global_avg_pool(x)?;
            let (tw, tb) = (next(), next());
            taps.push(g.linear(pooled, tw, tb)?);
            pooled_last = Some(pooled);
            c_in = c_out;
        }
        let (chi, ab) = (next(), next());
        let (mask, weights) = attention_forward(g, &taps, chi, ab, cfg.score_fn)?;
        let (cw, cb) = (next(), next());
        let logits = g.linear(pooled_last.expect("at least one block"), cw, cb)?;
        let probs = g.softmax(logits);
        let (gw, gb) = (next(), next());
        let gate = g.linear(mask, gw, gb)?;
        let gated = g.mul(logits, gate)?;
        let masked_probs = g.softmax(gated);
        Ok(ForwardVars { params, logits, probs, mask, weights, gate, masked_probs })
    }
}

/// Values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub mask: Vec<f64>,
    pub weights: Vec<f64>,
    pub masked_probs: Vec<f64>,
}

impl Output {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn forward(model: &Model, input: &Tensor) -> Result<Output> {
    let mut g = Graph::new();
    let v = model.forward_graph(&mut g, input, false)?;
    let vals = |x: Var| g.value(x).data().to_vec();
    Ok(Output {
        logits: vals(v.logits),
        probs: vals(v.probs),
        mask: vals(v.mask),
        weights: vals(v.weights),
        masked_probs: vals(v.masked_probs),
    })
}

/// Independent forward passes over a batch; row order follows `inputs`.
pub fn forward_batch(model: &Model, inputs: &[Tensor]) -> Result<Vec<Output>> {
    inputs.par_iter().map(|x| forward(model, x)).collect()
}

pub fn predict(model: &Model, input: &Tensor) -> Result<usize> {
    Ok(forward(model, input)?.predicted())
}
