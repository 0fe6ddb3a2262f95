//! Combined loss, SGD with momentum, the training loop and evaluation.
//!
//! The loss for a batch of `B` samples with true classes `k_j` is
//! `(1/B) sum_j [ -lambda ln Pm_j[k_j] - (1 - lambda) ln O_j[k_j] ]`, where
//! `O` is the plain softmax prediction and `Pm` the mask-gated one. Log
//! arguments are clamped at `1e-12`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{softmax_values, Graph, Tensor, Var};
use crate::csi::{amplitude, CsiStream};
use crate::error::{Error, Result};
use crate::net::{argmax, forward_batch, ForwardVars, Model};
use crate::volume::{segment_starts, window_input, SegmentationConfig};

pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescales each batch gradient to at most this global L2 norm before the
    /// momentum update; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lambda: 0.5, lr: 0.01, momentum: 0.9, epochs: 10, batch_size: 16, seed: 0, grad_clip: 1.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("learning rate {} must be >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return Err(Error::config(format!("grad_clip {} must be finite and >= 0", self.grad_clip)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be >= 1"));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("lambda {lambda} must lie in [0, 1]")));
    }
    Ok(())
}

/// One-hot ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub one_hot: Vec<f64>,
}

impl GroundTruth {
    pub fn new(class: usize, n_classes: usize) -> Result<Self> {
        if class >= n_classes {
            return Err(Error::validation(format!("class {class} out of range for {n_classes}")));
        }
        let mut one_hot = vec![0.0; n_classes];
        one_hot[class] = 1.0;
        Ok(Self { one_hot })
    }

    pub fn class(&self) -> usize {
        argmax(&self.one_hot)
    }
}

fn check_prob(p: &[f64], what: &str) -> Result<()> {
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 || p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::validation(format!("{what} is not a probability vector")));
    }
    Ok(())
}

/// Batch-mean combined loss over value-level predictions.
pub fn combined_loss(
    truth: &[GroundTruth],
    probs_o: &[Vec<f64>],
    probs_masked: &[Vec<f64>],
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    if truth.is_empty() || truth.len() != probs_o.len() || truth.len() != probs_masked.len() {
        return Err(Error::dim("truth and prediction batches must be non-empty and equal length"));
    }
    let mut total = 0.0;
    for ((g, o), m) in truth.iter().zip(probs_o).zip(probs_masked) {
        if g.one_hot.len() != o.len() || o.len() != m.len() {
            return Err(Error::dim("class counts differ between truth and predictions"));
        }
        check_prob(o, "O")?;
        check_prob(m, "masked prediction")?;
        for ((gj, oj), mj) in g.one_hot.iter().zip(o).zip(m) {
            total -= lambda * gj * mj.max(LOG_CLAMP).ln() + (1.0 - lambda) * gj * oj.max(LOG_CLAMP).ln();
        }
    }
    Ok(total / truth.len() as f64)
}

/// `softmax(logits * gate)`.
pub fn masked_probs(logits: &[f64], gate: &[f64]) -> Result<Vec<f64>> {
    if logits.len() != gate.len() || logits.is_empty() {
        return Err(Error::dim(format!("{} logits vs {} gate factors", logits.len(), gate.len())));
    }
    let gated: Vec<f64> = logits.iter().zip(gate).map(|(l, g)| l * g).collect();
    Ok(softmax_values(&gated))
}

/// `v' = mu v - lr g`, `p' = p + v'`, in place.
pub fn sgd_momentum_step(param: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, mu: f64) {
    for ((p, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v - lr * g;
        *p += *v;
    }
}

/// A network input with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

/// Records the loss of one sample, scaled by `weight`, on `g`.
pub fn sample_loss(g: &mut Graph, fv: &ForwardVars, label: usize, lambda: f64, weight: f64) -> Result<Var> {
    let lm = g.log_pick(fv.masked_probs, label, LOG_CLAMP)?;
    let lo = g.log_pick(fv.probs, label, LOG_CLAMP)?;
    let a = g.scale(lm, -lambda * weight);
    let b = g.scale(lo, -(1.0 - lambda) * weight);
    g.add(a, b)
}

fn check_labels(model: &Model, samples: &[Sample]) -> Result<()> {
    let n = model.config().n_classes;
    if let Some(s) = samples.iter().find(|s| s.label >= n) {
        return Err(Error::validation(format!("label {} out of range for {n} classes", s.label)));
    }
    Ok(())
}

/// Batch-mean loss and its gradient for every model parameter (model order).
pub fn loss_and_grads(model: &Model, batch: &[Sample], lambda: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    check_labels(model, batch)?;
    let weight = 1.0 / batch.len() as f64;
    let per_sample: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .map(|s| {
            let mut g = Graph::new();
            let fv = model.forward_graph(&mut g, &s.input, true)?;
            let loss = sample_loss(&mut g, &fv, s.label, lambda, weight)?;
            g.backward(loss)?;
            let grads = fv
                .params
                .iter()
                .map(|p| g.grad(*p).map_or_else(|| vec![0.0; g.value(*p).len()], <[f64]>::to_vec))
                .collect();
            Ok((g.value(loss).data()[0], grads))
        })
        .collect::<Result<_>>()?;
    // sequential reduction keeps results independent of thread scheduling
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, gs) in iter {
        loss += l;
        for (acc, g) in grads.iter_mut().zip(gs) {
            acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
    Ok((loss, grads))
}

/// Batch-mean loss value only.
pub fn batch_loss(model: &Model, batch: &[Sample], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_labels(model, batch)?;
    let inputs: Vec<Tensor> = batch.iter().map(|s| s.input.clone()).collect();
    let outs = forward_batch(model, &inputs)?;
    let truth = batch
        .iter()
        .map(|s| GroundTruth::new(s.label, model.config().n_classes))
        .collect::<Result<Vec<_>>>()?;
    let o: Vec<_> = outs.iter().map(|x| x.probs.clone()).collect();
    let m: Vec<_> = outs.iter().map(|x| x.masked_probs.clone()).collect();
    combined_loss(&truth, &o, &m, lambda)
}

/// Largest relative error between analytic parameter gradients of the batch
/// loss and central differences with step `eps`, over every parameter entry.
pub fn model_grad_check(model: &Model, batch: &[Sample], lambda: f64, eps: f64) -> Result<f64> {
    let (_, grads) = loss_and_grads(model, batch, lambda)?;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (pi, g) in grads.iter().enumerate() {
        for (k, analytic) in g.iter().enumerate() {
            let original = model.params()[pi].value.data()[k];
            let set = |m: &mut Model, v: f64| {
                m.params_mut().nth(pi).expect("index in range").value.data_mut()[k] = v;
            };
            set(&mut probe, original + eps);
            let plus = batch_loss(&probe, batch, lambda)?;
            set(&mut probe, original - eps);
            let minus = batch_loss(&probe, batch, lambda)?;
            set(&mut probe, original);
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max((analytic - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Momentum SGD state for one model.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(model: &Model, lr: f64, momentum: f64) -> Self {
        let velocity = model.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { lr, momentum, velocity }
    }

    pub fn step(&mut self, model: &mut Model, grads: &[Vec<f64>]) {
        for ((p, g), v) in model.params_mut().zip(grads).zip(&mut self.velocity) {
            sgd_momentum_step(p.value.data_mut(), g, v, self.lr, self.momentum);
        }
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`
/// (no-op when `max_norm` is 0); returns the norm before scaling.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= k);
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_oa: f64,
}

/// Trains with seeded per-epoch shuffling; returns the parameters with the
/// best validation OA (earliest epoch on ties) and the per-epoch history.
pub fn train(
    model: &Model,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::usage("training and validation sets must be non-empty"));
    }
    check_labels(model, train_set)?;
    check_labels(model, val_set)?;

    let mut current = model.clone();
    let mut best = (f64::NEG_INFINITY, model.clone());
    let mut opt = Sgd::new(model, cfg.lr, cfg.momentum);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, mut grads) = loss_and_grads(&current, &batch, cfg.lambda)?;
            clip_grad_norm(&mut grads, cfg.grad_clip);
            loss_sum += loss * batch.len() as f64;
            opt.step(&mut current, &grads);
        }
        let val_oa = evaluate(&current, val_set)?.overall_accuracy;
        let record = EpochRecord { epoch: epoch + 1, train_loss: loss_sum / train_set.len() as f64, val_oa };
        log::info!("epoch {} loss {:.6} val_oa {:.4}", record.epoch, record.train_loss, record.val_oa);
        if val_oa > best.0 {
            best = (val_oa, current.clone());
        }
        history.push(record);
    }
    Ok((best.1, history))
}

/// Classification results: `confusion[true][predicted]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub per_class_accuracy: Vec<f64>,
    pub overall_accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    /// Classes without samples report an accuracy of 0.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let n = confusion.len();
        if n == 0 || confusion.iter().any(|r| r.len() != n) {
            return Err(Error::dim("confusion matrix must be square and non-empty"));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::usage("confusion matrix holds no samples"));
        }
        let trace: u64 = (0..n).map(|i| confusion[i][i]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let count: u64 = row.iter().sum();
                if count == 0 { 0.0 } else { row[i] as f64 / count as f64 }
            })
            .collect();
        Ok(Self { per_class_accuracy, overall_accuracy: trace as f64 / total as f64, confusion })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim("truth and prediction counts differ"));
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::validation(format!("class {} out of range", t.max(p))));
            }
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Predicted classes (argmax of `O`) for each sample.
pub fn predict_all(model: &Model, samples: &[Sample]) -> Result<Vec<usize>> {
    let inputs: Vec<Tensor> = samples.iter().map(|s| s.input.clone()).collect();
    Ok(forward_batch(model, &inputs)?.iter().map(|o| o.predicted()).collect())
}

pub fn evaluate(model: &Model, test_set: &[Sample]) -> Result<Metrics> {
    if test_set.is_empty() {
        return Err(Error::usage("empty evaluation set"));
    }
    check_labels(model, test_set)?;
    let predicted = predict_all(model, test_set)?;
    let truth: Vec<usize> = test_set.iter().map(|s| s.label).collect();
    Metrics::from_predictions(&truth, &predicted, model.config().n_classes)
}

/// Agreement of shifted-window predictions with the unshifted one.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftReport {
    /// `(offset, agreeing windows, windows)` for each offset.
    pub per_offset: Vec<(i64, usize, usize)>,
    pub agreement: f64,
}

/// Base windows start at `max_shift + k (W - overlap)` so every offset in
/// `[-max_shift, max_shift]` stays inside the stream; agreement is pooled over
/// all base windows and offsets (including offset 0).
pub fn shift_report(
    model: &Model,
    stream: &CsiStream,
    cfg: &SegmentationConfig,
    max_shift: usize,
) -> Result<ShiftReport> {
    cfg.validate()?;
    let signal = amplitude(stream)?;
    let span = cfg.window + 2 * max_shift;
    if stream.len() < span {
        return Err(Error::usage(format!(
            "stream of {} packets too short for window {} with shift {max_shift}",
            stream.len(),
            cfg.window
        )));
    }
    let bases: Vec<usize> = segment_starts(stream.len() - 2 * max_shift, cfg.window, cfg.overlap)?
        .into_iter()
        .map(|s| s + max_shift)
        .collect();
    let offsets: Vec<i64> = (-(max_shift as i64)..=max_shift as i64).collect();
    let mut inputs = Vec::with_capacity(bases.len() * offsets.len());
    for &b in &bases {
        for &d in &offsets {
            inputs.push(window_input(&signal, (b as i64 + d) as usize, cfg)?);
        }
    }
    let preds: Vec<usize> = forward_batch(model, &inputs)?.iter().map(|o| o.predicted()).collect();
    let centre = max_shift;
    let mut per_offset: Vec<(i64, usize, usize)> = offsets.iter().map(|&d| (d, 0, 0)).collect();
    for row in preds.chunks(offsets.len()) {
        for (k, p) in row.iter().enumerate() {
            per_offset[k].2 += 1;
            if *p == row[centre] {
                per_offset[k].1 += 1;
            }
        }
    }
    let agree: usize = per_offset.iter().map(|x| x.1).sum();
    let total: usize = per_offset.iter().map(|x| x.2).sum();
    Ok(ShiftReport { per_offset, agreement: agree as f64 / total as f64 })
}

pub fn shift_consistency(
    model: &Model,
    stream: &CsiStream,
    cfg: &SegmentationConfig,
    max_shift: usize,
) -> Result<f64> {
    Ok(shift_report(model, stream, cfg, max_shift)?.agreement)
}
