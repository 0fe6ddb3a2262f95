//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so
//! wall-clock measurements are not skewed by other tests.
//!
//! `cargo test --test acceptance -- 6 8` runs only criteria 6 and 8.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stwnn_core::autodiff::{grad_check, softmax_values, Graph, Tensor, Var};
use stwnn_core::csi::{
    amplitude, synth_stream, synthetic_activity, ActivitySpec, CsiStream, MotionComponent,
};
use stwnn_core::error::Error;
use stwnn_core::io::{
    decode_stream, decode_volumes, decode_weights, encode_stream, encode_volumes, encode_weights,
};
use stwnn_core::net::{attention, build_model, AttentionParams, Model, NetworkConfig, ScoreFn, Variant};
use stwnn_core::train::{
    combined_loss, evaluate, model_grad_check, shift_report, train, GroundTruth, Sample, TrainConfig,
};
use stwnn_core::volume::{segment_inputs, segment_stream, SegmentationConfig, Volume3D};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries in ±[0.1, 1): keeps relu inputs away from the kink.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar `sum(w * y)` for fixed random `w`, so every output element matters.
fn project(g: &mut Graph, y: Var, seed: u64) -> stwnn_core::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.value(y).len();
    let flat = g.flatten(y);
    let w = g.constant(Tensor::vector((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()));
    let p = g.mul(flat, w)?;
    Ok(g.sum(p))
}

type OpCheck = (&'static str, Tensor, Box<dyn Fn(&mut Graph, Var) -> stwnn_core::Result<Var>>);

fn op_checks(trial: u64) -> Vec<OpCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(7_000 + trial);
    let x4 = away_from_zero(&[2, 4, 3, 3], &mut rng);
    let k = random_tensor(&[2, 2, 3, 2, 3], &mut rng);
    let kb = random_tensor(&[2], &mut rng);
    let v = away_from_zero(&[5], &mut rng);
    let other = random_tensor(&[5], &mut rng);
    let lw = random_tensor(&[3, 5], &mut rng);
    let lb = random_tensor(&[3], &mut rng);
    let s = trial;
    let c = |t: &Tensor| t.clone();
    vec![
        ("conv3d/input", c(&x4), Box::new({
            let (k, kb) = (c(&k), c(&kb));
            move |g, x| {
                let (kv, bv) = (g.constant(k.clone()), g.constant(kb.clone()));
                let y = g.conv3d(x, kv, bv, [1, 2, 1], [1, 0, 1])?;
                project(g, y, s)
            }
        })),
        ("conv3d/kernel", c(&k), Box::new({
            let (x4, kb) = (c(&x4), c(&kb));
            move |g, k| {
                let (xv, bv) = (g.constant(x4.clone()), g.constant(kb.clone()));
                let y = g.conv3d(xv, k, bv, [2, 1, 1], [1, 1, 0])?;
                project(g, y, s)
            }
        })),
        ("conv3d/bias", c(&kb), Box::new({
            let (x4, k) = (c(&x4), c(&k));
            move |g, b| {
                let (xv, kv) = (g.constant(x4.clone()), g.constant(k.clone()));
                let y = g.conv3d(xv, kv, b, [1; 3], [1; 3])?;
                project(g, y, s)
            }
        })),
        ("linear/input", c(&v), Box::new({
            let (lw, lb) = (c(&lw), c(&lb));
            move |g, x| {
                let (wv, bv) = (g.constant(lw.clone()), g.constant(lb.clone()));
                let y = g.linear(x, wv, bv)?;
                project(g, y, s)
            }
        })),
        ("linear/weight", c(&lw), Box::new({
            let (v, lb) = (c(&v), c(&lb));
            move |g, w| {
                let (xv, bv) = (g.constant(v.clone()), g.constant(lb.clone()));
                let y = g.linear(xv, w, bv)?;
                project(g, y, s)
            }
        })),
        ("linear/bias", c(&lb), Box::new({
            let (v, lw) = (c(&v), c(&lw));
            move |g, b| {
                let (xv, wv) = (g.constant(v.clone()), g.constant(lw.clone()));
                let y = g.linear(xv, wv, b)?;
                project(g, y, s)
            }
        })),
        ("relu", c(&v), Box::new(move |g, x| { let y = g.relu(x); project(g, y, s) })),
        ("tanh", c(&v), Box::new(move |g, x| { let y = g.tanh(x); project(g, y, s) })),
        ("softmax", c(&v), Box::new(move |g, x| { let y = g.softmax(x); project(g, y, s) })),
        ("scale", c(&v), Box::new(move |g, x| { let y = g.scale(x, -1.7); project(g, y, s) })),
        ("add", c(&v), Box::new({
            let o = c(&other);
            move |g, x| { let ov = g.constant(o.clone()); let y = g.add(x, ov)?; project(g, y, s) }
        })),
        ("mul", c(&v), Box::new({
            let o = c(&other);
            move |g, x| { let ov = g.constant(o.clone()); let y = g.mul(x, ov)?; project(g, y, s) }
        })),
        ("global_avg_pool", c(&x4), Box::new(move |g, x| { let y = g.global_avg_pool(x)?; project(g, y, s) })),
        ("temporal_pool", c(&x4), Box::new(move |g, x| { let y = g.temporal_pool(x)?; project(g, y, s) })),
        ("concat", c(&v), Box::new({
            let o = c(&other);
            move |g, x| {
                let ov = g.constant(o.clone());
                let t = g.tanh(x);
                let y = g.concat(&[x, ov, t])?;
                project(g, y, s)
            }
        })),
        ("weighted_sum", c(&v), Box::new({
            let o = c(&other);
            move |g, x| {
                let ov = g.constant(o.clone());
                let t = g.tanh(x);
                let sm = g.softmax(x);
                let pick = g.constant(Tensor::new(vec![3, 5], {
                    let mut m = vec![0.0; 15];
                    m[0] = 1.0;
                    m[6] = 1.0;
                    m[12] = 1.0;
                    m
                })?);
                let zb = g.constant(Tensor::zeros(&[3]));
                let w = g.linear(sm, pick, zb)?;
                let y = g.weighted_sum(w, &[x, ov, t])?;
                project(g, y, s)
            }
        })),
        ("log_pick", c(&v), Box::new(move |g, x| {
            let p = g.softmax(x);
            g.log_pick(p, 2, 1e-12)
        })),
    ]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_op = (0.0f64, "");
    for trial in 0..10 {
        for (name, point, f) in op_checks(trial) {
            let err = grad_check(|g, x| f(g, x), &point, 1e-5).unwrap();
            if err > worst_op.0 {
                worst_op = (err, name);
            }
        }
    }
    let mut cfg = NetworkConfig::new(3, 1).with_blocks(vec![2]);
    cfg.feature_dim = 3;
    cfg.seed = 5;
    let model = build_model(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let batch: Vec<Sample> = (0..2)
        .map(|i| Sample { input: away_from_zero(&[1, 4, 6, 9], &mut rng), label: i })
        .collect();
    let worst_model = [0.0, 0.5, 1.0]
        .iter()
        .map(|&lambda| model_grad_check(&model, &batch, lambda, 1e-5).unwrap())
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst_op.0 < 1e-4 && worst_model < 1e-3 && elapsed < Duration::from_secs(120),
        format!(
            "max op rel err {:.2e} ({}), end-to-end {:.2e}, {:.1}s",
            worst_op.0,
            worst_op.1,
            worst_model,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut cases = 0usize;
    let mut mismatches = 0usize;
    for n in 1..=64usize {
        let signal = Tensor::new(vec![1, n, 1, 1], (0..n).map(|t| t as f64).collect()).unwrap();
        for w in 1..=n {
            for ov in 0..w {
                cases += 1;
                let cfg = SegmentationConfig { window: w, overlap: ov, scales: vec![1], target_shape: (1, w, 1) };
                let got: Vec<Vec<f64>> = segment_stream(&signal, &cfg)
                    .unwrap()
                    .iter()
                    .map(|s| s.data().to_vec())
                    .collect();
                let mut want = Vec::new();
                let mut s = 0;
                while s + w <= n {
                    want.push((s..s + w).map(|t| t as f64).collect::<Vec<_>>());
                    s += w - ov;
                }
                if got != want {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over {cases} (I, W, overlap) triples"))
}

fn naive_conv(x: &Tensor, k: &Tensor, b: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> (Vec<usize>, Vec<f64>) {
    let [ci, d, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [co, kd, kh, kw] = [k.shape()[0], k.shape()[2], k.shape()[3], k.shape()[4]];
    let od = (d + 2 * pad[0] - kd) / stride[0] + 1;
    let oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
    let ow = (w + 2 * pad[2] - kw) / stride[2] + 1;
    let mut out = vec![0.0; co * od * oh * ow];
    for o in 0..co {
        for z in 0..od {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        for a in 0..kd {
                            for bb in 0..kh {
                                for cc in 0..kw {
                                    let iz = (z * stride[0] + a) as isize - pad[0] as isize;
                                    let iy = (y * stride[1] + bb) as isize - pad[1] as isize;
                                    let ix = (xo * stride[2] + cc) as isize - pad[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = ((c * d + iz as usize) * h + iy as usize) * w + ix as usize;
                                    let ki = (((o * ci + c) * kd + a) * kh + bb) * kw + cc;
                                    s += x.data()[xi] * k.data()[ki];
                                }
                            }
                        }
                    }
                    out[((o * od + z) * oh + y) * ow + xo] = s;
                }
            }
        }
    }
    (vec![co, od, oh, ow], out)
}

fn criterion_3() -> Outcome {
    // Per axis: extent 1..=6, kernel 1..=3, stride 1..=2, padding 0..=1;
    // all axis combinations, two input and two output channels.
    let mut axis = Vec::new();
    for n in 1..=6usize {
        for k in 1..=3usize {
            for s in 1..=2usize {
                for p in 0..=1usize {
                    if k <= n + 2 * p {
                        axis.push((n, k, s, p));
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut cases, mut worst) = (0usize, 0.0f64);
    for (i, &a) in axis.iter().enumerate() {
        for (j, &b) in axis.iter().enumerate() {
            for (l, &c) in axis.iter().enumerate() {
                // every pair of axis settings appears; the third axis cycles
                if (i + j + l) % 7 != 0 {
                    continue;
                }
                let x = random_tensor(&[2, a.0, b.0, c.0], &mut rng);
                let k = random_tensor(&[2, 2, a.1, b.1, c.1], &mut rng);
                let bias = random_tensor(&[2], &mut rng);
                let (stride, pad) = ([a.2, b.2, c.2], [a.3, b.3, c.3]);
                let mut g = Graph::new();
                let (xv, kv, bv) = (g.constant(x.clone()), g.constant(k.clone()), g.constant(bias.clone()));
                let y = g.conv3d(xv, kv, bv, stride, pad).unwrap();
                let (shape, want) = naive_conv(&x, &k, &bias, stride, pad);
                assert_eq!(g.shape(y), &shape[..]);
                for (p, q) in g.value(y).data().iter().zip(&want) {
                    worst = worst.max((p - q).abs());
                }
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-10, format!("max abs diff {worst:.2e} over {cases} shape/stride/padding cases"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut sum_err, mut hull_violation, mut shift_err) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let n = rng.random_range(1..=8);
        let dim = rng.random_range(1..=16);
        let score_fn = [ScoreFn::Tanh, ScoreFn::Relu, ScoreFn::Linear][case % 3];
        let features: Vec<Vec<f64>> =
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let params = AttentionParams {
            chi: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            b: rng.random_range(-1.0..1.0),
        };
        let (mask, weights) = attention(&features, &params, score_fn).unwrap();
        sum_err = sum_err.max((weights.iter().sum::<f64>() - 1.0).abs());
        for k in 0..dim {
            let lo = features.iter().map(|f| f[k]).fold(f64::INFINITY, f64::min);
            let hi = features.iter().map(|f| f[k]).fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
            hull_violation = hull_violation.max(lo - slack - mask[k]).max(mask[k] - hi - slack);
        }
        let c = rng.random_range(-5.0..5.0);
        let shifted = if score_fn == ScoreFn::Linear {
            attention(&features, &AttentionParams { b: params.b + c, ..params.clone() }, score_fn).unwrap().1
        } else {
            let phi = |z: f64| if score_fn == ScoreFn::Tanh { z.tanh() } else { z.max(0.0) };
            let beta: Vec<f64> = features
                .iter()
                .map(|f| phi(f.iter().zip(&params.chi).map(|(a, b)| a * b).sum::<f64>() + params.b) + c)
                .collect();
            softmax_values(&beta)
        };
        for (a, b) in weights.iter().zip(&shifted) {
            shift_err = shift_err.max((a - b).abs());
        }
    }
    outcome(
        sum_err <= 1e-9 && hull_violation <= 0.0 && shift_err <= 1e-12,
        format!("1000 cases: |sum-1| {sum_err:.1e}, hull violation {hull_violation:.1e}, shift diff {shift_err:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut ce_err, mut lin_err) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n_classes = rng.random_range(2..=6);
        let batch = rng.random_range(1..=8);
        let probs = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            softmax_values(&(0..n_classes).map(|_| rng.random_range(-4.0..4.0)).collect::<Vec<_>>())
        };
        let truth: Vec<GroundTruth> =
            (0..batch).map(|_| GroundTruth::new(rng.random_range(0..n_classes), n_classes).unwrap()).collect();
        let o: Vec<Vec<f64>> = (0..batch).map(|_| probs(&mut rng)).collect();
        let m: Vec<Vec<f64>> = (0..batch).map(|_| probs(&mut rng)).collect();
        let ce = -truth
            .iter()
            .zip(&o)
            .map(|(t, p)| t.one_hot.iter().zip(p).map(|(g, q)| g * q.ln()).sum::<f64>())
            .sum::<f64>()
            / batch as f64;
        let l0 = combined_loss(&truth, &o, &m, 0.0).unwrap();
        let l1 = combined_loss(&truth, &o, &m, 1.0).unwrap();
        ce_err = ce_err.max((l0 - ce).abs());
        let lambda = rng.random_range(0.0..=1.0);
        let l = combined_loss(&truth, &o, &m, lambda).unwrap();
        lin_err = lin_err.max((l - (lambda * l1 + (1.0 - lambda) * l0)).abs());
    }
    outcome(
        ce_err <= 1e-12 && lin_err <= 1e-12,
        format!("lambda=0 vs cross-entropy {ce_err:.1e}, linearity {lin_err:.1e} over 500 batches"),
    )
}

const C6_CLASSES: usize = 3;

fn c6_streams(per_class: usize, seed_base: u64) -> Vec<CsiStream> {
    let mut out = Vec::new();
    for class in 0..C6_CLASSES {
        for k in 0..per_class {
            let seed = seed_base + (class * 10_000 + k) as u64;
            let spec = synthetic_activity(class, C6_CLASSES, seed, 1.0, 0.1, 9);
            out.push(synth_stream(&spec, 3, 3, 30, 100.0).unwrap());
        }
    }
    out
}

fn to_samples(streams: &[CsiStream], cfg: &SegmentationConfig) -> Vec<Sample> {
    streams
        .iter()
        .flat_map(|s| {
            let label = s.label.unwrap();
            segment_inputs(&amplitude(s).unwrap(), cfg).unwrap().into_iter().map(move |input| Sample { input, label })
        })
        .collect()
}

struct C6 {
    model: Model,
    test_streams: Vec<CsiStream>,
    oa: f64,
    per_class: (usize, usize),
    epochs: usize,
    elapsed: Duration,
}

/// Criterion 6's experiment, shared with criterion 8.
fn c6() -> &'static C6 {
    static CELL: OnceLock<C6> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let seg = SegmentationConfig::default();
        // 1 s streams give 5 windows each: 30 streams = 150 samples per class
        let train_set = to_samples(&c6_streams(30, 1), &seg);
        let val_set = to_samples(&c6_streams(4, 500_000), &seg);
        let test_streams = c6_streams(10, 900_000);
        let test_set = to_samples(&test_streams, &seg);
        let model = build_model(&NetworkConfig::new(C6_CLASSES, seg.scales.len())).unwrap();
        let cfg = TrainConfig { epochs: 8, ..TrainConfig::default() };
        let (best, _) = train(&model, &train_set, &val_set, &cfg).unwrap();
        let oa = evaluate(&best, &test_set).unwrap().overall_accuracy;
        C6 {
            model: best,
            test_streams,
            oa,
            per_class: (train_set.len() / C6_CLASSES, test_set.len() / C6_CLASSES),
            epochs: cfg.epochs,
            elapsed: start.elapsed(),
        }
    })
}

fn criterion_6() -> Outcome {
    let r = c6();
    outcome(
        r.oa >= 0.90 && r.elapsed <= Duration::from_secs(15 * 60),
        format!(
            "test OA {:.4} ({} train / {} test per class, {} epochs, {:.0}s)",
            r.oa,
            r.per_class.0,
            r.per_class.1,
            r.epochs,
            r.elapsed.as_secs_f64()
        ),
    )
}

/// Event used by criterion 7: a strong fast motion (`active`) or a faint slow one.
fn event(active: bool, seed: u64) -> ActivitySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = |rng: &mut ChaCha8Rng| (0..9).map(|_| rng.random_range(0.5..1.5)).collect::<Vec<f64>>();
    let (doppler, gain) = if active { (9.0, 0.9) } else { (2.0, 0.08) };
    ActivitySpec {
        class_id: 0,
        duration_s: 0.16,
        motion_components: vec![
            MotionComponent { doppler_hz: 0.0, delay_weight: 1.0, antenna_pattern: pattern(&mut rng) },
            MotionComponent {
                doppler_hz: doppler * rng.random_range(0.9..1.1),
                delay_weight: gain * rng.random_range(0.8..1.2),
                antenna_pattern: pattern(&mut rng),
            },
        ],
        noise_std: 0.03,
        seed,
    }
}

/// 32-packet streams: class 0 is active-then-quiet, class 1 the reverse.
fn order_samples(per_class: usize, seed_base: u64, cfg: &SegmentationConfig) -> Vec<Sample> {
    let mut out = Vec::new();
    for label in 0..2 {
        for k in 0..per_class {
            let seed = seed_base + (label * 10_000 + k) as u64 * 2;
            let active = synth_stream(&event(true, seed), 3, 3, 30, 100.0).unwrap();
            let quiet = synth_stream(&event(false, seed + 1), 3, 3, 30, 100.0).unwrap();
            let (mut first, second) = if label == 0 { (active, quiet) } else { (quiet, active) };
            first.append(&second).unwrap();
            for input in segment_inputs(&amplitude(&first).unwrap(), cfg).unwrap() {
                out.push(Sample { input, label });
            }
        }
    }
    out
}

/// Applies one random permutation of the time axis to every channel.
fn shuffle_time(x: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
    let [c, t, rest] = [x.shape()[0], x.shape()[1], x.shape()[2] * x.shape()[3]];
    let mut perm: Vec<usize> = (0..t).collect();
    perm.shuffle(rng);
    let mut out = Vec::with_capacity(x.len());
    for ch in 0..c {
        for &src in &perm {
            let base = (ch * t + src) * rest;
            out.extend_from_slice(&x.data()[base..base + rest]);
        }
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

fn criterion_7() -> Outcome {
    let seg = SegmentationConfig::default();
    let train_set = order_samples(60, 1, &seg);
    let val_set = order_samples(10, 300_000, &seg);
    let test_set = order_samples(30, 700_000, &seg);
    let model = build_model(&NetworkConfig::new(2, seg.scales.len())).unwrap();
    let cfg = TrainConfig { epochs: 15, ..TrainConfig::default() };
    let (best, _) = train(&model, &train_set, &val_set, &cfg).unwrap();
    let ordered = evaluate(&best, &test_set).unwrap().overall_accuracy;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let shuffled_set: Vec<Sample> = test_set
        .iter()
        .map(|s| Sample { input: shuffle_time(&s.input, &mut rng), label: s.label })
        .collect();
    let shuffled = evaluate(&best, &shuffled_set).unwrap().overall_accuracy;
    outcome(
        ordered >= 0.85 && shuffled <= 0.65,
        format!("ordered OA {ordered:.4}, time-shuffled OA {shuffled:.4} ({} test samples)", test_set.len()),
    )
}

fn criterion_8() -> Outcome {
    let r = c6();
    let seg = SegmentationConfig::default();
    let (mut agree, mut total) = (0usize, 0usize);
    for s in &r.test_streams {
        let rep = shift_report(&r.model, s, &seg, 2).unwrap();
        for &(_, a, t) in &rep.per_offset {
            agree += a;
            total += t;
        }
    }
    let agreement = agree as f64 / total as f64;
    outcome(
        agreement >= 0.90,
        format!("agreement {agreement:.4} ({agree}/{total} windows, offsets -2..=2, {} streams)", r.test_streams.len()),
    )
}

fn typed(e: &Error) -> bool {
    matches!(e, Error::Format(_) | Error::Corrupt(_))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut round_trips, mut rejected, mut failures) = (0usize, 0usize, Vec::new());
    let mut check = |label: &str, r: Result<(), Error>, failures: &mut Vec<String>| match r {
        Err(e) if typed(&e) => rejected += 1,
        Err(e) => failures.push(format!("{label}: untyped error {e}")),
        Ok(()) => failures.push(format!("{label}: accepted")),
    };

    for i in 0..100 {
        // streams
        let (t, r, s, frames) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..8), rng.random_range(1..6));
        let frames_v = (0..frames)
            .map(|f| {
                let h = (0..t * r * s)
                    .map(|_| num_complex::Complex64::new(rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3)))
                    .collect();
                stwnn_core::csi::CsiFrame::new(h, t, r, s, f as u64, f as f64).unwrap()
            })
            .collect();
        let stream = CsiStream::new(frames_v, t, r, s, rng.random_range(1.0..500.0), None).unwrap();
        let bytes = encode_stream(&stream).unwrap();
        let back = decode_stream(&bytes).unwrap();
        let same = stream.frames().iter().zip(back.frames()).all(|(a, b)| {
            a.h.iter().zip(&b.h).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
        }) && back.sample_rate_hz.to_bits() == stream.sample_rate_hz.to_bits();
        if same { round_trips += 1 } else { failures.push(format!("stream {i} round trip")) }

        // volume lists of mixed shapes
        let vols: Vec<Volume3D> = (0..rng.random_range(0..5))
            .map(|k| {
                let d = [rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5)];
                Volume3D {
                    data: random_tensor(&d, &mut rng),
                    scale: rng.random_range(1..5),
                    source_segment: k,
                    label: if rng.random_bool(0.5) { Some(rng.random_range(0..9)) } else { None },
                }
            })
            .collect();
        let vbytes = encode_volumes(&vols).unwrap();
        if decode_volumes(&vbytes).unwrap() == vols { round_trips += 1 } else { failures.push(format!("volumes {i} round trip")) }

        // weights of random small configs
        let mut cfg = NetworkConfig::new(rng.random_range(2..5), rng.random_range(1..3))
            .with_blocks((0..rng.random_range(1..3)).map(|_| rng.random_range(1..4)).collect());
        cfg.kernel = [[1, 3][rng.random_range(0..2)], [1, 3][rng.random_range(0..2)], 1];
        cfg.feature_dim = rng.random_range(1..5);
        cfg.score_fn = [ScoreFn::Tanh, ScoreFn::Relu, ScoreFn::Linear][rng.random_range(0..3)];
        cfg.variant = if rng.random_bool(0.3) { Variant::Wnn2d } else { Variant::Stwnn };
        cfg.seed = rng.random();
        let model = build_model(&cfg).unwrap();
        let wbytes = encode_weights(&model).unwrap();
        let wback = decode_weights(&wbytes).unwrap();
        let same = wback.config() == model.config()
            && model.params().iter().zip(wback.params()).all(|(a, b)| {
                a.name == b.name && a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            });
        if same { round_trips += 1 } else { failures.push(format!("weights {i} round trip")) }

        // truncation: every offset for the first payloads, random offsets after
        for (name, buf, decode) in [
            ("stream", &bytes, &(|b: &[u8]| decode_stream(b).map(|_| ())) as &dyn Fn(&[u8]) -> Result<(), Error>),
            ("volumes", &vbytes, &|b: &[u8]| decode_volumes(b).map(|_| ())),
            ("weights", &wbytes, &|b: &[u8]| decode_weights(b).map(|_| ())),
        ] {
            let cuts: Vec<usize> = if i < 5 {
                (0..buf.len()).collect()
            } else {
                (0..10).map(|_| rng.random_range(0..buf.len())).collect()
            };
            for cut in cuts {
                check(&format!("{name} {i} cut {cut}"), decode(&buf[..cut]), &mut failures);
            }
            let mut long = buf.clone();
            long.extend_from_slice(&[0, 1, 2]);
            check(&format!("{name} {i} trailing"), decode(&long), &mut failures);
            let mut bad = buf.clone();
            bad[rng.random_range(0..4)] ^= 0x20;
            check(&format!("{name} {i} magic"), decode(&bad), &mut failures);
        }

        // header fields that contradict the body
        let mut b = bytes.clone();
        b[16..24].copy_from_slice(&(frames as u64 + 1 + rng.random_range(0..1000)).to_le_bytes());
        check(&format!("stream {i} frame count"), decode_stream(&b).map(|_| ()), &mut failures);
        let mut b = bytes.clone();
        b[12..16].copy_from_slice(&0u32.to_le_bytes());
        check(&format!("stream {i} zero subcarriers"), decode_stream(&b).map(|_| ()), &mut failures);
        let mut b = vbytes.clone();
        b[4..12].copy_from_slice(&(vols.len() as u64 + 1).to_le_bytes());
        check(&format!("volumes {i} count"), decode_volumes(&b).map(|_| ()), &mut failures);
        let mut b = wbytes.clone();
        b[4..8].copy_from_slice(&2u32.to_le_bytes());
        check(&format!("weights {i} version"), decode_weights(&b).map(|_| ()), &mut failures);
        let mut b = wbytes.clone();
        let n_classes = u32::from_le_bytes(b[8..12].try_into().unwrap());
        b[8..12].copy_from_slice(&(n_classes + 1).to_le_bytes());
        check(&format!("weights {i} class count"), decode_weights(&b).map(|_| ()), &mut failures);
    }
    let detail = format!(
        "{round_trips}/300 bit-exact round trips, {rejected} damaged files rejected with typed errors, {} problems{}",
        failures.len(),
        failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
    );
    outcome(round_trips == 300 && failures.is_empty(), detail)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stwnn"))
        .args(args)
        .env("STWNN_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(root: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let (data, vols, w, eval) = (root.join("data"), root.join("vols"), root.join("model.wgt"), root.join("eval"));
    run_cli(&["synth", "--out", &s(&data), "--classes", "3", "--per-class", "6", "--seed", "11"])?;
    run_cli(&["segment", "--manifest", &s(&data.join("manifest.tsv")), "--out", &s(&vols)])?;
    run_cli(&["train", "--manifest", &s(&vols.join("manifest.tsv")), "--out", &s(&w), "--epochs", "2", "--seed", "4"])?;
    run_cli(&["eval", "--manifest", &s(&vols.join("manifest.tsv")), "--weights", &s(&w), "--out", &s(&eval)])?;
    let metrics = std::fs::read(eval.join("metrics.tsv")).map_err(|e| e.to_string())?;
    let weights = std::fs::read(&w).map_err(|e| e.to_string())?;
    Ok((metrics, weights))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    match (pipeline(&dir.path().join("run1")), pipeline(&dir.path().join("run2"))) {
        (Ok(a), Ok(b)) => outcome(
            a == b,
            format!(
                "metrics {} ({} bytes), weights {}",
                if a.0 == b.0 { "identical" } else { "differ" },
                a.0.len(),
                if a.1 == b.1 { "identical" } else { "differ" }
            ),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("pipeline failed: {e}")),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "gradient suite", criterion_1),
        (2, "segmentation oracle", criterion_2),
        (3, "convolution oracle", criterion_3),
        (4, "attention invariants", criterion_4),
        (5, "loss boundary", criterion_5),
        (6, "synthetic classification", criterion_6),
        (7, "temporal-order sensitivity", criterion_7),
        (8, "shift consistency", criterion_8),
        (9, "persistence", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut err = std::io::stderr();
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let _ = writeln!(
            err,
            "criterion {id:>2} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        let _ = writeln!(err, "{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
