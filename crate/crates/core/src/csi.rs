//! Narrowband-per-subcarrier WiFi channel model and synthetic activity streams.
//!
//! Each received packet on subcarrier `s` is `B_s = H_s A_s + noise`, with
//! `H_s` an `N_T x N_R` complex matrix. Synthetic activities build `H` as a
//! sum of Doppler-rotating paths so the class of a stream is known exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub type ComplexSample = Complex64;

/// Intel 5300 style acquisition constants.
pub const DEFAULT_N_TX: usize = 3;
pub const DEFAULT_N_RX: usize = 3;
pub const DEFAULT_N_SUB: usize = 30;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

/// One packet's channel matrix, stored `(tx, rx, sub)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiFrame {
    pub h: Vec<ComplexSample>,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sub: usize,
    pub packet_index: u64,
    pub timestamp: f64,
}

impl CsiFrame {
    pub fn new(
        h: Vec<ComplexSample>,
        n_tx: usize,
        n_rx: usize,
        n_sub: usize,
        packet_index: u64,
        timestamp: f64,
    ) -> Result<Self> {
        if h.len() != n_tx * n_rx * n_sub || h.is_empty() {
            return Err(Error::dim(format!(
                "frame holds {} entries, expected {n_tx}x{n_rx}x{n_sub}",
                h.len()
            )));
        }
        if !h.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::validation("frame contains non-finite CSI"));
        }
        Ok(Self { h, n_tx, n_rx, n_sub, packet_index, timestamp })
    }

    #[inline]
    pub fn index(&self, tx: usize, rx: usize, sub: usize) -> usize {
        (tx * self.n_rx + rx) * self.n_sub + sub
    }

    pub fn get(&self, tx: usize, rx: usize, sub: usize) -> ComplexSample {
        self.h[self.index(tx, rx, sub)]
    }
}

/// Time-ordered frames sharing one antenna/subcarrier layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiStream {
    frames: Vec<CsiFrame>,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sub: usize,
    pub sample_rate_hz: f64,
    pub label: Option<usize>,
}

impl CsiStream {
    pub fn new(
        frames: Vec<CsiFrame>,
        n_tx: usize,
        n_rx: usize,
        n_sub: usize,
        sample_rate_hz: f64,
        label: Option<usize>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::validation("stream has no frames"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::validation(format!("sample rate {sample_rate_hz} must be > 0")));
        }
        let first = frames[0].packet_index;
        for (k, f) in frames.iter().enumerate() {
            if (f.n_tx, f.n_rx, f.n_sub) != (n_tx, n_rx, n_sub) {
                return Err(Error::dim(format!(
                    "frame {k} is {}x{}x{}, stream is {n_tx}x{n_rx}x{n_sub}",
                    f.n_tx, f.n_rx, f.n_sub
                )));
            }
            if f.packet_index != first + k as u64 {
                return Err(Error::validation(format!(
                    "packet index {} at position {k} breaks the +1 sequence",
                    f.packet_index
                )));
            }
        }
        Ok(Self { frames, n_tx, n_rx, n_sub, sample_rate_hz, label })
    }

    pub fn frames(&self) -> &[CsiFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Appends `other`'s frames, renumbering packets and timestamps to continue this stream.
    pub fn append(&mut self, other: &CsiStream) -> Result<()> {
        if (other.n_tx, other.n_rx, other.n_sub) != (self.n_tx, self.n_rx, self.n_sub) {
            return Err(Error::dim("cannot append streams of different shape"));
        }
        let start = self.frames.last().map_or(0, |f| f.packet_index + 1);
        for (k, f) in other.frames.iter().enumerate() {
            let idx = start + k as u64;
            let mut f = f.clone();
            f.packet_index = idx;
            f.timestamp = idx as f64 / self.sample_rate_hz;
            self.frames.push(f);
        }
        Ok(())
    }
}

/// One propagation path of a synthetic activity.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionComponent {
    pub doppler_hz: f64,
    pub delay_weight: f64,
    /// Per antenna pair gain, `tx * n_rx + rx` order.
    pub antenna_pattern: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivitySpec {
    pub class_id: usize,
    pub duration_s: f64,
    pub motion_components: Vec<MotionComponent>,
    pub noise_std: f64,
    pub seed: u64,
}

impl ActivitySpec {
    pub fn validate(&self, n_pairs: usize) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::validation(format!("duration {} must be > 0", self.duration_s)));
        }
        if self.motion_components.is_empty() {
            return Err(Error::validation("activity needs at least one motion component"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::validation(format!("noise_std {} must be finite and >= 0", self.noise_std)));
        }
        for (k, c) in self.motion_components.iter().enumerate() {
            if !c.doppler_hz.is_finite() {
                return Err(Error::validation(format!("component {k}: non-finite doppler")));
            }
            if !(c.delay_weight.is_finite() && c.delay_weight >= 0.0) {
                return Err(Error::validation(format!("component {k}: delay_weight must be >= 0")));
            }
            if c.antenna_pattern.len() != n_pairs {
                return Err(Error::dim(format!(
                    "component {k}: antenna pattern has {} entries, expected {n_pairs}",
                    c.antenna_pattern.len()
                )));
            }
            if !c.antenna_pattern.iter().all(|v| v.is_finite()) {
                return Err(Error::validation(format!("component {k}: non-finite antenna pattern")));
            }
        }
        Ok(())
    }
}

/// Received samples on one tx/rx pair: `out_s = H[tx][rx][s] * tx_s + noise_s`.
pub fn channel_apply(
    tx: &[ComplexSample],
    h: &CsiFrame,
    noise: &[ComplexSample],
    tx_ant: usize,
    rx_ant: usize,
) -> Result<Vec<ComplexSample>> {
    if tx_ant >= h.n_tx || rx_ant >= h.n_rx {
        return Err(Error::dim(format!(
            "antenna pair ({tx_ant}, {rx_ant}) outside {}x{}",
            h.n_tx, h.n_rx
        )));
    }
    if tx.len() != h.n_sub || noise.len() != h.n_sub {
        return Err(Error::dim(format!(
            "expected {} subcarriers, got tx {} / noise {}",
            h.n_sub,
            tx.len(),
            noise.len()
        )));
    }
    let finite = |c: &ComplexSample| c.re.is_finite() && c.im.is_finite();
    if !tx.iter().chain(noise).all(finite) {
        return Err(Error::validation("non-finite transmit or noise sample"));
    }
    let base = h.index(tx_ant, rx_ant, 0);
    Ok(h.h[base..base + h.n_sub]
        .iter()
        .zip(tx)
        .zip(noise)
        .map(|((hs, a), n)| hs * a + n)
        .collect())
}

/// Number of packets a spec yields at `rate`; tolerant of `0.29 * 100 = 28.999...`.
fn frame_count(duration_s: f64, rate: f64) -> usize {
    let exact = duration_s * rate;
    (exact + exact.abs() * 1e-12).floor() as usize
}

/// Generates a deterministic stream for `spec`.
///
/// Each component contributes
/// `delay_weight * pattern[pair] * exp(i (2 pi f t + phase0 + 2 pi d s / N_S))`
/// where the initial phase and fractional delay `d` are drawn from the seed.
/// Noise is i.i.d. complex Gaussian with standard deviation `noise_std` on
/// each of the real and imaginary parts.
pub fn synth_stream(
    spec: &ActivitySpec,
    n_tx: usize,
    n_rx: usize,
    n_sub: usize,
    sample_rate_hz: f64,
) -> Result<CsiStream> {
    if n_tx == 0 || n_rx == 0 || n_sub == 0 {
        return Err(Error::dim("antenna and subcarrier counts must be positive"));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::validation(format!("sample rate {sample_rate_hz} must be > 0")));
    }
    let pairs = n_tx * n_rx;
    spec.validate(pairs)?;
    let n_frames = frame_count(spec.duration_s, sample_rate_hz);
    if n_frames == 0 {
        return Err(Error::validation(format!(
            "{} s at {sample_rate_hz} Hz yields no packets",
            spec.duration_s
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Per component: subcarrier phase offsets, fixed for the whole stream.
    let phases: Vec<Vec<f64>> = spec
        .motion_components
        .iter()
        .map(|_| {
            let phase0 = rng.random_range(0.0..2.0 * PI);
            let delay = rng.random_range(0.0..1.0);
            (0..n_sub).map(|s| phase0 + 2.0 * PI * delay * s as f64 / n_sub as f64).collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::validation(e.to_string()))?;

    let mut frames = Vec::with_capacity(n_frames);
    let mut h = vec![Complex64::new(0.0, 0.0); pairs * n_sub];
    for i in 0..n_frames {
        let t = i as f64 / sample_rate_hz;
        h.fill(Complex64::new(0.0, 0.0));
        for (comp, sub_phase) in spec.motion_components.iter().zip(&phases) {
            let rot = 2.0 * PI * comp.doppler_hz * t;
            for (pair, gain) in comp.antenna_pattern.iter().enumerate() {
                let amp = comp.delay_weight * gain;
                for (s, ph) in sub_phase.iter().enumerate() {
                    h[pair * n_sub + s] += Complex64::from_polar(amp, rot + ph);
                }
            }
        }
        if spec.noise_std > 0.0 {
            for v in h.iter_mut() {
                *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }
        frames.push(CsiFrame::new(h.clone(), n_tx, n_rx, n_sub, i as u64, t)?);
    }
    CsiStream::new(frames, n_tx, n_rx, n_sub, sample_rate_hz, Some(spec.class_id))
}

/// Doppler band of class `class_id` among `n_classes`: geometric spacing from
/// 2.5 Hz to 12 Hz, so neighbouring classes differ by a constant ratio.
pub fn class_doppler_hz(class_id: usize, n_classes: usize) -> f64 {
    if n_classes <= 1 {
        return 5.0;
    }
    let r = class_id as f64 / (n_classes - 1) as f64;
    2.5 * (12.0f64 / 2.5).powf(r)
}

/// A randomized instance of class `class_id`: a static path plus a moving
/// body path at the class Doppler (jittered by up to 8 %) and a weaker
/// second harmonic. Gains and patterns vary per instance.
pub fn synthetic_activity(
    class_id: usize,
    n_classes: usize,
    seed: u64,
    duration_s: f64,
    noise_std: f64,
    n_pairs: usize,
) -> ActivitySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ac71_0000_0000);
    let mut pattern = |lo: f64, hi: f64| -> Vec<f64> { (0..n_pairs).map(|_| rng.random_range(lo..hi)).collect() };
    let static_pattern = pattern(0.6, 1.4);
    let motion_pattern = pattern(0.5, 1.5);
    let harmonic_pattern = pattern(0.0, 1.0);
    let f = class_doppler_hz(class_id, n_classes) * rng.random_range(0.92..1.08);
    let static_gain = rng.random_range(0.8..1.6);
    let motion_gain = rng.random_range(0.4..0.8);
    ActivitySpec {
        class_id,
        duration_s,
        motion_components: vec![
            MotionComponent { doppler_hz: 0.0, delay_weight: static_gain, antenna_pattern: static_pattern },
            MotionComponent { doppler_hz: f, delay_weight: motion_gain, antenna_pattern: motion_pattern },
            MotionComponent { doppler_hz: 2.0 * f, delay_weight: 0.25 * motion_gain, antenna_pattern: harmonic_pattern },
        ],
        noise_std,
        seed,
    }
}

/// CSI magnitudes as a real `[N_S, I, N_T, N_R]` array.
pub fn amplitude(stream: &CsiStream) -> Result<Tensor> {
    if stream.is_empty() {
        return Err(Error::validation("empty stream"));
    }
    let (nt, nr, ns, ni) = (stream.n_tx, stream.n_rx, stream.n_sub, stream.len());
    let mut out = vec![0.0; ns * ni * nt * nr];
    for (i, f) in stream.frames().iter().enumerate() {
        for tx in 0..nt {
            for rx in 0..nr {
                for s in 0..ns {
                    out[((s * ni + i) * nt + tx) * nr + rx] = f.get(tx, rx, s).norm();
                }
            }
        }
    }
    Tensor::new(vec![ns, ni, nt, nr], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn frame_of(value: Complex64, nt: usize, nr: usize, ns: usize) -> CsiFrame {
        CsiFrame::new(vec![value; nt * nr * ns], nt, nr, ns, 0, 0.0).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, nt: usize, nr: usize, ns: usize) -> CsiFrame {
        let h = (0..nt * nr * ns).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        CsiFrame::new(h, nt, nr, ns, 0, 0.0).unwrap()
    }

    fn spec(components: Vec<MotionComponent>, noise_std: f64, seed: u64) -> ActivitySpec {
        ActivitySpec { class_id: 1, duration_s: 1.0, motion_components: components, noise_std, seed }
    }

    fn component(doppler_hz: f64, weight: f64) -> MotionComponent {
        MotionComponent { doppler_hz, delay_weight: weight, antenna_pattern: vec![1.0; 9] }
    }

    #[test]
    fn identity_channel() {
        let h = frame_of(c(1.0, 0.0), 3, 3, 30);
        let out = channel_apply(&[c(1.0, 0.0); 30], &h, &[c(0.0, 0.0); 30], 0, 2).unwrap();
        assert!(out.iter().all(|v| *v == c(1.0, 0.0)));
    }

    #[test]
    fn complex_gain_channel() {
        let h = frame_of(c(0.5, 0.5), 3, 3, 30);
        let out = channel_apply(&[c(1.0, 0.0); 30], &h, &[c(0.0, 0.0); 30], 1, 1).unwrap();
        assert!(out.iter().all(|v| *v == c(0.5, 0.5)));
    }

    #[test]
    fn channel_apply_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_frame(&mut rng, 3, 3, 30);
        let tx: Vec<_> = (0..30).map(|_| c(rng.random(), rng.random())).collect();
        let noise: Vec<_> = (0..30).map(|_| c(rng.random(), rng.random())).collect();
        for ta in 0..3 {
            for ra in 0..3 {
                let out = channel_apply(&tx, &h, &noise, ta, ra).unwrap();
                for s in 0..30 {
                    let hv = h.h[(ta * 3 + ra) * 30 + s];
                    let re = hv.re * tx[s].re - hv.im * tx[s].im + noise[s].re;
                    let im = hv.re * tx[s].im + hv.im * tx[s].re + noise[s].im;
                    assert!((out[s].re - re).abs() < 1e-15 && (out[s].im - im).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn channel_apply_errors() {
        let h = frame_of(c(1.0, 0.0), 2, 2, 4);
        let z = [c(0.0, 0.0); 4];
        assert!(matches!(channel_apply(&z, &h, &z, 2, 0), Err(Error::Dimension(_))));
        assert!(matches!(channel_apply(&z[..3], &h, &z, 0, 0), Err(Error::Dimension(_))));
        let mut bad = z;
        bad[1] = c(f64::NAN, 0.0);
        assert!(matches!(channel_apply(&bad, &h, &z, 0, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn synth_default_shape() {
        let s = synth_stream(&spec(vec![component(5.0, 1.0)], 0.1, 3), 3, 3, 30, 100.0).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.frames().iter().all(|f| f.h.len() == 3 * 3 * 30));
        assert_eq!(s.label, Some(1));
        assert_eq!(s.frames()[99].packet_index, 99);
    }

    #[test]
    fn static_channel_frames_identical() {
        let s = synth_stream(&spec(vec![component(0.0, 0.7)], 0.0, 4), 3, 3, 30, 100.0).unwrap();
        let first = &s.frames()[0].h;
        assert!(s.frames().iter().all(|f| &f.h == first));
    }

    #[test]
    fn synth_is_deterministic() {
        let sp = spec(vec![component(3.0, 1.0), component(0.0, 0.5)], 0.2, 9);
        let a = synth_stream(&sp, 3, 3, 30, 100.0).unwrap();
        let b = synth_stream(&sp, 3, 3, 30, 100.0).unwrap();
        assert_eq!(a, b);
        let other = synth_stream(&ActivitySpec { seed: 10, ..sp }, 3, 3, 30, 100.0).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn synth_rejects_invalid_specs() {
        let short = ActivitySpec { duration_s: 0.001, ..spec(vec![component(1.0, 1.0)], 0.0, 0) };
        assert!(matches!(synth_stream(&short, 3, 3, 30, 100.0), Err(Error::Validation(_))));
        let empty = spec(vec![], 0.0, 0);
        assert!(synth_stream(&empty, 3, 3, 30, 100.0).is_err());
        let wrong_pattern = spec(vec![component(1.0, 1.0)], 0.0, 0);
        assert!(matches!(synth_stream(&wrong_pattern, 2, 2, 30, 100.0), Err(Error::Dimension(_))));
        let neg = spec(vec![component(1.0, -1.0)], 0.0, 0);
        assert!(synth_stream(&neg, 3, 3, 30, 100.0).is_err());
    }

    #[test]
    fn frame_count_floors() {
        assert_eq!(frame_count(1.0, 100.0), 100);
        assert_eq!(frame_count(0.29, 100.0), 29);
        assert_eq!(frame_count(0.295, 100.0), 29);
    }

    #[test]
    fn amplitude_examples() {
        let frames = vec![
            CsiFrame::new(vec![c(3.0, 4.0), c(0.0, 0.0)], 1, 1, 2, 0, 0.0).unwrap(),
        ];
        let s = CsiStream::new(frames, 1, 1, 2, 100.0, None).unwrap();
        let a = amplitude(&s).unwrap();
        assert_eq!(a.shape(), &[2, 1, 1, 1]);
        assert_eq!(a.data(), &[5.0, 0.0]);
    }

    #[test]
    fn amplitude_matches_elementwise_oracle() {
        let sp = spec(vec![component(4.0, 1.0), component(0.0, 1.0)], 0.3, 21);
        let s = synth_stream(&ActivitySpec { duration_s: 0.2, ..sp }, 3, 3, 30, 100.0).unwrap();
        let a = amplitude(&s).unwrap();
        let ni = s.len();
        for (i, f) in s.frames().iter().enumerate() {
            for tx in 0..3 {
                for rx in 0..3 {
                    for sub in 0..30 {
                        let v = f.h[(tx * 3 + rx) * 30 + sub];
                        let want = (v.re * v.re + v.im * v.im).sqrt();
                        let got = a.data()[((sub * ni + i) * 3 + tx) * 3 + rx];
                        assert!((got - want).abs() <= 1e-15 * want.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn stream_rejects_gaps_and_mixed_shapes() {
        let f0 = frame_of(c(1.0, 0.0), 1, 1, 2);
        let mut f2 = f0.clone();
        f2.packet_index = 2;
        assert!(CsiStream::new(vec![f0.clone(), f2], 1, 1, 2, 100.0, None).is_err());
        let mut g = frame_of(c(1.0, 0.0), 1, 1, 3);
        g.packet_index = 1;
        assert!(CsiStream::new(vec![f0, g], 1, 1, 2, 100.0, None).is_err());
        assert!(CsiStream::new(vec![], 1, 1, 2, 100.0, None).is_err());
    }

    #[test]
    fn append_renumbers() {
        let sp = spec(vec![component(1.0, 1.0)], 0.0, 1);
        let mut a = synth_stream(&ActivitySpec { duration_s: 0.1, ..sp.clone() }, 3, 3, 30, 100.0).unwrap();
        let b = synth_stream(&ActivitySpec { duration_s: 0.05, ..sp }, 3, 3, 30, 100.0).unwrap();
        a.append(&b).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a.frames()[14].packet_index, 14);
        assert_eq!(a.frames()[10].h, b.frames()[0].h);
    }

    proptest! {
        #[test]
        fn channel_is_linear_without_noise(seed in any::<u64>(), ar in -2.0f64..2.0, ai in -2.0f64..2.0, br in -2.0f64..2.0, bi in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_frame(&mut rng, 2, 3, 8);
            let x1: Vec<_> = (0..8).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let x2: Vec<_> = (0..8).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let (a, b) = (c(ar, ai), c(br, bi));
            let zero = vec![c(0.0, 0.0); 8];
            let mix: Vec<_> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
            let lhs = channel_apply(&mix, &h, &zero, 1, 2).unwrap();
            let y1 = channel_apply(&x1, &h, &zero, 1, 2).unwrap();
            let y2 = channel_apply(&x2, &h, &zero, 1, 2).unwrap();
            for s in 0..8 {
                let rhs = a * y1[s] + b * y2[s];
                let scale = rhs.norm().max(1.0);
                prop_assert!((lhs[s] - rhs).norm() / scale < 1e-12);
            }
        }

        #[test]
        fn amplitude_ignores_global_phase(seed in any::<u64>(), phi in 0.0f64..(2.0 * PI)) {
            let sp = spec(vec![component(2.0, 1.0), component(0.0, 0.4)], 0.1, seed);
            let s = synth_stream(&ActivitySpec { duration_s: 0.05, ..sp }, 3, 3, 30, 100.0).unwrap();
            let rot = Complex64::from_polar(1.0, phi);
            let frames = s.frames().iter().map(|f| {
                let mut f = f.clone();
                f.h.iter_mut().for_each(|v| *v *= rot);
                f
            }).collect();
            let r = CsiStream::new(frames, 3, 3, 30, 100.0, None).unwrap();
            let (a, b) = (amplitude(&s).unwrap(), amplitude(&r).unwrap());
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300) + 1e-15);
            }
        }
    }
}
