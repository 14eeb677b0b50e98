//! FIR channel emulation and matched-filter correlation.
//!
//! Taps are applied at integer sample delays (rounded from seconds) with a
//! zero prefix, so the output has the input's length. [`emulate_link`]
//! switches tap sets at hard epoch boundaries while keeping the filter
//! history continuous across them.

use std::num::NonZeroUsize;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;

use num_complex::{Complex32, Complex64};
use thiserror::Error;

use crate::iqcore::{forward_fft, inverse_fft, IqBuffer};
use crate::scenario::TapSet;
use crate::waveforms::{gen_noise, WaveformError};

/// Samples per streamed block: ten model windows.
pub const DEFAULT_BLOCK_SIZE: usize = 10_240;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("tap delay of {delay_samples} samples does not fit a {len}-sample buffer")]
    DelayOverflow { delay_samples: usize, len: usize },
    #[error("timeline has {got} epochs, {needed} needed")]
    TimelineTooShort { needed: usize, got: usize },
    #[error("template of {template} samples is longer than rx of {rx}")]
    TemplateTooLong { template: usize, rx: usize },
    #[error("sample rates differ: {0} vs {1}")]
    SampleRateMismatch(f64, f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Tap delays in whole samples at `fs`, paired with gains.
pub fn integer_taps(taps: &TapSet, fs: f64) -> Vec<(usize, Complex64)> {
    taps.taps.iter().map(|t| ((t.delay_s * fs).round() as usize, t.gain)).collect()
}

fn check_delays(taps: &[(usize, Complex64)], len: usize) -> Result<(), ChannelError> {
    match taps.iter().find(|(d, _)| *d >= len) {
        Some(&(delay_samples, _)) if len > 0 => Err(ChannelError::DelayOverflow { delay_samples, len }),
        _ => Ok(()),
    }
}

fn filter_range(x: &[Complex32], taps: &[(usize, Complex64)], range: std::ops::Range<usize>, out: &mut [Complex32]) {
    for n in range {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(d, g) in taps {
            if n >= d {
                let s = x[n - d];
                acc += g * Complex64::new(s.re.into(), s.im.into());
            }
        }
        out[n] = Complex32::new(acc.re as f32, acc.im as f32);
    }
}

/// Double-precision kernel of [`fir_apply`] on integer-delay taps.
pub fn fir_filter(x: &[Complex64], taps: &[(usize, Complex64)]) -> Vec<Complex64> {
    (0..x.len())
        .map(|n| taps.iter().filter(|(d, _)| n >= *d).map(|&(d, g)| g * x[n - d]).sum())
        .collect()
}

/// `y[n] = sum_k g_k x[n - d_k]` with `x[m] = 0` for `m < 0`.
pub fn fir_apply(buf: &IqBuffer, taps: &TapSet) -> Result<IqBuffer, ChannelError> {
    let itaps = integer_taps(taps, buf.sample_rate_hz());
    check_delays(&itaps, buf.len())?;
    let x: Vec<Complex64> = buf.samples().iter().map(|s| Complex64::new(s.re.into(), s.im.into())).collect();
    let out = fir_filter(&x, &itaps).into_iter().map(|v| Complex32::new(v.re as f32, v.im as f32)).collect();
    Ok(buf.with_samples(out))
}

/// Link emulation settings shared by every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub epoch_s: f64,
    pub noise_power: f64,
    pub rx_gain_db: f64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { epoch_s: 1.0, noise_power: 0.0, rx_gain_db: 0.0, seed: 0 }
    }
}

/// Filters `tx` epoch by epoch, adds AWGN of `noise_power` and applies the
/// receive gain. Output sample `n` uses the taps of epoch
/// `floor(n / epoch_samples)`; past input is shared across epochs.
pub fn emulate_link(tx: &IqBuffer, timeline: &[TapSet], cfg: &LinkConfig) -> Result<IqBuffer, ChannelError> {
    let fs = tx.sample_rate_hz();
    if !(cfg.epoch_s > 0.0) || !(cfg.noise_power >= 0.0) || !cfg.rx_gain_db.is_finite() {
        return Err(ChannelError::InvalidParams("epoch_s > 0, noise_power >= 0 and finite gain required".into()));
    }
    let epoch_len = ((cfg.epoch_s * fs).round() as usize).max(1);
    let needed = tx.len().div_ceil(epoch_len).max(1);
    if timeline.len() < needed {
        return Err(ChannelError::TimelineTooShort { needed, got: timeline.len() });
    }
    let mut out = vec![Complex32::new(0.0, 0.0); tx.len()];
    for (e, taps) in timeline.iter().take(needed).enumerate() {
        let itaps = integer_taps(taps, fs);
        check_delays(&itaps, tx.len())?;
        let start = e * epoch_len;
        let end = (start + epoch_len).min(tx.len());
        filter_range(tx.samples(), &itaps, start..end, &mut out);
    }
    if cfg.noise_power > 0.0 && !out.is_empty() {
        let noise = gen_noise(out.len(), cfg.noise_power, cfg.seed, fs)?;
        out.iter_mut().zip(noise.samples()).for_each(|(o, n)| *o += n);
    }
    let g = 10f64.powf(cfg.rx_gain_db / 20.0) as f32;
    if g != 1.0 {
        out.iter_mut().for_each(|o| *o *= g);
    }
    Ok(tx.with_samples(out))
}

/// Zero-mean normalized cross-correlation magnitude at every lag
/// `0..=rx.len() - template.len()`.
///
/// Both the template and each rx window have their mean removed before
/// normalization, so constant offsets (the radar's first-quadrant bias)
/// carry no correlation. Windows with no variation give 0.
pub fn correlate_template(rx: &IqBuffer, template: &IqBuffer) -> Result<Vec<f64>, ChannelError> {
    if rx.sample_rate_hz() != template.sample_rate_hz() {
        return Err(ChannelError::SampleRateMismatch(rx.sample_rate_hz(), template.sample_rate_hz()));
    }
    let (n, m) = (rx.len(), template.len());
    if m == 0 || m > n {
        return Err(ChannelError::TemplateTooLong { template: m, rx: n });
    }
    let to64 = |s: &Complex32| Complex64::new(s.re.into(), s.im.into());
    let t: Vec<Complex64> = template.samples().iter().map(to64).collect();
    let t_mean = t.iter().sum::<Complex64>() / m as f64;
    let t0: Vec<Complex64> = t.iter().map(|v| v - t_mean).collect();
    let t_energy: f64 = t0.iter().map(|v| v.norm_sqr()).sum();
    let lags = n - m + 1;
    if t_energy <= 0.0 {
        return Ok(vec![0.0; lags]);
    }

    let len = n.next_power_of_two();
    let mut a: Vec<Complex64> = rx.samples().iter().map(to64).collect();
    a.resize(len, Complex64::new(0.0, 0.0));
    let mut b = t0;
    b.resize(len, Complex64::new(0.0, 0.0));
    forward_fft(len).process(&mut a);
    forward_fft(len).process(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y.conj());
    inverse_fft(len).process(&mut a);

    let mut s1 = Vec::with_capacity(n + 1);
    let mut s2 = Vec::with_capacity(n + 1);
    s1.push(Complex64::new(0.0, 0.0));
    s2.push(0.0f64);
    for s in rx.samples() {
        let v = to64(s);
        s1.push(s1[s1.len() - 1] + v);
        s2.push(s2[s2.len() - 1] + v.norm_sqr());
    }
    let scale = 1.0 / len as f64;
    Ok((0..lags)
        .map(|l| {
            let sum = s1[l + m] - s1[l];
            let raw = s2[l + m] - s2[l];
            let energy = raw - sum.norm_sqr() / m as f64;
            if energy <= 1e-9 * raw.max(f64::MIN_POSITIVE) {
                0.0
            } else {
                (a[l] * scale).norm() / (t_energy * energy).sqrt()
            }
        })
        .collect())
}

/// Peak normalized correlation and whether it reaches `threshold`.
pub fn matched_filter_detect(rx: &IqBuffer, template: &IqBuffer, threshold: f64) -> Result<(bool, f64), ChannelError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ChannelError::InvalidParams(format!("threshold {threshold} outside (0, 1)")));
    }
    let peak = correlate_template(rx, template)?.into_iter().fold(0.0, f64::max);
    Ok((peak >= threshold, peak))
}

/// Bounded single-producer block stream. The producer thread blocks once
/// `capacity` blocks are waiting for the consumer.
pub struct BlockStream {
    rx: Receiver<IqBuffer>,
    handle: Option<JoinHandle<()>>,
}

impl BlockStream {
    pub fn spawn<F>(capacity: usize, mut produce: F) -> Self
    where
        F: FnMut() -> Option<IqBuffer> + Send + 'static,
    {
        let (tx, rx) = sync_channel(capacity);
        let handle = std::thread::spawn(move || {
            while let Some(block) = produce() {
                if tx.send(block).is_err() {
                    break;
                }
            }
        });
        Self { rx, handle: Some(handle) }
    }
}

impl Iterator for BlockStream {
    type Item = IqBuffer;

    fn next(&mut self) -> Option<IqBuffer> {
        let item = self.rx.recv().ok();
        if item.is_none() {
            if let Some(h) = self.handle.take() {
                // a panicking producer just ends the stream
                let _ = h.join();
            }
        }
        item
    }
}

/// Streams `buf` in consecutive blocks of `block_size`; the last block may
/// be shorter.
pub fn stream_blocks(buf: IqBuffer, block_size: NonZeroUsize, capacity: usize) -> BlockStream {
    let mut pos = 0;
    BlockStream::spawn(capacity, move || {
        if pos >= buf.len() {
            return None;
        }
        let len = block_size.get().min(buf.len() - pos);
        let block = buf.slice(pos, len);
        pos += len;
        Some(block)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqcore::measure_power;
    use crate::rng::rng_from_seed;
    use crate::scenario::Tap;
    use rand::Rng;

    fn random_buf(n: usize, seed: u64) -> IqBuffer {
        let mut rng = rng_from_seed(seed);
        let s = (0..n).map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        IqBuffer::new(s, 1e6).unwrap()
    }

    fn single(delay_s: f64, gain: Complex64) -> TapSet {
        TapSet { taps: vec![Tap { delay_s, gain }], link: (String::new(), String::new()), t_s: 0.0 }
    }

    #[test]
    fn identity_tap_is_bit_exact() {
        let x = random_buf(500, 1);
        let y = fir_apply(&x, &TapSet::identity()).unwrap();
        assert_eq!(x.samples(), y.samples());
    }

    #[test]
    fn scalar_tap() {
        let x = random_buf(100, 2);
        let y = fir_apply(&x, &single(0.0, Complex64::new(0.0, 0.5))).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            let want = a * Complex32::new(0.0, 0.5);
            assert!((want - b).norm() < 1e-7);
        }
    }

    #[test]
    fn delay_shifts_with_zero_prefix() {
        let x = random_buf(50, 3);
        let y = fir_apply(&x, &single(3e-6, Complex64::new(1.0, 0.0))).unwrap();
        assert_eq!(&y.samples()[..3], &[Complex32::new(0.0, 0.0); 3]);
        assert_eq!(&y.samples()[3..], &x.samples()[..47]);
        assert!(matches!(
            fir_apply(&x, &single(50e-6, Complex64::new(1.0, 0.0))),
            Err(ChannelError::DelayOverflow { delay_samples: 50, len: 50 })
        ));
    }

    #[test]
    fn emulate_identity_and_gain() {
        let x = random_buf(3000, 4);
        let cfg = LinkConfig { epoch_s: 1e-3, ..Default::default() };
        let tl = vec![TapSet::identity(); 3];
        assert_eq!(emulate_link(&x, &tl, &cfg).unwrap().samples(), x.samples());
        assert!(matches!(
            emulate_link(&x, &tl[..2], &cfg),
            Err(ChannelError::TimelineTooShort { needed: 3, got: 2 })
        ));
        let noisy = LinkConfig { noise_power: 0.1, seed: 9, ..cfg.clone() };
        let a = emulate_link(&x, &tl, &noisy).unwrap();
        let b = emulate_link(&x, &tl, &LinkConfig { rx_gain_db: 20.0 * 2f64.log10(), ..noisy }).unwrap();
        for (p, q) in a.samples().iter().zip(b.samples()) {
            assert!((p * 2.0 - q).norm() < 1e-5);
        }
    }

    #[test]
    fn emulate_noise_power() {
        let x = IqBuffer::zeros(100_000, 1e6).unwrap();
        let cfg = LinkConfig { noise_power: 1.0, seed: 5, ..Default::default() };
        let y = emulate_link(&x, &[TapSet::identity()], &cfg).unwrap();
        let p = measure_power(&y).unwrap();
        assert!((0.97..=1.03).contains(&p), "{p}");
    }

    #[test]
    fn epoch_switch_keeps_history() {
        let x = random_buf(20, 6);
        let cfg = LinkConfig { epoch_s: 10e-6, ..Default::default() };
        let tl = vec![TapSet::identity(), single(2e-6, Complex64::new(1.0, 0.0))];
        let y = emulate_link(&x, &tl, &cfg).unwrap();
        assert_eq!(&y.samples()[..10], &x.samples()[..10]);
        assert_eq!(&y.samples()[10..], &x.samples()[8..18]);
    }

    #[test]
    fn self_correlation_peak() {
        let t = random_buf(256, 7);
        let c = correlate_template(&t, &t).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0] - 1.0).abs() < 1e-9);
        let short = random_buf(10, 8);
        assert!(matches!(correlate_template(&short, &t), Err(ChannelError::TemplateTooLong { .. })));
    }

    #[test]
    fn correlation_ignores_dc_offset() {
        let t = random_buf(128, 9);
        let mut s: Vec<Complex32> = vec![Complex32::new(0.5, 0.5); 300];
        for (i, v) in t.samples().iter().enumerate() {
            s[100 + i] += v;
        }
        let rx = IqBuffer::new(s, 1e6).unwrap();
        let c = correlate_template(&rx, &t).unwrap();
        let (arg, peak) = c.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!(arg, 100);
        assert!(peak > 0.999);
        assert!(c.iter().all(|&v| v <= 1.0 + 1e-6));
    }

    #[test]
    fn detect_rejects_bad_threshold() {
        let t = random_buf(16, 10);
        assert!(matched_filter_detect(&t, &t, 1.5).is_err());
        assert!(matched_filter_detect(&t, &t, 0.5).unwrap().0);
    }

    #[test]
    fn stream_reassembles_buffer() {
        let x = random_buf(25_000, 11);
        let blocks: Vec<IqBuffer> = stream_blocks(x.clone(), NonZeroUsize::new(DEFAULT_BLOCK_SIZE).unwrap(), 2).collect();
        assert_eq!(blocks.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![10_240, 10_240, 4_520]);
        let joined: Vec<Complex32> = blocks.iter().flat_map(|b| b.samples().to_vec()).collect();
        assert_eq!(joined, x.samples());
    }
}
