use std::num::NonZeroUsize;
use std::time::Duration;

use num_complex::{Complex32, Complex64};
use proptest::prelude::*;
use rand::Rng;
use sptw_core::channel::*;
use sptw_core::iqcore::IqBuffer;
use sptw_core::rng::rng_from_seed;
use sptw_core::scenario::{Tap, TapSet, MAX_DELAY_SPREAD_S};
use sptw_core::waveforms::{gen_noise, gen_radar, radar_pulse_template, RadarParams};

const FS: f64 = 6e6;

fn random_buf(n: usize, seed: u64) -> IqBuffer {
    let mut rng = rng_from_seed(seed);
    let s = (0..n).map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    IqBuffer::new(s, FS).unwrap()
}

fn random_taps(seed: u64) -> TapSet {
    let mut rng = rng_from_seed(seed);
    let base = rng.random_range(0.0..4e-6);
    let n = rng.random_range(1..=4);
    let mut taps: Vec<Tap> = (0..n)
        .map(|_| Tap {
            delay_s: base + rng.random_range(0.0..MAX_DELAY_SPREAD_S),
            gain: Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        })
        .collect();
    taps.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    TapSet::new(taps, ("tx".into(), "rx".into()), 0.0).unwrap()
}

/// Textbook convolution with the taps laid out as a dense impulse response.
fn direct_convolution(x: &[Complex32], taps: &TapSet) -> Vec<Complex64> {
    let mut h = Vec::new();
    for t in &taps.taps {
        let d = (t.delay_s * FS).round() as usize;
        if h.len() <= d {
            h.resize(d + 1, Complex64::new(0.0, 0.0));
        }
        h[d] += t.gain;
    }
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        for (k, hk) in h.iter().enumerate().take(n + 1) {
            let s = x[n - k];
            *out += hk * Complex64::new(s.re.into(), s.im.into());
        }
    }
    y
}

#[test]
fn fir_matches_direct_convolution() {
    for seed in 0..100u64 {
        let x = random_buf(64 + (seed as usize * 37) % 2000, seed);
        let taps = random_taps(seed + 1000);
        let y = fir_apply(&x, &taps).unwrap();
        let want = direct_convolution(x.samples(), &taps);
        let err = y
            .samples()
            .iter()
            .zip(&want)
            .map(|(a, b)| (Complex64::new(a.re.into(), a.im.into()) - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "seed {seed}: {err}");
    }
}

fn to64(b: &IqBuffer) -> Vec<Complex64> {
    b.samples().iter().map(|s| Complex64::new(s.re.into(), s.im.into())).collect()
}

#[test]
fn fir_kernel_is_linear() {
    for seed in 0..100u64 {
        let (x, y) = (to64(&random_buf(500, seed)), to64(&random_buf(500, seed + 7)));
        let taps = integer_taps(&random_taps(seed), FS);
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
        let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = fir_filter(&mix, &taps);
        let (fx, fy) = (fir_filter(&x, &taps), fir_filter(&y, &taps));
        for n in 0..lhs.len() {
            assert!((lhs[n] - (a * fx[n] + b * fy[n])).norm() < 1e-9);
        }
    }
}

#[test]
fn emulate_matches_fir_on_a_single_epoch() {
    let x = random_buf(4000, 3);
    let taps = random_taps(4);
    let a = fir_apply(&x, &taps).unwrap();
    let b = emulate_link(&x, std::slice::from_ref(&taps), &LinkConfig::default()).unwrap();
    assert_eq!(a.samples(), b.samples());
}

#[test]
fn emulate_switches_taps_at_epoch_boundary() {
    let x = random_buf(1200, 5);
    let (t0, t1) = (random_taps(6), random_taps(7));
    let cfg = LinkConfig { epoch_s: 100.0 / FS, ..Default::default() };
    let mut timeline = vec![t0.clone(); 12];
    for t in timeline.iter_mut().skip(6) {
        *t = t1.clone();
    }
    let y = emulate_link(&x, &timeline, &cfg).unwrap();
    let (y0, y1) = (fir_apply(&x, &t0).unwrap(), fir_apply(&x, &t1).unwrap());
    assert_eq!(&y.samples()[..600], &y0.samples()[..600]);
    // the second tap set sees the first epoch's input as history
    assert_eq!(&y.samples()[600..], &y1.samples()[600..]);
}

#[test]
fn emulate_is_deterministic_with_noise() {
    let x = random_buf(3000, 8);
    let cfg = LinkConfig { noise_power: 0.01, seed: 42, ..Default::default() };
    let tl = [random_taps(9)];
    assert_eq!(emulate_link(&x, &tl, &cfg).unwrap(), emulate_link(&x, &tl, &cfg).unwrap());
}

#[test]
fn jigsaw_peaks_at_template_multiples() {
    let p = RadarParams::default();
    let r = gen_radar(&p).unwrap();
    let rx = r.concat(&r).concat(&r);
    let y = fir_apply(&rx, &TapSet::identity()).unwrap();
    let c = correlate_template(&y, &r).unwrap();
    for k in 0..3 {
        assert!(c[k * r.len()] >= 0.99);
    }
}

#[test]
fn noise_only_correlation_stays_low() {
    let t = radar_pulse_template(&RadarParams::default()).unwrap();
    for seed in 0..20 {
        let n = gen_noise(7168, 1.0, seed, FS).unwrap();
        let peak = correlate_template(&n, &t).unwrap().into_iter().fold(0.0, f64::max);
        assert!(peak < 0.3, "seed {seed}: {peak}");
    }
}

#[test]
fn constant_rx_gives_zero_correlation() {
    let t = random_buf(32, 1);
    let rx = IqBuffer::new(vec![Complex32::new(0.5, 0.5); 200], FS).unwrap();
    assert!(correlate_template(&rx, &t).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn correlation_errors() {
    let t = random_buf(32, 1);
    assert!(matches!(correlate_template(&random_buf(16, 2), &t), Err(ChannelError::TemplateTooLong { .. })));
    let other = IqBuffer::new(vec![Complex32::new(1.0, 0.0); 100], 1e6).unwrap();
    assert!(matches!(correlate_template(&other, &t), Err(ChannelError::SampleRateMismatch(..))));
    let rx = random_buf(100, 3);
    assert!(matched_filter_detect(&rx, &t, 0.0).is_err());
    assert!(matched_filter_detect(&rx, &t, 1.0).is_err());
}

#[test]
fn stream_yields_blocks_in_order() {
    let x = random_buf(25_000, 11);
    let blocks: Vec<IqBuffer> = stream_blocks(x.clone(), NonZeroUsize::new(DEFAULT_BLOCK_SIZE).unwrap(), 2).collect();
    assert_eq!(blocks.iter().map(IqBuffer::len).collect::<Vec<_>>(), vec![10_240, 10_240, 4_520]);
    let joined = blocks.iter().skip(1).fold(blocks[0].clone(), |acc, b| acc.concat(b));
    assert_eq!(joined.samples(), x.samples());
}

#[test]
fn stream_producer_blocks_when_full() {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    let produced = Arc::new(AtomicUsize::new(0));
    let p = produced.clone();
    let mut stream = BlockStream::spawn(2, move || {
        let n = p.fetch_add(1, Ordering::SeqCst);
        (n < 10).then(|| IqBuffer::zeros(4, FS).unwrap())
    });
    std::thread::sleep(Duration::from_millis(100));
    // two queued plus one held by the blocked send
    assert!(produced.load(Ordering::SeqCst) <= 3);
    assert!(stream.next().is_some());
    assert_eq!(stream.count(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn correlation_bounded_by_one(seed in any::<u64>(), n in 64usize..600, m in 1usize..64) {
        let rx = random_buf(n, seed);
        let t = random_buf(m, seed ^ 0xabc);
        let c = correlate_template(&rx, &t).unwrap();
        prop_assert_eq!(c.len(), n - m + 1);
        prop_assert!(c.iter().all(|v| *v >= 0.0 && *v <= 1.0 + 1e-6));
    }

    #[test]
    fn correlation_ignores_phase_and_offset(seed in any::<u64>(), phase in -3.1f32..3.1, off in -1.0f32..1.0) {
        let rx = random_buf(300, seed);
        let t = rx.slice(40, 50);
        let rot = Complex32::from_polar(1.0, phase);
        let moved = IqBuffer::new(rx.samples().iter().map(|s| s * rot + Complex32::new(off, -off)).collect(), FS).unwrap();
        let (a, b) = (correlate_template(&rx, &t).unwrap(), correlate_template(&moved, &t).unwrap());
        prop_assert!((a[40] - 1.0).abs() < 1e-6);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-4);
        }
    }
}
