use std::num::NonZeroUsize;

use num_complex::Complex32;
use proptest::prelude::*;
use sptw_core::iqcore::*;

fn nz(n: usize) -> NonZeroUsize {
    NonZeroUsize::new(n).unwrap()
}

fn samples() -> impl Strategy<Value = Vec<Complex32>> {
    prop::collection::vec((-10.0f32..10.0, -10.0f32..10.0).prop_map(|(a, b)| Complex32::new(a, b)), 1..3000)
}

fn window(v: Vec<Complex32>) -> Window1024 {
    Window1024::new(v, Domain::Time).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_round_trip_is_bit_exact(s in samples()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.iq");
        let buf = IqBuffer::new(s, 6e6).unwrap();
        save_iq_file(&buf, &p).unwrap();
        prop_assert_eq!(load_iq_file(&p, 6e6).unwrap(), buf);
    }

    #[test]
    fn concat_power_is_length_weighted(a in samples(), b in samples()) {
        let (x, y) = (IqBuffer::new(a, 1e6).unwrap(), IqBuffer::new(b, 1e6).unwrap());
        let want = (measure_power(&x).unwrap() * x.len() as f64 + measure_power(&y).unwrap() * y.len() as f64)
            / (x.len() + y.len()) as f64;
        let got = measure_power(&x.concat(&y)).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-12));
    }

    #[test]
    fn segments_tile_the_buffer(n in 0usize..6000, stride in 1usize..2048) {
        let s: Vec<Complex32> = (0..n).map(|i| Complex32::new(i as f32, 0.0)).collect();
        let buf = IqBuffer::new(s, 1e6).unwrap();
        let w = segment_windows(&buf, nz(stride));
        let want = if n < WINDOW_LEN { 0 } else { (n - WINDOW_LEN) / stride + 1 };
        prop_assert_eq!(w.len(), want);
        for (i, win) in w.iter().enumerate() {
            prop_assert_eq!(win.values().len(), WINDOW_LEN);
            prop_assert_eq!(win.values()[0].re as usize, i * stride);
        }
        if stride == WINDOW_LEN {
            let joined: Vec<Complex32> = w.iter().flat_map(|x| x.values().to_vec()).collect();
            prop_assert_eq!(&joined[..], &buf.samples()[..joined.len()]);
        }
    }

    #[test]
    fn parseval_holds(s in prop::collection::vec((-1.0f32..1.0, -1.0f32..1.0), WINDOW_LEN)) {
        let v: Vec<Complex32> = s.into_iter().map(|(a, b)| Complex32::new(a, b)).collect();
        let e_t = mean_power(&v) * WINDOW_LEN as f64;
        let e_f: f64 = shifted_dft(&v).iter().map(|c| c.norm_sqr()).sum::<f64>() / WINDOW_LEN as f64;
        prop_assert!((e_t - e_f).abs() <= 1e-9 * e_t.max(1e-12));
        let f = to_frequency(&window(v)).unwrap();
        prop_assert!((mean_power(f.values()) - 1.0).abs() < 1e-5);
    }
}

#[test]
fn rejects_non_finite_and_bad_rate() {
    let bad = vec![Complex32::new(0.0, 0.0), Complex32::new(f32::NAN, 0.0)];
    assert!(matches!(IqBuffer::new(bad, 1e6), Err(IqError::NonFiniteSample { index: 1 })));
    assert!(matches!(IqBuffer::new(vec![], 0.0), Err(IqError::InvalidSampleRate(_))));
}

#[test]
fn odd_byte_count_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("odd.iq");
    std::fs::write(&p, [0u8; 12]).unwrap();
    assert!(matches!(load_iq_file(&p, 1e6), Err(IqError::MalformedFile { .. })));
}

#[test]
fn manifest_carries_sample_rate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.iq");
    let buf = IqBuffer::new(vec![Complex32::new(1.0, -1.0); 10], 2.5e6).unwrap().with_center_freq(3.6e9);
    save_with_manifest(&buf, &p, "test").unwrap();
    let back = load_with_manifest(&p).unwrap();
    assert_eq!(back, buf);
    assert_eq!(read_manifest(&p).unwrap().sample_rate_hz, 2.5e6);
}

#[test]
fn window_length_enforced() {
    assert!(matches!(Window1024::new(vec![Complex32::new(0.0, 0.0); 1000], Domain::Time), Err(IqError::WindowLength(1000))));
}

#[test]
fn tone_lands_in_its_bin() {
    let k = 100;
    let v: Vec<Complex32> = (0..WINDOW_LEN)
        .map(|n| Complex32::from_polar(1.0, 2.0 * std::f32::consts::PI * (k * n) as f32 / WINDOW_LEN as f32))
        .collect();
    let f = to_frequency(&window(v)).unwrap();
    let peak = f.values().iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
    assert_eq!(peak, WINDOW_LEN / 2 + k);
    assert!(to_frequency(&f).is_err());
}

#[test]
fn zero_window_cannot_be_normalized() {
    let z = window(vec![Complex32::new(0.0, 0.0); WINDOW_LEN]);
    assert!(matches!(to_frequency(&z), Err(IqError::ZeroWindow)));
    assert!(matches!(normalize_time(&z), Err(IqError::ZeroWindow)));
}

#[test]
fn psd_of_zeros_is_floor_and_tone_peaks_at_zero_db() {
    let z = IqBuffer::zeros(4096, 1e6).unwrap();
    assert!(psd_estimate(&z, nz(256)).unwrap().iter().all(|v| *v == PSD_FLOOR_DB));
    let f0 = 125e3;
    let tone: Vec<Complex32> =
        (0..4096).map(|n| Complex32::from_polar(1.0, (2.0 * std::f64::consts::PI * f0 * n as f64 / 1e6) as f32)).collect();
    let psd = psd_estimate(&IqBuffer::new(tone, 1e6).unwrap(), nz(256)).unwrap();
    let freqs = psd_bin_freqs(256, 1e6);
    let peak = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(freqs[peak], f0);
    assert_eq!(psd[peak], 0.0);
    assert!(matches!(psd_estimate(&z, nz(8192)), Err(IqError::BufferTooShort { .. })));
}
