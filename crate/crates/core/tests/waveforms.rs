use std::num::NonZeroUsize;

use rand::Rng;
use sptw_core::iqcore::{mean_power, psd_bin_freqs, psd_estimate};
use sptw_core::rng::rng_from_seed;
use sptw_core::waveforms::*;

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[test]
fn default_radar_is_first_quadrant() {
    let p = RadarParams::default();
    let r = gen_radar(&p).unwrap();
    assert_eq!(r.len(), 106_657);
    assert_eq!(r.sample_rate_hz(), 6e6);
    assert!((r.duration_s() - 0.017776).abs() < 1e-6);
    assert!(r.samples().iter().all(|s| s.re >= 0.0 && s.im >= 0.0));
}

#[test]
fn radar_pri_stays_within_jitter() {
    let p = RadarParams { total_samples: 600_000, ..Default::default() };
    let starts = radar_pulse_starts(&p);
    let (lo, hi) = (p.pri_s * (1.0 - p.pri_jitter) * 6e6 - 1.0, p.pri_s * (1.0 + p.pri_jitter) * 6e6 + 1.0);
    assert!(starts.windows(2).all(|w| ((w[1] - w[0]) as f64) >= lo && ((w[1] - w[0]) as f64) <= hi));
    assert_eq!(starts[0], 0);
}

#[test]
fn radar_off_pulse_sits_at_offset() {
    let p = RadarParams::default();
    let r = gen_radar(&p).unwrap();
    let span = p.pulse_span_samples();
    let s = r.samples()[span + 10];
    assert_eq!((s.re, s.im), (0.5, 0.5));
    assert_eq!(radar_pulse_template(&p).unwrap().len(), span);
}

#[test]
fn radar_rejects_bad_params() {
    let long = RadarParams { pulse_width_s: 2e-3, ..Default::default() };
    assert!(gen_radar(&long).is_err());
    let loud = RadarParams { amplitude: 0.8, ..Default::default() };
    assert!(gen_radar(&loud).is_err());
}

#[test]
fn generators_are_deterministic() {
    let p = RadarParams { seed: 3, ..Default::default() };
    assert_eq!(gen_radar(&p).unwrap(), gen_radar(&p).unwrap());
    assert_ne!(gen_radar(&p).unwrap(), gen_radar(&RadarParams { seed: 4, ..p }).unwrap());
    let c = CellularParams::default();
    assert_eq!(gen_cellular(&c, 20, 1).unwrap(), gen_cellular(&c, 20, 1).unwrap());
    assert_eq!(gen_noise(100, 1.0, 5, 6e6).unwrap(), gen_noise(100, 1.0, 5, 6e6).unwrap());
}

#[test]
fn cellular_occupies_five_mhz() {
    let c = CellularParams::default();
    let x = gen_cellular(&c, 200, 2).unwrap();
    assert_eq!(x.len(), 200 * c.symbol_len());
    assert!((mean_power(x.samples()) - 1.0).abs() < 1e-4);
    let psd = psd_estimate(&x, NonZeroUsize::new(512).unwrap()).unwrap();
    let f = psd_bin_freqs(512, c.sample_rate_hz);
    let inband: Vec<f64> = psd.iter().zip(&f).filter(|(_, f)| f.abs() < 2.2e6 && f.abs() > 0.1e6).map(|(p, _)| *p).collect();
    let outband: Vec<f64> = psd.iter().zip(&f).filter(|(_, f)| f.abs() > 2.8e6).map(|(p, _)| *p).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&inband) - mean(&outband) > 20.0, "{} vs {}", mean(&inband), mean(&outband));
}

#[test]
fn noise_power_matches_request() {
    let n = gen_noise(200_000, 0.25, 9, 1e6).unwrap();
    assert!((mean_power(n.samples()) - 0.25).abs() < 0.005);
}

#[test]
fn mix_hits_requested_ratios() {
    let radar = gen_radar(&RadarParams::default()).unwrap().slice(0, 8192);
    let cell = gen_cellular(&CellularParams::default(), 16, 1).unwrap();
    let mut rng = rng_from_seed(12);
    for i in 0..100 {
        let snr = rng.random_range(-20.0..20.0);
        let sinr = snr - rng.random_range(0.0..30.0);
        let c = mix_components(&radar, Some(&cell), snr, Some(sinr), i).unwrap();
        let ps = mean_power(c.signal.samples());
        let pn = mean_power(c.noise.samples());
        let pi = mean_power(c.interferer.as_ref().unwrap().samples());
        assert!((db(ps / pn) - snr).abs() < 0.01, "snr {snr}");
        assert!((db(ps / (pi + pn)) - sinr).abs() < 0.01, "sinr {sinr}");
        assert_eq!(c.sum().len(), radar.len());
    }
}

#[test]
fn mix_without_interferer() {
    let cell = gen_cellular(&CellularParams::default(), 16, 1).unwrap();
    let (mixed, meta) = mix_at_snr(&cell, None, 5.0, None, 3).unwrap();
    assert_eq!(mixed.len(), cell.len());
    assert!((meta.snr_db - 5.0).abs() < 0.01);
    assert!(meta.sinr_db.is_none());
}

#[test]
fn infeasible_sinr_rejected() {
    let cell = gen_cellular(&CellularParams::default(), 4, 1).unwrap();
    let radar = gen_radar(&RadarParams::default()).unwrap();
    assert!(matches!(mix_at_snr(&radar, Some(&cell), 0.0, Some(3.0), 1), Err(WaveformError::InfeasibleSinr { .. })));
    assert!(mix_at_snr(&radar, Some(&cell), 0.0, None, 1).is_err());
}
