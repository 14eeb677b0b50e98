//! Baseband waveform synthesis: the pulsed radar, an OFDM cellular proxy,
//! complex Gaussian noise, and SNR/SINR-calibrated mixing.
//!
//! The radar is a staggered train of phase-coded pulses riding on positive
//! I/Q offsets, so that every sample lies in the first quadrant of the IQ
//! plane. All generators are deterministic in their seed.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iqcore::{inverse_fft, mean_power, IqBuffer};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Error, PartialEq)]
pub enum WaveformError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("requested SINR {sinr_db} dB exceeds SNR {snr_db} dB")]
    InfeasibleSinr { snr_db: f64, sinr_db: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

fn invalid(msg: impl Into<String>) -> WaveformError {
    WaveformError::InvalidParams(msg.into())
}

/// Radar synthesis parameters. Field names double as the JSON schema of
/// radar parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarParams {
    pub sample_rate_hz: f64,
    pub total_samples: usize,
    /// Nominal pulse repetition interval.
    pub pri_s: f64,
    /// Flat-top duration of each pulse.
    pub pulse_width_s: f64,
    /// Raised-cosine rise and fall time, added on both sides of the flat top.
    pub edge_s: f64,
    /// Duration of one phase chip of the intra-pulse code.
    pub chip_s: f64,
    /// Each interval is drawn uniformly from `pri_s * (1 ± pri_jitter)`.
    pub pri_jitter: f64,
    pub i_offset: f64,
    pub q_offset: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 6e6,
            total_samples: 106_657,
            pri_s: 1e-3,
            pulse_width_s: 100e-6,
            edge_s: 5e-6,
            chip_s: 1e-6,
            pri_jitter: 0.05,
            i_offset: 0.5,
            q_offset: 0.5,
            amplitude: 0.5,
            seed: 0,
        }
    }
}

impl RadarParams {
    pub fn duration_s(&self) -> f64 {
        self.total_samples as f64 / self.sample_rate_hz
    }

    /// Samples spanned by one pulse including both edges.
    pub fn pulse_span_samples(&self) -> usize {
        ((self.pulse_width_s + 2.0 * self.edge_s) * self.sample_rate_hz).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sample_rate_hz) {
            return Err(invalid("sample_rate_hz must be positive"));
        }
        if !positive(self.pri_s) || !positive(self.pulse_width_s) || !positive(self.chip_s) {
            return Err(invalid("pri_s, pulse_width_s and chip_s must be positive"));
        }
        if !(self.edge_s.is_finite() && self.edge_s >= 0.0) {
            return Err(invalid("edge_s must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.pri_jitter) {
            return Err(invalid("pri_jitter must be in [0, 1)"));
        }
        if self.pulse_width_s + 2.0 * self.edge_s >= self.pri_s * (1.0 - self.pri_jitter) {
            return Err(invalid("pulse (with edges) must be shorter than the shortest PRI"));
        }
        if !positive(self.i_offset) || !positive(self.q_offset) {
            return Err(invalid("i_offset and q_offset must be positive"));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(invalid("amplitude must be non-negative"));
        }
        if self.amplitude > self.i_offset.min(self.q_offset) {
            return Err(invalid("amplitude must not exceed min(i_offset, q_offset)"));
        }
        Ok(())
    }

    fn envelope(&self, n: usize) -> f64 {
        let tau = n as f64 / self.sample_rate_hz;
        let (edge, width) = (self.edge_s, self.pulse_width_s);
        if tau < edge {
            0.5 * (1.0 - (PI * tau / edge).cos())
        } else if tau < edge + width {
            1.0
        } else if tau < width + 2.0 * edge {
            0.5 * (1.0 + (PI * (tau - edge - width) / edge).cos())
        } else {
            0.0
        }
    }
}

/// Sample indices at which pulses start.
pub fn radar_pulse_starts(p: &RadarParams) -> Vec<usize> {
    let mut rng = rng_from_seed(derive_seed(p.seed, &[1]));
    let mut starts = Vec::new();
    let mut t = 0usize;
    while t < p.total_samples {
        starts.push(t);
        let jitter: f64 = if p.pri_jitter > 0.0 { rng.random_range(-p.pri_jitter..=p.pri_jitter) } else { 0.0 };
        t += ((p.pri_s * (1.0 + jitter)) * p.sample_rate_hz).round().max(1.0) as usize;
    }
    starts
}

pub fn gen_radar(p: &RadarParams) -> Result<IqBuffer, WaveformError> {
    p.validate()?;
    let span = p.pulse_span_samples();
    let chip_len = (p.chip_s * p.sample_rate_hz).round().max(1.0) as usize;
    let chips = span.div_ceil(chip_len);
    let mut code_rng = rng_from_seed(derive_seed(p.seed, &[0]));
    let code: Vec<f64> = (0..chips).map(|_| code_rng.random_range(0.0..2.0 * PI)).collect();
    let mut phase_rng = rng_from_seed(derive_seed(p.seed, &[2]));

    let mut samples = vec![Complex32::new(p.i_offset as f32, p.q_offset as f32); p.total_samples];
    for start in radar_pulse_starts(p) {
        let rotation: f64 = phase_rng.random_range(0.0..2.0 * PI);
        for n in 0..span {
            let idx = start + n;
            if idx >= p.total_samples {
                break;
            }
            let env = p.envelope(n);
            let phi = code[n / chip_len] + rotation;
            let re = (p.i_offset + p.amplitude * env * phi.cos()).max(0.0);
            let im = (p.q_offset + p.amplitude * env * phi.sin()).max(0.0);
            samples[idx] = Complex32::new(re as f32, im as f32);
        }
    }
    Ok(IqBuffer::from_parts_unchecked(samples, p.sample_rate_hz))
}

/// The first pulse of [`gen_radar`] (edges included), used as the
/// single-pulse matched-filter template.
pub fn radar_pulse_template(p: &RadarParams) -> Result<IqBuffer, WaveformError> {
    let full = gen_radar(p)?;
    let span = p.pulse_span_samples().min(full.len());
    Ok(full.slice(0, span))
}

/// OFDM cellular proxy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellularParams {
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub cp_len: usize,
    /// Fraction of `bandwidth_hz` carrying subcarriers.
    pub occupied_fraction: f64,
    pub sample_rate_hz: f64,
    /// Raised-cosine overlap between consecutive symbols, in samples.
    pub taper_len: usize,
}

impl Default for CellularParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            num_subcarriers: 512,
            cp_len: 36,
            occupied_fraction: 0.5,
            sample_rate_hz: 6e6,
            taper_len: 32,
        }
    }
}

impl CellularParams {
    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz * self.occupied_fraction
    }

    pub fn symbol_len(&self) -> usize {
        self.num_subcarriers + self.cp_len
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(invalid("sample_rate_hz must be positive"));
        }
        if !(self.occupied_fraction > 0.0 && self.occupied_fraction <= 1.0) {
            return Err(invalid("occupied_fraction must be in (0, 1]"));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(invalid("bandwidth_hz must be positive"));
        }
        if self.occupied_bandwidth_hz() > self.sample_rate_hz {
            return Err(invalid("occupied bandwidth exceeds the sample rate"));
        }
        if self.num_subcarriers < 4 {
            return Err(invalid("num_subcarriers must be at least 4"));
        }
        if self.cp_len >= self.num_subcarriers || self.taper_len > self.cp_len {
            return Err(invalid("require taper_len <= cp_len < num_subcarriers"));
        }
        Ok(())
    }

    /// Occupied subcarrier indices in natural FFT order (DC excluded).
    pub fn occupied_bins(&self) -> Vec<usize> {
        let spacing = self.sample_rate_hz / self.num_subcarriers as f64;
        let half = ((self.occupied_bandwidth_hz() / spacing / 2.0).round() as usize)
            .clamp(1, self.num_subcarriers / 2 - 1);
        (1..=half).chain((self.num_subcarriers - half)..self.num_subcarriers).collect()
    }
}

/// Random-QPSK OFDM stream with cyclic prefix, scaled to unit mean power.
pub fn gen_cellular(p: &CellularParams, num_symbols: usize, seed: u64) -> Result<IqBuffer, WaveformError> {
    p.validate()?;
    if num_symbols == 0 {
        return Err(invalid("num_symbols must be at least 1"));
    }
    let n = p.num_subcarriers;
    let sym_len = p.symbol_len();
    let taper = p.taper_len;
    let bins = p.occupied_bins();
    let ifft = inverse_fft(n);
    let mut rng = rng_from_seed(seed);
    let ramp: Vec<f64> = (0..taper).map(|i| 0.5 * (1.0 - (PI * (i as f64 + 0.5) / taper as f64).cos())).collect();

    let mut out = vec![Complex64::new(0.0, 0.0); num_symbols * sym_len + taper];
    let mut freq = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..num_symbols {
        freq.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for &b in &bins {
            let re = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            freq[b] = Complex64::new(re, im);
        }
        ifft.process(&mut freq);
        let base = s * sym_len;
        // cyclic prefix, body, then a cyclic suffix that overlaps the next symbol
        for i in 0..sym_len + taper {
            let src = (i + n - p.cp_len) % n;
            let w = if i < taper {
                ramp[i]
            } else if i >= sym_len {
                ramp[taper - 1 - (i - sym_len)]
            } else {
                1.0
            };
            out[base + i] += freq[src] * w;
        }
    }
    out.truncate(num_symbols * sym_len);
    let power = out.iter().map(|c| c.norm_sqr()).sum::<f64>() / out.len() as f64;
    let scale = power.sqrt().recip();
    let samples = out.iter().map(|c| Complex32::new((c.re * scale) as f32, (c.im * scale) as f32)).collect();
    Ok(IqBuffer::from_parts_unchecked(samples, p.sample_rate_hz))
}

/// Circularly-symmetric complex Gaussian noise with per-sample variance
/// `power`.
pub fn gen_noise(n: usize, power: f64, seed: u64, sample_rate_hz: f64) -> Result<IqBuffer, WaveformError> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(invalid("power must be positive"));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(invalid("sample_rate_hz must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let sigma = power.sqrt();
    let samples = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex32::new((re * sigma * FRAC_1_SQRT_2) as f32, (im * sigma * FRAC_1_SQRT_2) as f32)
        })
        .collect();
    Ok(IqBuffer::from_parts_unchecked(samples, sample_rate_hz))
}

/// Scale factors and realized ratios of a [`mix_at_snr`] call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixMetadata {
    pub signal_scale: f64,
    pub interferer_scale: f64,
    pub noise_power: f64,
    pub snr_db: f64,
    pub sinr_db: Option<f64>,
}

/// The three scaled components of a mix, before summation.
#[derive(Debug, Clone)]
pub struct MixComponents {
    pub signal: IqBuffer,
    pub interferer: Option<IqBuffer>,
    pub noise: IqBuffer,
    pub meta: MixMetadata,
}

impl MixComponents {
    pub fn sum(&self) -> IqBuffer {
        let mut out: Vec<Complex32> = self
            .signal
            .samples()
            .iter()
            .zip(self.noise.samples())
            .map(|(s, n)| s + n)
            .collect();
        if let Some(i) = &self.interferer {
            out.iter_mut().zip(i.samples()).for_each(|(o, x)| *o += x);
        }
        self.signal.with_samples(out)
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn cyclic_fit(buf: &IqBuffer, len: usize) -> Vec<Complex32> {
    buf.samples().iter().copied().cycle().take(len).collect()
}

/// Scales `signal` (and `interferer`) against unit-power noise so that the
/// requested SNR and SINR hold exactly for the measured component powers.
pub fn mix_components(
    signal: &IqBuffer,
    interferer: Option<&IqBuffer>,
    snr_db: f64,
    sinr_db: Option<f64>,
    seed: u64,
) -> Result<MixComponents, WaveformError> {
    if signal.is_empty() {
        return Err(WaveformError::LengthMismatch("signal is empty".into()));
    }
    if !snr_db.is_finite() {
        return Err(invalid("snr_db must be finite"));
    }
    let n = signal.len();
    let noise = gen_noise(n, 1.0, seed, signal.sample_rate_hz())?;
    let p_noise = mean_power(noise.samples());
    let p_sig = mean_power(signal.samples());
    if p_sig <= 0.0 {
        return Err(invalid("signal has zero power"));
    }
    let a = (10f64.powf(snr_db / 10.0) * p_noise / p_sig).sqrt();
    let scaled_sig = signal.scaled(Complex32::new(a as f32, 0.0));
    let ps = mean_power(scaled_sig.samples());

    let (scaled_int, b, realized_sinr) = match (interferer, sinr_db) {
        (None, None) => (None, 0.0, None),
        (None, Some(_)) => return Err(invalid("sinr_db given without an interferer")),
        (Some(_), None) => return Err(invalid("an interferer requires sinr_db")),
        (Some(int), Some(sinr)) => {
            if int.sample_rate_hz() != signal.sample_rate_hz() {
                return Err(WaveformError::LengthMismatch("interferer sample rate differs".into()));
            }
            if int.is_empty() {
                return Err(WaveformError::LengthMismatch("interferer is empty".into()));
            }
            if !sinr.is_finite() {
                return Err(invalid("sinr_db must be finite"));
            }
            if sinr > snr_db {
                return Err(WaveformError::InfeasibleSinr { snr_db, sinr_db: sinr });
            }
            let fitted = int.with_samples(cyclic_fit(int, n));
            let p_int = mean_power(fitted.samples());
            if p_int <= 0.0 {
                return Err(invalid("interferer has zero power"));
            }
            let b2 = (ps / 10f64.powf(sinr / 10.0) - p_noise).max(0.0) / p_int;
            let b = b2.sqrt();
            let scaled = fitted.scaled(Complex32::new(b as f32, 0.0));
            let pi = mean_power(scaled.samples());
            (Some(scaled), b, Some(db(ps / (pi + p_noise))))
        }
    };
    let meta = MixMetadata {
        signal_scale: a,
        interferer_scale: b,
        noise_power: p_noise,
        snr_db: db(ps / p_noise),
        sinr_db: realized_sinr,
    };
    Ok(MixComponents { signal: scaled_sig, interferer: scaled_int, noise, meta })
}

/// `a * signal + b * interferer + noise`, see [`mix_components`].
pub fn mix_at_snr(
    signal: &IqBuffer,
    interferer: Option<&IqBuffer>,
    snr_db: f64,
    sinr_db: Option<f64>,
    seed: u64,
) -> Result<(IqBuffer, MixMetadata), WaveformError> {
    let c = mix_components(signal, interferer, snr_db, sinr_db, seed)?;
    Ok((c.sum(), c.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqcore::{measure_power, psd_estimate, psd_bin_freqs};
    use std::num::NonZeroUsize;

    #[test]
    fn default_radar_duration_and_length() {
        let p = RadarParams::default();
        let b = gen_radar(&p).unwrap();
        assert_eq!(b.len(), 106_657);
        assert_eq!(b.sample_rate_hz(), 6e6);
        assert!((p.duration_s() - 0.017776).abs() < 1e-6);
        assert!((b.duration_s() * 1e3 - 17.8).abs() < 0.05);
    }

    #[test]
    fn radar_first_quadrant() {
        for seed in 0..5 {
            let p = RadarParams { seed, ..Default::default() };
            let b = gen_radar(&p).unwrap();
            assert!(b.samples().iter().all(|s| s.re >= 0.0 && s.im >= 0.0));
        }
    }

    #[test]
    fn zero_amplitude_collapses_to_offsets() {
        let p = RadarParams { amplitude: 0.0, i_offset: 0.3, q_offset: 0.7, ..Default::default() };
        let b = gen_radar(&p).unwrap();
        assert!(b.samples().iter().all(|s| *s == Complex32::new(0.3, 0.7)));
    }

    #[test]
    fn radar_rejects_bad_params() {
        let too_big = RadarParams { amplitude: 0.6, ..Default::default() };
        assert!(matches!(gen_radar(&too_big), Err(WaveformError::InvalidParams(_))));
        let wide = RadarParams { pulse_width_s: 2e-3, ..Default::default() };
        assert!(gen_radar(&wide).is_err());
        let neg = RadarParams { i_offset: 0.0, ..Default::default() };
        assert!(gen_radar(&neg).is_err());
    }

    #[test]
    fn radar_deterministic_and_seed_sensitive() {
        let a = gen_radar(&RadarParams::default()).unwrap();
        let b = gen_radar(&RadarParams::default()).unwrap();
        let c = gen_radar(&RadarParams { seed: 1, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn pulse_starts_follow_jittered_pri() {
        let p = RadarParams::default();
        let starts = radar_pulse_starts(&p);
        assert_eq!(starts[0], 0);
        for w in starts.windows(2) {
            let d = (w[1] - w[0]) as f64;
            assert!((6000.0 * 0.95 - 1.0..=6000.0 * 1.05 + 1.0).contains(&d));
        }
        assert!(starts.len() >= 17);
    }

    #[test]
    fn template_is_first_pulse() {
        let p = RadarParams::default();
        let t = radar_pulse_template(&p).unwrap();
        assert_eq!(t.len(), p.pulse_span_samples());
        assert_eq!(t.len(), 660);
        let full = gen_radar(&p).unwrap();
        assert_eq!(t.samples(), &full.samples()[..660]);
    }

    #[test]
    fn cellular_length_and_power() {
        let p = CellularParams::default();
        let b = gen_cellular(&p, 1, 3).unwrap();
        assert_eq!(b.len(), p.num_subcarriers + p.cp_len);
        let b = gen_cellular(&p, 20, 3).unwrap();
        assert!((measure_power(&b).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cellular_deterministic() {
        let p = CellularParams::default();
        assert_eq!(gen_cellular(&p, 4, 9).unwrap(), gen_cellular(&p, 4, 9).unwrap());
        assert_ne!(gen_cellular(&p, 4, 9).unwrap(), gen_cellular(&p, 4, 10).unwrap());
        assert!(gen_cellular(&p, 0, 9).is_err());
    }

    #[test]
    fn cellular_rejects_oversized_band() {
        let p = CellularParams { occupied_fraction: 0.9, ..Default::default() };
        assert!(matches!(gen_cellular(&p, 1, 0), Err(WaveformError::InvalidParams(_))));
    }

    #[test]
    fn cellular_psd_shape() {
        let p = CellularParams { bandwidth_hz: 6e6, occupied_fraction: 0.5, ..Default::default() };
        let b = gen_cellular(&p, 400, 1).unwrap();
        let nfft = 512;
        let psd = psd_estimate(&b, NonZeroUsize::new(nfft).unwrap()).unwrap();
        let freqs = psd_bin_freqs(nfft, p.sample_rate_hz);
        let edge = p.occupied_bandwidth_hz() / 2.0;
        let inband: Vec<f64> = freqs
            .iter()
            .zip(&psd)
            .filter(|(f, _)| f.abs() > 50e3 && f.abs() < edge - 100e3)
            .map(|(_, &v)| v)
            .collect();
        let lo = inband.iter().cloned().fold(f64::MAX, f64::min);
        let hi = inband.iter().cloned().fold(f64::MIN, f64::max);
        assert!(hi - lo <= 20.0, "in-band ripple {lo}..{hi}");
        // guard band, away from the transition region
        let guard_max = freqs
            .iter()
            .zip(&psd)
            .filter(|(f, _)| f.abs() > edge + 0.3e6)
            .map(|(_, &v)| v)
            .fold(f64::MIN, f64::max);
        assert!(guard_max <= -30.0, "guard {guard_max}");
    }

    #[test]
    fn noise_scaling_exact() {
        let a = gen_noise(1000, 1.0, 5, 1.0).unwrap();
        let b = gen_noise(1000, 4.0, 5, 1.0).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(*y, x * 2.0);
        }
        assert_eq!(a, gen_noise(1000, 1.0, 5, 1.0).unwrap());
        assert!(gen_noise(0, 1.0, 5, 1.0).is_err());
        assert!(gen_noise(10, 0.0, 5, 1.0).is_err());
    }

    #[test]
    fn noise_power_large_sample() {
        let p = measure_power(&gen_noise(1_000_000, 1.0, 11, 1.0).unwrap()).unwrap();
        assert!((0.99..=1.01).contains(&p), "{p}");
    }

    #[test]
    fn snr_only_mix() {
        let sig = gen_radar(&RadarParams::default()).unwrap().slice(0, 20_000);
        let c = mix_components(&sig, None, 0.0, None, 1).unwrap();
        let ps = mean_power(c.signal.samples());
        let pn = mean_power(c.noise.samples());
        assert!(((ps - pn) / pn).abs() < 1e-6);
        assert!(c.meta.snr_db.abs() < 1e-5);
    }

    #[test]
    fn sinr_mix_hits_target() {
        let sig = gen_radar(&RadarParams::default()).unwrap().slice(0, 20_000);
        let int = gen_cellular(&CellularParams::default(), 10, 2).unwrap();
        let c = mix_components(&sig, Some(&int), 10.0, Some(-20.0), 3).unwrap();
        let ps = mean_power(c.signal.samples());
        let pi = mean_power(c.interferer.as_ref().unwrap().samples());
        let pn = mean_power(c.noise.samples());
        let sinr = 10.0 * (ps / (pi + pn)).log10();
        assert!((sinr + 20.0).abs() < 0.01, "{sinr}");
        assert!((10.0 * (ps / pn).log10() - 10.0).abs() < 0.01);
        assert_eq!(c.interferer.as_ref().unwrap().len(), sig.len());
    }

    #[test]
    fn infeasible_sinr() {
        let sig = gen_radar(&RadarParams::default()).unwrap().slice(0, 2000);
        let int = gen_cellular(&CellularParams::default(), 2, 2).unwrap();
        assert_eq!(
            mix_at_snr(&sig, Some(&int), 10.0, Some(15.0), 0).unwrap_err(),
            WaveformError::InfeasibleSinr { snr_db: 10.0, sinr_db: 15.0 }
        );
        let other_rate = IqBuffer::new(int.samples().to_vec(), 1.0).unwrap();
        assert!(matches!(
            mix_at_snr(&sig, Some(&other_rate), 10.0, Some(0.0), 0),
            Err(WaveformError::LengthMismatch(_))
        ));
    }
}
