//! IQ sample buffers, the headerless `.iq` file format, 1024-point windows
//! and the spectral helpers built on them.
//!
//! A `.iq` file is a flat array of interleaved little-endian `f32` values,
//! I first then Q, with no header. Sample rate and centre frequency travel in
//! a JSON sidecar (`<file>.json`, see [`IqManifest`]).

use std::cell::RefCell;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::{Complex32, Complex64};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Classifier input length in samples.
pub const WINDOW_LEN: usize = 1024;

/// Lower clamp applied to PSD output, in dB relative to the peak bin.
pub const PSD_FLOOR_DB: f64 = -120.0;

#[derive(Debug, Error)]
pub enum IqError {
    #[error("malformed iq file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("invalid sample rate {0} Hz")]
    InvalidSampleRate(f64),
    #[error("window is all zeros and cannot be power-normalized")]
    ZeroWindow,
    #[error("expected a {expected:?}-domain window")]
    WrongDomain { expected: Domain },
    #[error("window must hold exactly {WINDOW_LEN} samples, got {0}")]
    WindowLength(usize),
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("buffer of {len} samples is shorter than nfft = {nfft}")]
    BufferTooShort { len: usize, nfft: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// A stream of complex baseband samples plus the metadata needed to
/// interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex32>,
    sample_rate_hz: f64,
    center_freq_hz: f64,
}

impl IqBuffer {
    /// Validates the sample rate and that every component is finite.
    pub fn new(samples: Vec<Complex32>, sample_rate_hz: f64) -> Result<Self, IqError> {
        check_rate(sample_rate_hz)?;
        if let Some(index) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(IqError::NonFiniteSample { index });
        }
        Ok(Self { samples, sample_rate_hz, center_freq_hz: 0.0 })
    }

    pub fn with_center_freq(mut self, center_freq_hz: f64) -> Self {
        self.center_freq_hz = center_freq_hz;
        self
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Result<Self, IqError> {
        Self::new(vec![Complex32::new(0.0, 0.0); len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex32> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same metadata, new samples. Caller guarantees finiteness.
    pub(crate) fn with_samples(&self, samples: Vec<Complex32>) -> Self {
        Self { samples, sample_rate_hz: self.sample_rate_hz, center_freq_hz: self.center_freq_hz }
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<Complex32>, sample_rate_hz: f64) -> Self {
        Self { samples, sample_rate_hz, center_freq_hz: 0.0 }
    }

    /// Concatenates `other` onto `self`; metadata of `self` is kept.
    pub fn concat(&self, other: &IqBuffer) -> IqBuffer {
        let mut samples = Vec::with_capacity(self.len() + other.len());
        samples.extend_from_slice(&self.samples);
        samples.extend_from_slice(&other.samples);
        self.with_samples(samples)
    }

    /// Sub-range `[start, start + len)`, clipped to the buffer.
    pub fn slice(&self, start: usize, len: usize) -> IqBuffer {
        let start = start.min(self.len());
        let end = start.saturating_add(len).min(self.len());
        self.with_samples(self.samples[start..end].to_vec())
    }

    /// Every sample multiplied by `factor`.
    pub fn scaled(&self, factor: Complex32) -> IqBuffer {
        self.with_samples(self.samples.iter().map(|s| s * factor).collect())
    }
}

fn check_rate(rate: f64) -> Result<(), IqError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(IqError::InvalidSampleRate(rate))
    }
}

/// Reads a headerless interleaved `f32le` file. The sample rate is not
/// stored in the file and must be supplied.
pub fn load_iq_file(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<IqBuffer, IqError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IqError::MalformedFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_iq_bytes(&bytes, sample_rate_hz).map_err(|e| match e {
        IqError::MalformedFile { reason, .. } => {
            IqError::MalformedFile { path: path.to_path_buf(), reason }
        }
        other => other,
    })
}

pub fn decode_iq_bytes(bytes: &[u8], sample_rate_hz: f64) -> Result<IqBuffer, IqError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(IqError::MalformedFile {
            path: PathBuf::new(),
            reason: format!("{} bytes is not a whole number of I/Q pairs", bytes.len()),
        });
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    IqBuffer::new(samples, sample_rate_hz)
}

pub fn encode_iq_bytes(buf: &IqBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(buf.len() * 8);
    for s in buf.samples() {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn save_iq_file(buf: &IqBuffer, path: impl AsRef<Path>) -> Result<(), IqError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_iq_bytes(buf))?;
    w.flush()?;
    Ok(())
}

/// JSON sidecar describing a `.iq` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqManifest {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    #[serde(default)]
    pub description: String,
}

impl IqManifest {
    pub fn for_buffer(buf: &IqBuffer, description: impl Into<String>) -> Self {
        Self {
            sample_rate_hz: buf.sample_rate_hz(),
            center_freq_hz: buf.center_freq_hz(),
            description: description.into(),
        }
    }
}

/// `radar.iq` -> `radar.iq.json`
pub fn manifest_path(iq_path: &Path) -> PathBuf {
    let mut s = iq_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_manifest(iq_path: &Path, manifest: &IqManifest) -> Result<(), IqError> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(manifest_path(iq_path), text)?;
    Ok(())
}

pub fn read_manifest(iq_path: &Path) -> Result<IqManifest, IqError> {
    let text = fs::read_to_string(manifest_path(iq_path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Saves the samples and their sidecar manifest.
pub fn save_with_manifest(buf: &IqBuffer, path: &Path, description: &str) -> Result<(), IqError> {
    save_iq_file(buf, path)?;
    write_manifest(path, &IqManifest::for_buffer(buf, description))
}

/// Loads samples using the rate in the sidecar manifest.
pub fn load_with_manifest(path: &Path) -> Result<IqBuffer, IqError> {
    let m = read_manifest(path)?;
    Ok(load_iq_file(path, m.sample_rate_hz)?.with_center_freq(m.center_freq_hz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Time,
    Frequency,
}

/// Exactly [`WINDOW_LEN`] complex values in one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Window1024 {
    values: Vec<Complex32>,
    domain: Domain,
}

impl Window1024 {
    pub fn new(values: Vec<Complex32>, domain: Domain) -> Result<Self, IqError> {
        if values.len() != WINDOW_LEN {
            return Err(IqError::WindowLength(values.len()));
        }
        Ok(Self { values, domain })
    }

    pub fn values(&self) -> &[Complex32] {
        &self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }
}

/// Cuts `buf` into windows starting at `0, stride, 2*stride, ...`. A trailing
/// partial window is dropped.
pub fn segment_windows(buf: &IqBuffer, stride: NonZeroUsize) -> Vec<Window1024> {
    let n = buf.len();
    if n < WINDOW_LEN {
        return Vec::new();
    }
    let count = (n - WINDOW_LEN) / stride.get() + 1;
    (0..count)
        .map(|i| {
            let start = i * stride.get();
            Window1024 {
                values: buf.samples()[start..start + WINDOW_LEN].to_vec(),
                domain: Domain::Time,
            }
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub(crate) fn inverse_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Unnormalized DFT of `x`, reordered so that DC sits at index `n/2`.
pub fn shifted_dft(x: &[Complex32]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|s| Complex64::new(s.re.into(), s.im.into())).collect();
    if n == 0 {
        return buf;
    }
    forward_fft(n).process(&mut buf);
    buf.rotate_right(n / 2);
    buf
}

/// DC-centred spectrum of a time window, scaled to unit mean power.
pub fn to_frequency(w: &Window1024) -> Result<Window1024, IqError> {
    if w.domain != Domain::Time {
        return Err(IqError::WrongDomain { expected: Domain::Time });
    }
    let spec = shifted_dft(&w.values);
    let power = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / WINDOW_LEN as f64;
    if power <= 0.0 || !power.is_finite() {
        return Err(IqError::ZeroWindow);
    }
    let scale = power.sqrt().recip();
    let values = spec.iter().map(|c| Complex32::new((c.re * scale) as f32, (c.im * scale) as f32)).collect();
    Ok(Window1024 { values, domain: Domain::Frequency })
}

/// Time window scaled to unit mean power (no transform).
pub fn normalize_time(w: &Window1024) -> Result<Window1024, IqError> {
    if w.domain != Domain::Time {
        return Err(IqError::WrongDomain { expected: Domain::Time });
    }
    let power = mean_power(&w.values);
    if power <= 0.0 {
        return Err(IqError::ZeroWindow);
    }
    let scale = power.sqrt().recip();
    let values = w
        .values
        .iter()
        .map(|c| Complex32::new((f64::from(c.re) * scale) as f32, (f64::from(c.im) * scale) as f32))
        .collect();
    Ok(Window1024 { values, domain: Domain::Time })
}

/// Mean `|x|^2` accumulated in `f64`; zero for an empty slice.
pub fn mean_power(samples: &[Complex32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| {
            let (re, im) = (f64::from(s.re), f64::from(s.im));
            re * re + im * im
        })
        .sum::<f64>()
        / samples.len() as f64
}

pub fn measure_power(buf: &IqBuffer) -> Result<f64, IqError> {
    if buf.is_empty() {
        return Err(IqError::EmptyBuffer);
    }
    Ok(mean_power(buf.samples()))
}

/// Welch PSD: Hann-windowed segments of `nfft` samples at 50% overlap,
/// averaged, DC-centred, in dB relative to the strongest bin and clamped at
/// [`PSD_FLOOR_DB`]. An all-zero buffer yields the floor in every bin.
pub fn psd_estimate(buf: &IqBuffer, nfft: NonZeroUsize) -> Result<Vec<f64>, IqError> {
    let nfft = nfft.get();
    if buf.len() < nfft {
        return Err(IqError::BufferTooShort { len: buf.len(), nfft });
    }
    let hann: Vec<f64> = (0..nfft)
        .map(|i| {
            if nfft == 1 {
                1.0
            } else {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / nfft as f64).cos()
            }
        })
        .collect();
    let hop = (nfft / 2).max(1);
    let fft = forward_fft(nfft);
    let mut acc = vec![0.0f64; nfft];
    let mut seg = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    let mut segments = 0usize;
    while start + nfft <= buf.len() {
        for (i, (dst, s)) in seg.iter_mut().zip(&buf.samples()[start..start + nfft]).enumerate() {
            *dst = Complex64::new(f64::from(s.re), f64::from(s.im)) * hann[i];
        }
        fft.process(&mut seg);
        for (a, c) in acc.iter_mut().zip(&seg) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    acc.iter_mut().for_each(|a| *a /= segments as f64);
    acc.rotate_right(nfft / 2);
    let peak = acc.iter().copied().fold(0.0f64, f64::max);
    Ok(acc
        .iter()
        .map(|&p| {
            if peak <= 0.0 || p <= 0.0 {
                PSD_FLOOR_DB
            } else {
                (10.0 * (p / peak).log10()).max(PSD_FLOOR_DB)
            }
        })
        .collect())
}

/// Frequency (Hz, relative to the centre) of each bin returned by
/// [`psd_estimate`].
pub fn psd_bin_freqs(nfft: usize, sample_rate_hz: f64) -> Vec<f64> {
    let half = (nfft / 2) as f64;
    (0..nfft).map(|k| (k as f64 - half) * sample_rate_hz / nfft as f64).collect()
}
