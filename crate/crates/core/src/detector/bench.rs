//! Inference latency against batch size.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::weights::Network;
use super::DetectorError;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub batch_size: usize,
    pub mean_s: f64,
    pub std_s: f64,
    /// Coefficient of variation, reported only.
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rows: Vec<LatencyRow>,
    /// Mean time strictly increases with batch size.
    pub monotone: bool,
    /// Coefficient of determination of a least-squares line through
    /// (batch size, mean time).
    pub r_squared: f64,
}

/// R² of the ordinary least-squares line through `(x, y)`.
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Times `trials` forward passes per batch size on random unit-power
/// inputs, after one warm-up pass each.
pub fn bench_latency(net: &Network, batch_sizes: &[usize], trials: usize, seed: u64) -> Result<LatencyReport, DetectorError> {
    if trials < 10 {
        return Err(DetectorError::InvalidParams("at least 10 trials required".into()));
    }
    if batch_sizes.is_empty() || batch_sizes.contains(&0) {
        return Err(DetectorError::InvalidParams("batch sizes must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let largest = *batch_sizes.iter().max().expect("nonempty");
    // uniform(-1, 1) has variance 1/3 per component
    let scale = 1.5f32.sqrt();
    let inputs: Vec<Vec<[f32; 2]>> = (0..largest)
        .map(|_| {
            (0..net.input_len)
                .map(|_| [rng.random_range(-1.0f32..1.0) * scale, rng.random_range(-1.0f32..1.0) * scale])
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for &b in batch_sizes {
        let batch = &inputs[..b];
        net.forward(batch)?;
        let times: Vec<f64> = (0..trials)
            .map(|_| {
                let t0 = Instant::now();
                net.forward(batch).map(|_| t0.elapsed().as_secs_f64())
            })
            .collect::<Result<_, _>>()?;
        let mean = times.iter().sum::<f64>() / trials as f64;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        rows.push(LatencyRow { batch_size: b, mean_s: mean, std_s: var.sqrt(), cv: var.sqrt() / mean });
    }
    let mut sorted = rows.clone();
    sorted.sort_by_key(|r| r.batch_size);
    let monotone = sorted.windows(2).all(|w| w[1].mean_s > w[0].mean_s);
    let x: Vec<f64> = sorted.iter().map(|r| r.batch_size as f64).collect();
    let y: Vec<f64> = sorted.iter().map(|r| r.mean_s).collect();
    Ok(LatencyReport { rows, monotone, r_squared: linear_fit_r2(&x, &y) })
}
