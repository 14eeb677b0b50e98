//! Dense building blocks over `(length, channels)` arrays.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayView3, Axis};

use super::DetectorError;

/// 1-D cross-correlation with zero padding:
/// `y[l, f] = b[f] + sum_{k, c} x[l*stride + k - padding, c] * w[k, c, f]`.
pub fn conv1d(
    x: ArrayView2<f64>,
    w: ArrayView3<f64>,
    b: ArrayView1<f64>,
    stride: usize,
    padding: usize,
) -> Result<Array2<f64>, DetectorError> {
    let (len, cin) = x.dim();
    let (k, wc, cout) = w.dim();
    if wc != cin || b.len() != cout || stride == 0 || k == 0 {
        return Err(DetectorError::ShapeMismatch(format!(
            "conv input {len}x{cin}, kernel {k}x{wc}x{cout}, bias {}, stride {stride}",
            b.len()
        )));
    }
    let padded = len + 2 * padding;
    if padded < k {
        return Err(DetectorError::ShapeMismatch(format!("kernel {k} longer than padded input {padded}")));
    }
    let out_len = (padded - k) / stride + 1;
    let mut xp = Array2::<f64>::zeros((padded, cin));
    xp.slice_mut(s![padding..padding + len, ..]).assign(&x);
    let mut cols = Array2::<f64>::zeros((out_len, k * cin));
    for l in 0..out_len {
        let src = xp.slice(s![l * stride..l * stride + k, ..]);
        for (dst, v) in cols.row_mut(l).iter_mut().zip(src.iter()) {
            *dst = *v;
        }
    }
    let wm = w.to_shape((k * cin, cout)).expect("contiguous kernel");
    Ok(cols.dot(&wm) + b)
}

pub fn relu(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Non-overlapping max over pairs along the length axis; an odd trailing
/// row is dropped.
pub fn maxpool2(x: ArrayView2<f64>) -> Array2<f64> {
    let (len, c) = x.dim();
    let mut out = Array2::<f64>::zeros((len / 2, c));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (a, b) = (x.row(2 * i), x.row(2 * i + 1));
        row.iter_mut().zip(a.iter().zip(b.iter())).for_each(|(o, (p, q))| *o = p.max(*q));
    }
    out
}

pub const BN_EPS: f64 = 1e-5;

/// Inference-mode batch norm per channel.
pub fn batch_norm(
    x: &mut Array2<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    mean: ArrayView1<f64>,
    var: ArrayView1<f64>,
) {
    let scale: Array1<f64> = (&var + BN_EPS).mapv(|v| v.sqrt().recip()) * gamma;
    let shift: Array1<f64> = &beta - &(&mean * &scale);
    x.axis_iter_mut(Axis(0)).for_each(|mut row| {
        row *= &scale;
        row += &shift;
    });
}

pub fn dense(x: ArrayView1<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>, DetectorError> {
    if w.nrows() != x.len() || w.ncols() != b.len() {
        return Err(DetectorError::ShapeMismatch(format!(
            "dense input {}, weight {:?}, bias {}",
            x.len(),
            w.dim(),
            b.len()
        )));
    }
    Ok(x.dot(&w) + b)
}

/// Logistic function clamped to `[1e-12, 1 - 1e-12]` so that outputs stay
/// strictly inside the unit interval.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
    p.clamp(1e-12, 1.0 - 1e-12)
}
