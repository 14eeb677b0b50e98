//! Embedded-Gaussian non-local block with a residual connection.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::DetectorError;

/// Projections of a non-local block on `C` channels with `Ci` inner
/// channels. Weights are `[C, Ci]` except `out_weight`, which is `[Ci, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NlbParams {
    pub theta_weight: Array2<f64>,
    pub theta_bias: Array1<f64>,
    pub phi_weight: Array2<f64>,
    pub phi_bias: Array1<f64>,
    pub g_weight: Array2<f64>,
    pub g_bias: Array1<f64>,
    pub out_weight: Array2<f64>,
    pub out_bias: Array1<f64>,
}

impl NlbParams {
    pub fn channels(&self) -> usize {
        self.theta_weight.nrows()
    }

    pub fn inner(&self) -> usize {
        self.theta_weight.ncols()
    }

    pub fn check(&self) -> Result<(), String> {
        let (c, ci) = self.theta_weight.dim();
        let ok = self.phi_weight.dim() == (c, ci)
            && self.g_weight.dim() == (c, ci)
            && self.out_weight.dim() == (ci, c)
            && [&self.theta_bias, &self.phi_bias, &self.g_bias].iter().all(|b| b.len() == ci)
            && self.out_bias.len() == c;
        if ok {
            Ok(())
        } else {
            Err(format!("non-local projections inconsistent with {c} channels / {ci} inner"))
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(mut a: Array2<f64>) -> Array2<f64> {
    for mut row in a.axis_iter_mut(Axis(0)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    a
}

/// `y = x + (softmax(theta(x) phi(x)^T) g(x)) W_out + b_out`.
pub fn non_local_block(x: ArrayView2<f64>, p: &NlbParams) -> Result<Array2<f64>, DetectorError> {
    p.check().map_err(DetectorError::ShapeMismatch)?;
    if x.ncols() != p.channels() {
        return Err(DetectorError::ShapeMismatch(format!("{} channels into a {}-channel block", x.ncols(), p.channels())));
    }
    let theta = x.dot(&p.theta_weight) + &p.theta_bias;
    let phi = x.dot(&p.phi_weight) + &p.phi_bias;
    let g = x.dot(&p.g_weight) + &p.g_bias;
    let attn = softmax_rows(theta.dot(&phi.t()));
    Ok(&x + &(attn.dot(&g).dot(&p.out_weight) + &p.out_bias))
}
