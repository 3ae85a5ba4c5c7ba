use crate::error::{Error, Result};

use super::Mat;

/// Max-subtracted softmax over one logit vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Softmax over `v`, overwriting it. `v` must be non-empty and finite.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Mat) -> Result<Mat> {
    if logits.cols() == 0 {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("softmax logits"));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// `log(softmax(v))` computed as `v - logsumexp(v)`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

/// Pulls a gradient w.r.t. softmax outputs back to the logits:
/// `dz = p ⊙ (dp − ⟨p, dp⟩)`.
pub fn softmax_backward(probs: &[f64], d_probs: &[f64], d_logits: &mut [f64]) {
    let inner: f64 = probs.iter().zip(d_probs).map(|(p, g)| p * g).sum();
    for ((o, p), g) in d_logits.iter_mut().zip(probs).zip(d_probs) {
        *o = p * (g - inner);
    }
}
