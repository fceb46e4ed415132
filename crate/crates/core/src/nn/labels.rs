use crate::error::{Error, Result};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Label smoothing: `l - alpha * (l - 1/N)`.
///
/// The on-class entry becomes `1 - alpha + alpha/N`, every other entry `alpha/N`.
pub fn smooth_labels(one_hot: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "smoothing parameter {alpha} outside [0, 1]"
        )));
    }
    let ones = one_hot.iter().filter(|&&v| v == 1.0).count();
    let zeros = one_hot.iter().filter(|&&v| v == 0.0).count();
    if one_hot.is_empty() || ones != 1 || ones + zeros != one_hot.len() {
        return Err(Error::InvalidArgument("label vector is not one-hot".into()));
    }
    let n = one_hot.len() as f64;
    Ok(one_hot.iter().map(|&l| l - alpha * (l - 1.0 / n)).collect())
}
