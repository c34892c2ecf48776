use super::{chan_index, check_inputs, softmax64, LossConfig};
use crate::error::{Error, Result};
use crate::tensor::Shape4;

/// Frequency-weighted cross-entropy averaged over non-ignored pixels.
///
/// Each pixel contributes `-log p_y / sqrt(f_y)`.
pub fn wce_f64(shape: Shape4, logits: &[f64], labels: &[u32], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    check_inputs(shape, logits, labels, cfg)?;
    let valid: Vec<usize> = (0..labels.len()).filter(|&i| !cfg.is_ignored(labels[i])).collect();
    let mut grad = vec![0.0; logits.len()];
    if valid.is_empty() {
        return Ok((0.0, grad));
    }
    let mut class_w = vec![0.0; shape.c];
    for &i in &valid {
        let y = labels[i] as usize;
        let f = *cfg.class_freqs.get(y).ok_or_else(|| {
            Error::param(
                "loss.class_freqs",
                format!("no frequency for class {y} ({} given)", cfg.class_freqs.len()),
            )
        })?;
        if !(f > 0.0) {
            return Err(Error::param(
                "loss.class_freqs",
                format!("class {y} is present with frequency {f}"),
            ));
        }
        class_w[y] = 1.0 / f.sqrt();
    }

    let p = softmax64(shape, logits);
    let norm = valid.len() as f64;
    let mut value = 0.0;
    for &i in &valid {
        let y = labels[i] as usize;
        let w = class_w[y];
        let zs: Vec<f64> = (0..shape.c).map(|k| logits[chan_index(shape, i, k)]).collect();
        let m = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + zs.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        value += w * (lse - zs[y]);
        for k in 0..shape.c {
            let at = chan_index(shape, i, k);
            let onehot = if k == y { 1.0 } else { 0.0 };
            grad[at] = w * (p[at] - onehot) / norm;
        }
    }
    Ok((value / norm, grad))
}
