use super::{chan_index, check_inputs, softmax64, softmax_backward, LossConfig};
use crate::error::Result;
use crate::tensor::Shape4;

/// Per-pixel errors of one class: `1 - p` on the class's own pixels and `p`
/// everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct LovaszErrors {
    pub class: u32,
    pub errors: Vec<f64>,
    /// Whether each pixel belongs to `class` in the ground truth.
    pub members: Vec<bool>,
}

impl LovaszErrors {
    /// `probs[i]` is the predicted probability of `class` at the pixel labelled `labels[i]`.
    pub fn new(class: u32, probs: &[f64], labels: &[u32]) -> Self {
        let members: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        let errors = probs
            .iter()
            .zip(&members)
            .map(|(&p, &m)| if m { 1.0 - p } else { p })
            .collect();
        Self { class, errors, members }
    }

    /// Pixel indices by descending error; equal errors keep pixel order.
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.errors.len()).collect();
        order.sort_by(|&a, &b| self.errors[b].total_cmp(&self.errors[a]));
        order
    }

    /// Lovász extension of the Jaccard loss at these errors, and its
    /// gradient with respect to each error.
    pub fn extension(&self) -> (f64, Vec<f64>) {
        let gts = self.members.iter().filter(|m| **m).count() as f64;
        let mut grad = vec![0.0; self.errors.len()];
        let (mut fn_seen, mut fp_seen) = (0.0, 0.0);
        let mut prev = 0.0;
        let mut value = 0.0;
        for i in self.sorted_order() {
            if self.members[i] {
                fn_seen += 1.0;
            } else {
                fp_seen += 1.0;
            }
            let jaccard = 1.0 - (gts - fn_seen) / (gts + fp_seen);
            let g = jaccard - prev;
            prev = jaccard;
            grad[i] = g;
            value += self.errors[i] * g;
        }
        (value, grad)
    }
}

/// Lovász-softmax loss averaged over the classes present in the labels.
pub fn lovasz_f64(shape: Shape4, logits: &[f64], labels: &[u32], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    check_inputs(shape, logits, labels, cfg)?;
    let p = softmax64(shape, logits);
    let (valid, classes) = present(labels, cfg);
    let mut gp = vec![0.0; logits.len()];
    if classes.is_empty() {
        return Ok((0.0, gp));
    }
    let kept: Vec<u32> = valid.iter().map(|&i| labels[i]).collect();
    let mut value = 0.0;
    for &c in &classes {
        let probs: Vec<f64> = valid.iter().map(|&i| p[chan_index(shape, i, c as usize)]).collect();
        let e = LovaszErrors::new(c, &probs, &kept);
        let (v, ge) = e.extension();
        value += v;
        for (j, &i) in valid.iter().enumerate() {
            let sign = if e.members[j] { -1.0 } else { 1.0 };
            gp[chan_index(shape, i, c as usize)] += sign * ge[j];
        }
    }
    let k = classes.len() as f64;
    gp.iter_mut().for_each(|g| *g /= k);
    Ok((value / k, softmax_backward(shape, &p, &gp)))
}

/// Per-class Lovász values evaluated directly on probabilities (NCHW layout),
/// for each class present in the labels.
pub fn lovasz_class_values(shape: Shape4, probs: &[f64], labels: &[u32], cfg: &LossConfig) -> Result<Vec<(u32, f64)>> {
    check_inputs(shape, probs, labels, cfg)?;
    let (valid, classes) = present(labels, cfg);
    let kept: Vec<u32> = valid.iter().map(|&i| labels[i]).collect();
    Ok(classes
        .into_iter()
        .map(|c| {
            let pc: Vec<f64> = valid.iter().map(|&i| probs[chan_index(shape, i, c as usize)]).collect();
            (c, LovaszErrors::new(c, &pc, &kept).extension().0)
        })
        .collect())
}

/// Non-ignored pixel indices and the sorted classes they contain.
fn present(labels: &[u32], cfg: &LossConfig) -> (Vec<usize>, Vec<u32>) {
    let valid: Vec<usize> = (0..labels.len()).filter(|&i| !cfg.is_ignored(labels[i])).collect();
    let mut classes: Vec<u32> = valid.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    (valid, classes)
}
