//! Segmentation losses with analytic gradients with respect to logits.
//!
//! All three losses consume softmax probabilities of the logits. Internally
//! everything is computed in `f64`; the `*_f64` entry points expose that
//! precision directly for finite-difference checking, and the [`Tensor4`]
//! wrappers round the gradient to `f32` at the end.
//!
//! Labels are one class id per pixel, laid out `(n, h, w)` to match the
//! logits. Pixels labelled with the ignore class contribute nothing and
//! receive a zero gradient.

mod boundary;
mod lovasz;
mod wce;

pub use boundary::{boundary_image, boundary_loss_f64};
pub use lovasz::{lovasz_class_values, lovasz_f64, LovaszErrors};
pub use wce::wce_f64;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Loss hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// `(wce, lovasz, boundary)` weights of the combined loss.
    pub weights: [f64; 3],
    /// Weights of the three auxiliary heads.
    pub aux_weights: [f64; 3],
    /// Boundary pooling window.
    pub theta0: usize,
    /// Per-class frequency `f_c`; cross-entropy weights are `1 / sqrt(f_c)`.
    pub class_freqs: Vec<f64>,
    pub ignore_class: Option<u32>,
}

impl LossConfig {
    pub const DEFAULT_WEIGHTS: [f64; 3] = [1.0, 1.5, 1.0];
    pub const DEFAULT_AUX_WEIGHTS: [f64; 3] = [1.0, 1.0, 0.5];
    pub const DEFAULT_THETA0: usize = 3;

    /// Default weights and window with the given frequencies.
    pub fn new(class_freqs: Vec<f64>, ignore_class: Option<u32>) -> Self {
        Self {
            weights: Self::DEFAULT_WEIGHTS,
            aux_weights: Self::DEFAULT_AUX_WEIGHTS,
            theta0: Self::DEFAULT_THETA0,
            class_freqs,
            ignore_class,
        }
    }

    /// Equal frequencies for `num_classes` classes, no ignore class.
    pub fn uniform(num_classes: usize) -> Self {
        Self::new(vec![1.0 / num_classes as f64; num_classes], None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0 == 0 || self.theta0 % 2 == 0 {
            return Err(Error::param(
                "loss.theta0",
                format!("must be odd and >= 1, got {}", self.theta0),
            ));
        }
        for (name, ws) in [("loss.weights", &self.weights), ("loss.aux_weights", &self.aux_weights)] {
            if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::param(name, "weights must be finite and >= 0"));
            }
        }
        for (c, f) in self.class_freqs.iter().enumerate() {
            if Some(c as u32) == self.ignore_class {
                continue;
            }
            if !(f.is_finite() && *f > 0.0 && *f <= 1.0) {
                return Err(Error::param(
                    "loss.class_freqs",
                    format!("class {c} has frequency {f}, expected (0, 1]"),
                ));
            }
        }
        Ok(())
    }

    fn is_ignored(&self, label: u32) -> bool {
        Some(label) == self.ignore_class
    }
}

/// A loss value with its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Tensor4,
}

/// Combined main-plus-auxiliary loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxLossOutput {
    pub value: f64,
    pub main_grad: Tensor4,
    /// Gradient for each auxiliary head's logits, already scaled by its weight.
    pub aux_grads: Vec<Tensor4>,
}

pub fn wce(logits: &Tensor4, labels: &[u32], cfg: &LossConfig) -> Result<LossOutput> {
    run_f64(logits, labels, cfg, wce_f64)
}

pub fn lovasz(logits: &Tensor4, labels: &[u32], cfg: &LossConfig) -> Result<LossOutput> {
    run_f64(logits, labels, cfg, lovasz_f64)
}

pub fn boundary_loss(logits: &Tensor4, labels: &[u32], cfg: &LossConfig) -> Result<LossOutput> {
    run_f64(logits, labels, cfg, boundary_loss_f64)
}

/// `w1 * wce + w2 * lovasz + w3 * boundary`.
pub fn total_loss(logits: &Tensor4, labels: &[u32], cfg: &LossConfig) -> Result<LossOutput> {
    let parts = [
        wce(logits, labels, cfg)?,
        lovasz(logits, labels, cfg)?,
        boundary_loss(logits, labels, cfg)?,
    ];
    combine(&parts, &cfg.weights)
}

/// Main loss plus the weighted combined loss of each auxiliary head.
pub fn total_with_aux(
    main: &LossOutput,
    aux_logits: &[Tensor4],
    labels: &[u32],
    cfg: &LossConfig,
) -> Result<AuxLossOutput> {
    if aux_logits.len() != 3 {
        return Err(Error::param(
            "aux_logits",
            format!("expected 3 auxiliary heads, got {}", aux_logits.len()),
        ));
    }
    let aux = aux_logits
        .iter()
        .map(|l| total_loss(l, labels, cfg))
        .collect::<Result<Vec<_>>>()?;
    combine_aux(main, &aux, &cfg.aux_weights)
}

/// Weighted sum of loss outputs; gradients are summed elementwise.
pub fn combine(parts: &[LossOutput], weights: &[f64]) -> Result<LossOutput> {
    if parts.is_empty() || parts.len() != weights.len() {
        return Err(Error::param(
            "weights",
            format!("{} weights for {} losses", weights.len(), parts.len()),
        ));
    }
    let shape = parts[0].grad.shape();
    if let Some(p) = parts.iter().find(|p| p.grad.shape() != shape) {
        return Err(Error::shape(
            "combine",
            format!("gradient {} vs {shape}", p.grad.shape()),
        ));
    }
    let value = parts.iter().zip(weights).map(|(p, w)| w * p.value).sum();
    let mut grad = vec![0.0f64; shape.numel()];
    for (p, w) in parts.iter().zip(weights) {
        for (g, v) in grad.iter_mut().zip(p.grad.data()) {
            *g += w * f64::from(*v);
        }
    }
    Ok(LossOutput {
        value,
        grad: to_tensor(shape, &grad),
    })
}

/// `main + sum_i lambda_i * aux_i`, keeping one gradient per head.
pub fn combine_aux(main: &LossOutput, aux: &[LossOutput], weights: &[f64; 3]) -> Result<AuxLossOutput> {
    if aux.len() != 3 {
        return Err(Error::param(
            "aux",
            format!("expected 3 auxiliary heads, got {}", aux.len()),
        ));
    }
    let value = main.value + aux.iter().zip(weights).map(|(a, w)| w * a.value).sum::<f64>();
    let aux_grads = aux
        .iter()
        .zip(weights)
        .map(|(a, w)| {
            let g: Vec<f64> = a.grad.data().iter().map(|v| w * f64::from(*v)).collect();
            to_tensor(a.grad.shape(), &g)
        })
        .collect();
    Ok(AuxLossOutput {
        value,
        main_grad: main.grad.clone(),
        aux_grads,
    })
}

type LossFn = fn(Shape4, &[f64], &[u32], &LossConfig) -> Result<(f64, Vec<f64>)>;

fn run_f64(logits: &Tensor4, labels: &[u32], cfg: &LossConfig, f: LossFn) -> Result<LossOutput> {
    let z: Vec<f64> = logits.data().iter().map(|v| f64::from(*v)).collect();
    let (value, grad) = f(logits.shape(), &z, labels, cfg)?;
    Ok(LossOutput {
        value,
        grad: to_tensor(logits.shape(), &grad),
    })
}

fn to_tensor(shape: Shape4, data: &[f64]) -> Tensor4 {
    Tensor4::from_parts(shape, data.iter().map(|v| *v as f32).collect())
}

/// Shared precondition checks for every loss.
fn check_inputs(shape: Shape4, logits: &[f64], labels: &[u32], cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    if logits.len() != shape.numel() {
        return Err(Error::shape(
            "loss",
            format!("{} logits for shape {shape}", logits.len()),
        ));
    }
    if labels.len() != shape.n * shape.plane() {
        return Err(Error::shape(
            "loss",
            format!("{} labels for {} pixels", labels.len(), shape.n * shape.plane()),
        ));
    }
    if let Some(&id) = labels.iter().find(|&&l| l as usize >= shape.c) {
        return Err(Error::ClassOutOfRange {
            id,
            num_classes: shape.c,
        });
    }
    Ok(())
}

/// Channel-wise softmax of `f64` logits in NCHW layout.
fn softmax64(shape: Shape4, z: &[f64]) -> Vec<f64> {
    let (c, hw) = (shape.c, shape.plane());
    let mut p = vec![0.0; z.len()];
    for b in 0..shape.n {
        let base = b * c * hw;
        for s in 0..hw {
            let at = |k: usize| base + k * hw + s;
            let m = (0..c).map(|k| z[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for k in 0..c {
                let e = (z[at(k)] - m).exp();
                p[at(k)] = e;
                sum += e;
            }
            for k in 0..c {
                p[at(k)] /= sum;
            }
        }
    }
    p
}

/// Pulls a gradient with respect to probabilities back to the logits:
/// `dz_k = p_k (g_k - sum_c g_c p_c)`.
fn softmax_backward(shape: Shape4, p: &[f64], gp: &[f64]) -> Vec<f64> {
    let (c, hw) = (shape.c, shape.plane());
    let mut gz = vec![0.0; p.len()];
    for b in 0..shape.n {
        let base = b * c * hw;
        for s in 0..hw {
            let at = |k: usize| base + k * hw + s;
            let dot: f64 = (0..c).map(|k| gp[at(k)] * p[at(k)]).sum();
            for k in 0..c {
                gz[at(k)] = p[at(k)] * (gp[at(k)] - dot);
            }
        }
    }
    gz
}

/// Flat index of channel `k` at pixel `pix` (pixels enumerate `(n, h, w)`).
#[inline]
fn chan_index(shape: Shape4, pix: usize, k: usize) -> usize {
    let hw = shape.plane();
    (pix / hw * shape.c + k) * hw + pix % hw
}
