//! Central finite-difference checks of the analytic loss gradients.
//!
//! Random instances are drawn away from the points where the losses are not
//! differentiable: sorting ties in the Lovász errors and ties for the window
//! maximum in the boundary pooling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{boundary_loss_f64, lovasz_f64, wce_f64, LossConfig, LovaszErrors};
use crate::tensor::{max_pool_plane, Shape4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Wce,
    Lovasz,
    Boundary,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Wce, LossKind::Lovasz, LossKind::Boundary];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Wce => "wce",
            LossKind::Lovasz => "lovasz",
            LossKind::Boundary => "boundary",
        }
    }

    /// Maximum allowed relative error.
    pub fn tolerance(self) -> f64 {
        match self {
            LossKind::Wce => 1e-4,
            LossKind::Lovasz | LossKind::Boundary => 1e-3,
        }
    }

    pub fn eval(self, shape: Shape4, logits: &[f64], labels: &[u32], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Wce => wce_f64(shape, logits, labels, cfg),
            LossKind::Lovasz => lovasz_f64(shape, logits, labels, cfg),
            LossKind::Boundary => boundary_loss_f64(shape, logits, labels, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub shape: Shape4,
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    /// Minimum gap between competing values at sort and pooling decisions.
    /// One logit step moves any probability by at most `step / 4`, so a
    /// margin above that keeps the whole difference stencil on one smooth
    /// piece.
    pub tie_margin: f64,
    /// Test hook: perturbs one analytic gradient entry per instance.
    pub corrupt: bool,
}

impl GradcheckConfig {
    pub fn new(shape: Shape4, instances: usize, seed: u64) -> Self {
        Self {
            shape,
            instances,
            seed,
            step: 1e-3,
            tie_margin: 3e-4,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckResult {
    pub kind: LossKind,
    pub shape: Shape4,
    pub instances: usize,
    /// Instances drawn and discarded for being too close to a tie.
    pub rejected: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Denominator floor so entries that are zero analytically and numerically
/// do not divide by zero.
pub const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn check_loss(kind: LossKind, loss: &LossConfig, gc: &GradcheckConfig) -> Result<GradcheckResult> {
    loss.validate()?;
    let shape = gc.shape;
    if shape.numel() == 0 {
        return Err(Error::param("sizes", "empty shape"));
    }
    let classes: Vec<u32> = (0..shape.c as u32).filter(|c| Some(*c) != loss.ignore_class).collect();
    if classes.len() < 2 {
        return Err(Error::param(
            "sizes",
            format!("{shape} leaves fewer than two usable classes"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    let max_draws = gc.instances.max(1) * 10_000;
    let (mut accepted, mut rejected) = (0, 0);
    let mut worst: f64 = 0.0;
    while accepted < gc.instances {
        if accepted + rejected >= max_draws {
            return Err(Error::param(
                "sizes",
                format!(
                    "could not draw {} tie-free {} instances of {shape}",
                    gc.instances,
                    kind.name()
                ),
            ));
        }
        let logits: Vec<f64> = (0..shape.numel()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<u32> = (0..shape.n * shape.plane())
            .map(|_| classes[rng.random_range(0..classes.len())])
            .collect();
        if !well_separated(kind, shape, &logits, &labels, loss, gc.tie_margin) {
            rejected += 1;
            continue;
        }
        let (_, mut analytic) = kind.eval(shape, &logits, &labels, loss)?;
        if gc.corrupt {
            let i = rng.random_range(0..analytic.len());
            analytic[i] += 0.1 * analytic[i].abs().max(1e-3);
        }
        let mut failure = None;
        let numeric = central_difference(
            |z| match kind.eval(shape, z, &labels, loss) {
                Ok((v, _)) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &logits,
            gc.step,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        for (a, n) in analytic.iter().zip(&numeric) {
            let r = relative_error(*a, *n);
            worst = if r.is_nan() { f64::INFINITY } else { worst.max(r) };
        }
        accepted += 1;
    }
    Ok(GradcheckResult {
        kind,
        shape,
        instances: accepted,
        rejected,
        max_rel_error: worst,
        tolerance: kind.tolerance(),
    })
}

fn softmax(shape: Shape4, z: &[f64]) -> Vec<f64> {
    let hw = shape.plane();
    let mut p = z.to_vec();
    for b in 0..shape.n {
        for s in 0..hw {
            let idx: Vec<usize> = (0..shape.c).map(|k| (b * shape.c + k) * hw + s).collect();
            let m = idx.iter().map(|&i| z[i]).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = idx.iter().map(|&i| (z[i] - m).exp()).sum();
            idx.iter().for_each(|&i| p[i] = (z[i] - m).exp() / sum);
        }
    }
    p
}

/// Whether the instance is at least `margin` away from every non-smooth point
/// of the loss (and, for the boundary loss, has a boundary at all).
pub fn well_separated(
    kind: LossKind,
    shape: Shape4,
    logits: &[f64],
    labels: &[u32],
    cfg: &LossConfig,
    margin: f64,
) -> bool {
    let hw = shape.plane();
    let p = softmax(shape, logits);
    let prob = |pix: usize, c: usize| p[(pix / hw * shape.c + c) * hw + pix % hw];
    match kind {
        LossKind::Wce => true,
        LossKind::Lovasz => {
            let valid: Vec<usize> = (0..labels.len())
                .filter(|&i| Some(labels[i]) != cfg.ignore_class)
                .collect();
            let kept: Vec<u32> = valid.iter().map(|&i| labels[i]).collect();
            let mut present = kept.clone();
            present.sort_unstable();
            present.dedup();
            present.iter().all(|&c| {
                let probs: Vec<f64> = valid.iter().map(|&i| prob(i, c as usize)).collect();
                let e = LovaszErrors::new(c, &probs, &kept);
                let order = e.sorted_order();
                order.windows(2).all(|w| e.errors[w[0]] - e.errors[w[1]] >= margin)
            })
        }
        LossKind::Boundary => {
            let (h, w) = (shape.h, shape.w);
            let r = (cfg.theta0 - 1) / 2;
            let mut any_boundary = false;
            for c in 0..shape.c {
                if Some(c as u32) == cfg.ignore_class {
                    continue;
                }
                for b in 0..shape.n {
                    let lab = &labels[b * hw..(b + 1) * hw];
                    let inv: Vec<f64> = lab.iter().map(|&l| if l == c as u32 { 0.0 } else { 1.0 }).collect();
                    let mut pooled = vec![0.0; hw];
                    max_pool_plane(&inv, h, w, cfg.theta0, f64::NEG_INFINITY, &mut pooled, None);
                    any_boundary |= pooled.iter().zip(&inv).any(|(p, a)| p - a > 0.0);

                    let a: Vec<f64> = (0..hw).map(|s| 1.0 - prob(b * hw + s, c)).collect();
                    for y in 0..h {
                        for x in 0..w {
                            let mut top = [f64::NEG_INFINITY; 2];
                            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                                    let v = a[yy * w + xx];
                                    if v > top[0] {
                                        top = [v, top[0]];
                                    } else if v > top[1] {
                                        top[1] = v;
                                    }
                                }
                            }
                            if top[1].is_finite() && top[0] - top[1] < margin {
                                return false;
                            }
                        }
                    }
                }
            }
            any_boundary
        }
    }
}
