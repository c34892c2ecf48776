use super::{check_inputs, softmax64, softmax_backward, LossConfig};
use crate::error::{Error, Result};
use crate::tensor::Shape4;
use crate::tensor::{max_pool2d, max_pool_plane, Tensor4};

const EPS: f64 = 1e-7;

/// `pool(1 - y, theta0) - (1 - y)` per channel plane, with stride-1 max
/// pooling padded to keep the spatial size.
pub fn boundary_image(onehot: &Tensor4, theta0: usize) -> Result<Tensor4> {
    if theta0 == 0 || theta0 % 2 == 0 {
        return Err(Error::param("theta0", format!("must be odd and >= 1, got {theta0}")));
    }
    let mut inv = onehot.clone();
    inv.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    let mut pooled = max_pool2d(&inv, theta0)?;
    pooled.data_mut().iter_mut().zip(inv.data()).for_each(|(p, a)| *p -= *a);
    Ok(pooled)
}

/// Boundary F1 loss averaged over classes whose ground truth has a
/// non-empty boundary.
///
/// Ignored pixels are treated as zero in both the target and the predicted
/// class maps, so their gradient is exactly zero.
pub fn boundary_loss_f64(shape: Shape4, logits: &[f64], labels: &[u32], cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    check_inputs(shape, logits, labels, cfg)?;
    let (h, w, hw) = (shape.h, shape.w, shape.plane());
    let p = softmax64(shape, logits);
    let mut gp = vec![0.0; logits.len()];
    let mut value = 0.0;
    let mut contributing = 0usize;

    let mut a = vec![0.0; hw];
    let mut pooled = vec![0.0; hw];
    let mut argmax = vec![0usize; hw];
    let mut yb = vec![0.0; shape.n * hw];
    let mut pb = vec![0.0; shape.n * hw];
    let mut arg_all = vec![0usize; shape.n * hw];
    for c in 0..shape.c {
        if cfg.is_ignored(c as u32) {
            continue;
        }
        for b in 0..shape.n {
            let lab = &labels[b * hw..(b + 1) * hw];
            for (s, av) in a.iter_mut().enumerate() {
                *av = if lab[s] == c as u32 { 0.0 } else { 1.0 };
            }
            max_pool_plane(&a, h, w, cfg.theta0, f64::NEG_INFINITY, &mut pooled, None);
            for s in 0..hw {
                yb[b * hw + s] = pooled[s] - a[s];
            }
            let probs = &p[(b * shape.c + c) * hw..][..hw];
            for (s, av) in a.iter_mut().enumerate() {
                *av = if cfg.is_ignored(lab[s]) { 1.0 } else { 1.0 - probs[s] };
            }
            max_pool_plane(&a, h, w, cfg.theta0, f64::NEG_INFINITY, &mut pooled, Some(&mut argmax));
            for s in 0..hw {
                pb[b * hw + s] = pooled[s] - a[s];
                arg_all[b * hw + s] = b * hw + argmax[s];
            }
        }
        let sy: f64 = yb.iter().sum();
        if sy <= 0.0 {
            continue;
        }
        let sp: f64 = pb.iter().sum();
        let t: f64 = pb.iter().zip(&yb).map(|(x, y)| x * y).sum();
        let prec = t / (sp + EPS);
        let rec = t / (sy + EPS);
        let den = prec + rec + EPS;
        value += 1.0 - 2.0 * prec * rec / den;
        contributing += 1;

        // d(1 - F)/dP and d(1 - F)/dR
        let d_prec = -2.0 * rec * (rec + EPS) / (den * den);
        let d_rec = -2.0 * prec * (prec + EPS) / (den * den);
        // gradient with respect to a = 1 - yhat, accumulated per pixel
        let mut ga = vec![0.0; shape.n * hw];
        for i in 0..shape.n * hw {
            let g_pb = d_prec * (yb[i] / (sp + EPS) - t / ((sp + EPS) * (sp + EPS))) + d_rec * yb[i] / (sy + EPS);
            ga[arg_all[i]] += g_pb;
            ga[i] -= g_pb;
        }
        for b in 0..shape.n {
            for s in 0..hw {
                if !cfg.is_ignored(labels[b * hw + s]) {
                    gp[(b * shape.c + c) * hw + s] -= ga[b * hw + s];
                }
            }
        }
    }
    if contributing == 0 {
        return Ok((0.0, vec![0.0; logits.len()]));
    }
    let k = contributing as f64;
    gp.iter_mut().for_each(|g| *g /= k);
    Ok((value / k, softmax_backward(shape, &p, &gp)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_two_columns() {
        let y = Tensor4::from_fn(Shape4::new(1, 1, 4, 4), |_, _, _, x| if x < 2 { 1.0 } else { 0.0 }).unwrap();
        let b = boundary_image(&y, 3).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(b.get(0, 0, r, c), if c == 1 { 1.0 } else { 0.0 }, "({r},{c})");
            }
        }
    }

    #[test]
    fn constant_and_unit_window() {
        let y = Tensor4::full(Shape4::new(1, 2, 3, 5), 1.0).unwrap();
        assert!(boundary_image(&y, 3).unwrap().data().iter().all(|v| *v == 0.0));
        let y = Tensor4::from_fn(Shape4::new(1, 1, 3, 3), |_, _, r, c| ((r + c) % 2) as f32).unwrap();
        assert!(boundary_image(&y, 1).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(boundary_image(&y, 2).is_err());
    }

    #[test]
    fn single_class_image_contributes_nothing() {
        let shape = Shape4::new(1, 2, 3, 3);
        let z: Vec<f64> = (0..18).map(|i| i as f64 * 0.1).collect();
        let (v, g) = boundary_loss_f64(shape, &z, &[1; 9], &LossConfig::uniform(2)).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn near_one_hot_prediction_is_near_zero() {
        let shape = Shape4::new(1, 2, 4, 4);
        let labels: Vec<u32> = (0..16).map(|i| u32::from(i % 4 >= 2)).collect();
        let z: Vec<f64> = (0..32)
            .map(|i| {
                let (c, s) = (i / 16, i % 16);
                if labels[s] == c as u32 {
                    40.0
                } else {
                    -40.0
                }
            })
            .collect();
        let (v, _) = boundary_loss_f64(shape, &z, &labels, &LossConfig::uniform(2)).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
    }

    #[test]
    fn ignored_pixels_have_zero_gradient() {
        let shape = Shape4::new(1, 3, 3, 4);
        let z: Vec<f64> = (0..36).map(|i| (i as f64 * 0.77).sin() * 2.0).collect();
        let labels = [1, 1, 2, 2, 1, 0, 2, 2, 1, 1, 0, 2];
        let cfg = LossConfig::new(vec![0.2, 0.4, 0.4], Some(0));
        let (v, g) = boundary_loss_f64(shape, &z, &labels, &cfg).unwrap();
        assert!(v > 0.0 && v <= 1.0);
        for s in [5, 10] {
            assert!((0..3).all(|k| g[k * 12 + s] == 0.0));
        }
    }
}
