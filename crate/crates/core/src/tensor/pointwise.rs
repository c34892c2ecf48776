use rayon::prelude::*;

use super::{Shape4, Tensor4};
use crate::error::{Error, Result};

pub fn relu(input: &Tensor4) -> Tensor4 {
    let data = input.data().par_iter().map(|v| v.max(0.0)).collect();
    Tensor4::from_parts(input.shape(), data)
}

pub(crate) fn relu_in_place(t: &mut Tensor4) {
    t.data_mut().par_iter_mut().for_each(|v| *v = v.max(0.0));
}

fn zip_with(op: &'static str, a: &Tensor4, b: &Tensor4, f: impl Fn(f32, f32) -> f32 + Sync) -> Result<Tensor4> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{} vs {}", a.shape(), b.shape())));
    }
    let data = a
        .data()
        .par_iter()
        .zip(b.data().par_iter())
        .map(|(x, y)| f(*x, *y))
        .collect();
    Ok(Tensor4::from_parts(a.shape(), data))
}

pub fn elementwise_mul(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    zip_with("elementwise_mul", a, b, |x, y| x * y)
}

pub fn elementwise_add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    zip_with("elementwise_add", a, b, |x, y| x + y)
}

/// Concatenates along the channel axis, preserving operand order.
pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels", "no operands"))?
        .shape();
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape("concat_channels", format!("{first} vs {s}")));
        }
    }
    let c: usize = parts.iter().map(|p| p.shape().c).sum();
    let shape = Shape4::new(first.n, c, first.h, first.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..first.n {
        for p in parts {
            let per = p.shape().c * first.plane();
            data.extend_from_slice(&p.data()[n * per..(n + 1) * per]);
        }
    }
    Ok(Tensor4::from_parts(shape, data))
}

/// `out = input * scale[c] + shift[c]`.
pub fn affine_norm(input: &Tensor4, scale: &[f32], shift: &[f32]) -> Result<Tensor4> {
    let mut out = input.clone();
    affine_norm_in_place(&mut out, scale, shift)?;
    Ok(out)
}

pub(crate) fn affine_norm_in_place(t: &mut Tensor4, scale: &[f32], shift: &[f32]) -> Result<()> {
    let s = t.shape();
    if scale.len() != s.c || shift.len() != s.c {
        return Err(Error::shape(
            "affine_norm",
            format!(
                "scale/shift lengths {}/{} for {} channels",
                scale.len(),
                shift.len(),
                s.c
            ),
        ));
    }
    t.data_mut()
        .par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(i, plane)| {
            let c = i % s.c;
            let (a, b) = (scale[c], shift[c]);
            plane.iter_mut().for_each(|v| *v = *v * a + b);
        });
    Ok(())
}

/// Per-pixel softmax across channels, shifted by the channel maximum.
pub fn softmax_channels(input: &Tensor4) -> Tensor4 {
    let s = input.shape();
    let plane = s.plane();
    let per_batch = s.c * plane;
    let mut out = vec![0.0f32; s.numel()];
    out.par_chunks_mut(per_batch)
        .zip(input.data().par_chunks(per_batch))
        .for_each(|(dst, src)| {
            for p in 0..plane {
                let mut m = f32::NEG_INFINITY;
                for c in 0..s.c {
                    m = m.max(src[c * plane + p]);
                }
                let mut sum = 0.0f32;
                for c in 0..s.c {
                    let e = (src[c * plane + p] - m).exp();
                    dst[c * plane + p] = e;
                    sum += e;
                }
                for c in 0..s.c {
                    dst[c * plane + p] /= sum;
                }
            }
        });
    Tensor4::from_parts(s, out)
}

/// Index of the largest channel per pixel (lowest index on ties), laid out `n x h x w`.
pub fn argmax_channels(input: &Tensor4) -> Vec<u32> {
    let s = input.shape();
    let plane = s.plane();
    let mut out = vec![0u32; s.n * plane];
    for n in 0..s.n {
        for p in 0..plane {
            let mut best = 0;
            let mut best_v = input.data()[s.index(n, 0, 0, 0) + p];
            for c in 1..s.c {
                let v = input.data()[s.index(n, c, 0, 0) + p];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            out[n * plane + p] = best as u32;
        }
    }
    out
}
