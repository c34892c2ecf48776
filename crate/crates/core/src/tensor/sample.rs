use rayon::prelude::*;

use super::{Shape4, Tensor4};
use crate::error::{Error, Result};

/// Source-axis sample for one output coordinate: lower index, upper index and
/// the fractional weight of the upper one.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

/// Half-pixel mapping `src = (dst + 0.5) * in / out - 0.5`, clamped to `[0, in - 1]`.
fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(in_len - 1),
                frac: (src - lo as f64) as f32,
            }
        })
        .collect()
}

/// Bilinear enlargement with half-pixel (not corner-aligned) sampling.
pub fn bilinear_upsample(input: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    let s = input.shape();
    if out_h < s.h || out_w < s.w {
        return Err(Error::geometry(
            "bilinear_upsample",
            format!("cannot shrink {}x{} to {out_h}x{out_w}", s.h, s.w),
        ));
    }
    if out_h == s.h && out_w == s.w {
        return Ok(input.clone());
    }
    let ty = taps(s.h, out_h);
    let tx = taps(s.w, out_w);
    let out_shape = Shape4::new(s.n, s.c, out_h, out_w);
    let mut out = vec![0.0f32; out_shape.numel()];
    out.par_chunks_mut(out_h * out_w)
        .zip(input.data().par_chunks(s.h * s.w))
        .for_each(|(dst, src)| {
            for (row, t) in dst.chunks_exact_mut(out_w).zip(&ty) {
                let top = &src[t.lo * s.w..(t.lo + 1) * s.w];
                let bot = &src[t.hi * s.w..(t.hi + 1) * s.w];
                for (v, u) in row.iter_mut().zip(&tx) {
                    let a = top[u.lo] + u.frac * (top[u.hi] - top[u.lo]);
                    let b = bot[u.lo] + u.frac * (bot[u.hi] - bot[u.lo]);
                    *v = a + t.frac * (b - a);
                }
            }
        });
    Ok(Tensor4::from_parts(out_shape, out))
}

/// Stride-1 max pooling over an odd `window`, padded by `(window - 1) / 2` with
/// negative infinity so the output keeps the input's spatial size.
pub fn max_pool2d(input: &Tensor4, window: usize) -> Result<Tensor4> {
    check_window(window)?;
    let s = input.shape();
    let mut out = vec![0.0f32; s.numel()];
    out.par_chunks_mut(s.plane())
        .zip(input.data().par_chunks(s.plane()))
        .for_each(|(dst, src)| max_pool_plane(src, s.h, s.w, window, f32::NEG_INFINITY, dst, None));
    Ok(Tensor4::from_parts(s, out))
}

pub(crate) fn check_window(window: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::param(
            "window",
            format!("pooling window must be odd and >= 1, got {window}"),
        ));
    }
    Ok(())
}

/// Pools one `h x w` plane. When `argmax` is given it receives, per output
/// cell, the flat index of the first (row-major) window cell holding the max.
pub(crate) fn max_pool_plane<T: Copy + PartialOrd>(
    src: &[T],
    h: usize,
    w: usize,
    window: usize,
    neg_inf: T,
    dst: &mut [T],
    mut argmax: Option<&mut [usize]>,
) {
    let r = (window - 1) / 2;
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);
            let mut best = neg_inf;
            let mut at = y * w + x;
            let mut found = false;
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let v = src[yy * w + xx];
                    if !found || v > best {
                        best = v;
                        at = yy * w + xx;
                        found = true;
                    }
                }
            }
            dst[y * w + x] = best;
            if let Some(a) = argmax.as_deref_mut() {
                a[y * w + x] = at;
            }
        }
    }
}
