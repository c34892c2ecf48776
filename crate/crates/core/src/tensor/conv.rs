use rayon::prelude::*;

use super::{Shape4, Tensor4};
use crate::error::{Error, Result};

/// Geometry of a 2-D convolution.
///
/// The matching weight buffer is laid out as
/// `(out_channels, in_channels / groups, kernel.0, kernel.1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(rows, cols)`
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, no padding, one group.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: (1, 1),
            padding: (0, 0),
            groups: 1,
        }
    }

    /// Square kernel padded so that stride 1 preserves the spatial size.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self::new(in_channels, out_channels, kernel).with_padding(kernel / 2, kernel / 2)
    }

    /// Depth-wise `kh x kw` convolution with size-preserving padding.
    pub fn depthwise(channels: usize, kh: usize, kw: usize) -> Self {
        Self {
            in_channels: channels,
            out_channels: channels,
            kernel: (kh, kw),
            stride: (1, 1),
            padding: (kh / 2, kw / 2),
            groups: channels,
        }
    }

    pub fn with_stride(mut self, sh: usize, sw: usize) -> Self {
        self.stride = (sh, sw);
        self
    }

    pub fn with_padding(mut self, ph: usize, pw: usize) -> Self {
        self.padding = (ph, pw);
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// Number of scalars in the weight buffer.
    pub fn weight_len(&self) -> usize {
        self.out_channels * (self.in_channels / self.groups.max(1)) * self.kernel.0 * self.kernel.1
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups.max(1),
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Err(Error::param(name, reason));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channels", "must be >= 1");
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return bad("kernel", "must be >= 1");
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return bad("stride", "must be >= 1");
        }
        if self.groups == 0 || self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return bad("groups", "must divide both channel counts");
        }
        Ok(())
    }

    /// Output `(rows, cols)` for an input of `h x w`.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let axis = |len: usize, k: usize, s: usize, p: usize| {
            let padded = len + 2 * p;
            (padded >= k).then(|| (padded - k) / s + 1)
        };
        match (
            axis(h, self.kernel.0, self.stride.0, self.padding.0),
            axis(w, self.kernel.1, self.stride.1, self.padding.1),
        ) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::geometry(
                "conv2d",
                format!(
                    "kernel {:?} does not fit a {h}x{w} input with padding {:?}",
                    self.kernel, self.padding
                ),
            )),
        }
    }
}

/// Output columns processed per accumulator tile.
const TILE_W: usize = 128;
/// Output channels sharing one pass over the input rows.
const OC_BLOCK: usize = 8;

/// Zero-padded cross-correlation (no kernel flip).
///
/// Each output element is accumulated in a fixed order: input channel, then
/// kernel row, then kernel column, with the bias added last.
pub fn conv2d(input: &Tensor4, weight: &[f32], bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Tensor4> {
    spec.validate()?;
    let s = input.shape();
    if s.c != spec.in_channels {
        return Err(Error::shape(
            "conv2d",
            format!("input has {} channels, spec expects {}", s.c, spec.in_channels),
        ));
    }
    if weight.len() != spec.weight_len() {
        return Err(Error::shape(
            "conv2d",
            format!(
                "weight has {} elements, expected {:?}",
                weight.len(),
                spec.weight_shape()
            ),
        ));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::shape(
                "conv2d",
                format!("bias has {} elements, expected {}", b.len(), spec.out_channels),
            ));
        }
    }
    let (oh, ow) = spec.output_size(s.h, s.w)?;
    let out_shape = Shape4::new(s.n, spec.out_channels, oh, ow);

    let (ph, pw) = spec.padding;
    let (hp, wp) = (s.h + 2 * ph, s.w + 2 * pw);
    let padded = if ph == 0 && pw == 0 {
        None
    } else {
        Some(pad_planes(input, ph, pw))
    };
    let src: &[f32] = padded.as_deref().unwrap_or(input.data());

    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let plane_out = oh * ow;
    let plane_in = hp * wp;
    let ksz = spec.kernel.0 * spec.kernel.1;

    let mut out = vec![0.0f32; out_shape.numel()];
    out.par_chunks_mut(ocg * plane_out)
        .enumerate()
        .for_each(|(ng, group_out)| {
            let n = ng / spec.groups;
            let g = ng % spec.groups;
            let in_base = (n * s.c + g * icg) * plane_in;
            let group_in = &src[in_base..in_base + icg * plane_in];
            group_out
                .par_chunks_mut(OC_BLOCK * plane_out)
                .enumerate()
                .for_each(|(blk, block_out)| {
                    let oc0 = g * ocg + blk * OC_BLOCK;
                    let nb = block_out.len() / plane_out;
                    let w_block = &weight[oc0 * icg * ksz..(oc0 + nb) * icg * ksz];
                    let b_block = bias.map(|b| &b[oc0..oc0 + nb]);
                    conv_block(group_in, (hp, wp), w_block, b_block, spec, icg, (oh, ow), block_out);
                });
        });
    Ok(Tensor4::from_parts(out_shape, out))
}

fn pad_planes(input: &Tensor4, ph: usize, pw: usize) -> Vec<f32> {
    let s = input.shape();
    let (hp, wp) = (s.h + 2 * ph, s.w + 2 * pw);
    let mut out = vec![0.0f32; s.n * s.c * hp * wp];
    out.par_chunks_mut(hp * wp)
        .zip(input.data().par_chunks(s.h * s.w))
        .for_each(|(dst, plane)| {
            for (y, row) in plane.chunks_exact(s.w).enumerate() {
                let start = (y + ph) * wp + pw;
                dst[start..start + s.w].copy_from_slice(row);
            }
        });
    out
}

/// Computes `nb` consecutive output planes sharing the same input group.
#[allow(clippy::too_many_arguments)]
fn conv_block(
    group_in: &[f32],
    (hp, wp): (usize, usize),
    w_block: &[f32],
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    icg: usize,
    (oh, ow): (usize, usize),
    block_out: &mut [f32],
) {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let ksz = kh * kw;
    let plane_in = hp * wp;
    let plane_out = oh * ow;
    let nb = block_out.len() / plane_out;

    let mut acc = vec![0.0f32; nb * TILE_W];
    let mut gather = vec![0.0f32; TILE_W];

    for oy in 0..oh {
        let mut x0 = 0;
        while x0 < ow {
            let tw = TILE_W.min(ow - x0);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ic in 0..icg {
                let plane = &group_in[ic * plane_in..(ic + 1) * plane_in];
                for ky in 0..kh {
                    let iy = oy * sh + ky;
                    let row = &plane[iy * wp..(iy + 1) * wp];
                    for kx in 0..kw {
                        let src: &[f32] = if sw == 1 {
                            &row[x0 + kx..x0 + kx + tw]
                        } else {
                            for (j, g) in gather[..tw].iter_mut().enumerate() {
                                *g = row[(x0 + j) * sw + kx];
                            }
                            &gather[..tw]
                        };
                        let k = ky * kw + kx;
                        for o in 0..nb {
                            let wv = w_block[(o * icg + ic) * ksz + k];
                            let a = &mut acc[o * TILE_W..o * TILE_W + tw];
                            for (a, v) in a.iter_mut().zip(src) {
                                *a += wv * *v;
                            }
                        }
                    }
                }
            }
            for o in 0..nb {
                let dst = &mut block_out[o * plane_out + oy * ow + x0..o * plane_out + oy * ow + x0 + tw];
                let a = &acc[o * TILE_W..o * TILE_W + tw];
                match bias {
                    Some(b) => {
                        for (d, v) in dst.iter_mut().zip(a) {
                            *d = *v + b[o];
                        }
                    }
                    None => dst.copy_from_slice(a),
                }
            }
            x0 += tw;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop evaluation with explicit bounds checks instead of padding.
    fn naive(input: &Tensor4, weight: &[f32], bias: Option<&[f32]>, spec: &ConvSpec) -> Tensor4 {
        let s = input.shape();
        let (oh, ow) = spec.output_size(s.h, s.w).unwrap();
        let icg = spec.in_channels / spec.groups;
        let ocg = spec.out_channels / spec.groups;
        let (kh, kw) = spec.kernel;
        Tensor4::from_fn(Shape4::new(s.n, spec.out_channels, oh, ow), |n, oc, oy, ox| {
            let g = oc / ocg;
            let mut acc = 0.0f32;
            for ic in 0..icg {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * spec.stride.0 + ky) as isize - spec.padding.0 as isize;
                        let ix = (ox * spec.stride.1 + kx) as isize - spec.padding.1 as isize;
                        if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                            continue;
                        }
                        let wv = weight[((oc * icg + ic) * kh + ky) * kw + kx];
                        acc += wv * input.get(n, g * icg + ic, iy as usize, ix as usize);
                    }
                }
            }
            acc + bias.map_or(0.0, |b| b[oc])
        })
        .unwrap()
    }

    #[test]
    fn ones_kernel_counts_window_cells() {
        let x = Tensor4::full(Shape4::new(1, 1, 3, 3), 1.0).unwrap();
        let spec = ConvSpec::same(1, 1, 3);
        let y = conv2d(&x, &[1.0; 9], None, &spec).unwrap();
        assert_eq!(y.get(0, 0, 1, 1), 9.0);
        for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(y.get(0, 0, r, c), 4.0);
        }
        assert_eq!(y.get(0, 0, 0, 1), 6.0);
        assert_eq!(y, naive(&x, &[1.0; 9], None, &spec));
    }

    #[test]
    fn unit_depthwise_is_identity() {
        let s = Shape4::new(2, 3, 5, 7);
        let x = Tensor4::from_fn(s, |n, c, y, xx| (n * 100 + c * 10 + y) as f32 - xx as f32 * 0.5).unwrap();
        let spec = ConvSpec::new(3, 3, 1).with_groups(3);
        assert_eq!(conv2d(&x, &[1.0; 3], None, &spec).unwrap(), x);
    }

    #[test]
    fn strided_and_wide_rows_match_naive() {
        // wider than one tile so the column tiling is exercised
        let s = Shape4::new(1, 3, 5, 300);
        let x = Tensor4::from_fn(s, |_, c, y, xx| ((c * 7 + y * 3 + xx) % 11) as f32 - 5.0).unwrap();
        for stride in [1, 2] {
            let spec = ConvSpec::same(3, 10, 3).with_stride(stride, stride);
            let w: Vec<f32> = (0..spec.weight_len()).map(|i| ((i % 7) as f32 - 3.0) * 0.1).collect();
            let b: Vec<f32> = (0..10).map(|i| i as f32).collect();
            let got = conv2d(&x, &w, Some(&b), &spec).unwrap();
            let want = naive(&x, &w, Some(&b), &spec);
            assert!(got.max_abs_diff(&want) < 1e-4, "stride {stride}");
        }
    }

    #[test]
    fn errors() {
        let x = Tensor4::zeros(Shape4::new(1, 2, 3, 3)).unwrap();
        let spec = ConvSpec::new(3, 1, 1);
        assert!(matches!(conv2d(&x, &[0.0; 3], None, &spec), Err(Error::Shape { .. })));
        let spec = ConvSpec::new(2, 1, 5);
        assert!(matches!(
            conv2d(&x, &[0.0; 50], None, &spec),
            Err(Error::Geometry { .. })
        ));
        let spec = ConvSpec::new(2, 3, 1).with_groups(2);
        assert!(conv2d(&x, &[0.0; 3], None, &spec).is_err());
    }

    #[test]
    fn output_size_formula() {
        let spec = ConvSpec::same(1, 1, 3).with_stride(2, 2);
        assert_eq!(spec.output_size(64, 2048).unwrap(), (32, 1024));
        assert_eq!(spec.output_size(7, 9).unwrap(), (4, 5));
    }
}
