//! Network building blocks over borrowed parameter slices.

use super::config::MscaSpec;
use super::weights::ModelWeights;
use crate::error::Result;
use crate::tensor::{affine_norm_in_place, relu_in_place};
use crate::tensor::{bilinear_upsample, concat_channels, conv2d, elementwise_mul, ConvSpec, Tensor4};

#[derive(Debug, Clone, Copy)]
pub struct ConvParams<'a> {
    pub weight: &'a [f32],
    pub bias: Option<&'a [f32]>,
}

impl<'a> ConvParams<'a> {
    pub(crate) fn load(w: &'a ModelWeights, prefix: &str, bias: bool) -> Result<Self> {
        Ok(Self {
            weight: w.get(&format!("{prefix}.weight"))?,
            bias: if bias {
                Some(w.get(&format!("{prefix}.bias"))?)
            } else {
                None
            },
        })
    }

    pub fn apply(&self, x: &Tensor4, spec: &ConvSpec) -> Result<Tensor4> {
        conv2d(x, self.weight, self.bias, spec)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormParams<'a> {
    pub scale: &'a [f32],
    pub shift: &'a [f32],
}

impl<'a> NormParams<'a> {
    pub(crate) fn load(w: &'a ModelWeights, prefix: &str) -> Result<Self> {
        Ok(Self {
            scale: w.get(&format!("{prefix}.scale"))?,
            shift: w.get(&format!("{prefix}.shift"))?,
        })
    }
}

/// `relu(norm(conv(x)))`
pub fn conv_norm_relu(x: &Tensor4, conv: &ConvParams, norm: &NormParams, spec: &ConvSpec) -> Result<Tensor4> {
    let mut t = conv.apply(x, spec)?;
    affine_norm_in_place(&mut t, norm.scale, norm.shift)?;
    relu_in_place(&mut t);
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct MscaParams<'a> {
    pub local: ConvParams<'a>,
    /// `(1 x s, s x 1)` per strip branch.
    pub branches: Vec<(ConvParams<'a>, ConvParams<'a>)>,
    pub mix: ConvParams<'a>,
}

impl<'a> MscaParams<'a> {
    pub(crate) fn load(w: &'a ModelWeights, prefix: &str, spec: &MscaSpec) -> Result<Self> {
        let branches = (0..spec.branch_kernels.len())
            .map(|b| {
                Ok((
                    ConvParams::load(w, &format!("{prefix}.branch{b}.a"), true)?,
                    ConvParams::load(w, &format!("{prefix}.branch{b}.b"), true)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            local: ConvParams::load(w, &format!("{prefix}.local"), true)?,
            branches,
            mix: ConvParams::load(w, &format!("{prefix}.mix"), true)?,
        })
    }
}

/// Multi-scale convolutional attention: depth-wise local aggregation, strip
/// branches summed onto it, a 1x1 channel mixer, and the mixer output used
/// directly as multiplicative weights on the input.
pub fn msca_forward(x: &Tensor4, p: &MscaParams, spec: &MscaSpec) -> Result<Tensor4> {
    let ch = spec.channels;
    let k = spec.local_kernel;
    let a = p.local.apply(x, &ConvSpec::depthwise(ch, k, k))?;
    let mut sum = a.clone();
    for ((row, col), s) in p.branches.iter().zip(&spec.branch_kernels) {
        let f = row.apply(&a, &ConvSpec::depthwise(ch, 1, *s))?;
        let f = col.apply(&f, &ConvSpec::depthwise(ch, *s, 1))?;
        sum.data_mut().iter_mut().zip(f.data()).for_each(|(acc, v)| *acc += *v);
    }
    let attn = p.mix.apply(&sum, &ConvSpec::new(ch, ch, 1))?;
    elementwise_mul(&attn, x)
}

#[derive(Debug, Clone)]
pub struct BlockParams<'a> {
    pub conv_spec: ConvSpec,
    pub conv: ConvParams<'a>,
    pub norm: NormParams<'a>,
    /// 1x1 projection on the residual path when the block changes width or stride.
    pub proj: Option<(ConvSpec, ConvParams<'a>, NormParams<'a>)>,
    pub msca: MscaParams<'a>,
    pub msca_spec: MscaSpec,
}

/// `relu(residual(x) + msca(relu(norm(conv3x3(x)))))`
pub fn basic_block_forward(x: &Tensor4, p: &BlockParams) -> Result<Tensor4> {
    let t = conv_norm_relu(x, &p.conv, &p.norm, &p.conv_spec)?;
    let mut out = msca_forward(&t, &p.msca, &p.msca_spec)?;
    let residual = match &p.proj {
        Some((spec, conv, norm)) => {
            let mut r = conv.apply(x, spec)?;
            affine_norm_in_place(&mut r, norm.scale, norm.shift)?;
            r
        }
        None => x.clone(),
    };
    if residual.shape() != out.shape() {
        return Err(crate::Error::shape(
            "basic_block_forward",
            format!("residual {} vs branch {}", residual.shape(), out.shape()),
        ));
    }
    out.data_mut()
        .iter_mut()
        .zip(residual.data())
        .for_each(|(o, r)| *o = (*o + *r).max(0.0));
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct IacParams<'a> {
    pub spec: ConvSpec,
    pub fuse: ConvParams<'a>,
    pub norm: NormParams<'a>,
}

/// Interpolation-and-convolution decoder step: upsample encoder features to
/// `(out_h, out_w)`, concatenate the previous decoder output when there is
/// one, then fuse with `relu(norm(conv3x3(.)))`.
pub fn iac_forward(
    enc: &Tensor4,
    prev: Option<&Tensor4>,
    p: &IacParams,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor4> {
    let up = bilinear_upsample(enc, out_h, out_w)?;
    let fused = match prev {
        Some(prev) => {
            let (ps, us) = (prev.shape(), up.shape());
            if (ps.n, ps.h, ps.w) != (us.n, us.h, us.w) {
                return Err(crate::Error::shape(
                    "iac_forward",
                    format!("previous output {ps} vs upsampled {us}"),
                ));
            }
            concat_channels(&[&up, prev])?
        }
        None => up,
    };
    conv_norm_relu(&fused, &p.fuse, &p.norm, &p.spec)
}
