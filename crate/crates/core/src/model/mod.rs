//! Encoder-decoder segmentation network over range images.
//!
//! The encoder is a stem of three 3x3 convolutions followed by four residual
//! stages whose blocks pair a 3x3 convolution with multi-scale convolutional
//! attention. Stages 2-4 halve the resolution. The decoder runs four
//! interpolation-and-convolution (IAC) modules from the deepest stage up, each
//! producing a full-resolution map; the main head fuses the last three with a
//! 1x1 convolution and one auxiliary head sits on each of the first three.

mod config;
mod layers;
mod weights;

pub use config::{ModelConfig, MscaSpec};
pub use layers::{
    basic_block_forward, conv_norm_relu, iac_forward, msca_forward, BlockParams, ConvParams, IacParams, MscaParams,
    NormParams,
};
pub use weights::{param_breakdown, param_count, param_specs, ModelWeights, ParamKind, ParamSpec};

use crate::error::{Error, Result};
use crate::tensor::{concat_channels, Tensor4};
use weights::{aux_spec, block_geometry, head_spec, iac_spec, stem_specs};

/// Network outputs, all `n x num_classes x h x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub logits: Tensor4,
    /// Heads on IAC modules 1..=3 (deepest first).
    pub aux: [Tensor4; 3],
}

impl<'a> BlockParams<'a> {
    fn load(w: &'a ModelWeights, cfg: &ModelConfig, stage: usize, block: usize) -> Result<Self> {
        let prefix = format!("stage{}.block{block}", stage + 1);
        let g = block_geometry(cfg, stage, block);
        let proj = match g.proj {
            Some(spec) => Some((
                spec,
                ConvParams::load(w, &format!("{prefix}.proj"), false)?,
                NormParams::load(w, &format!("{prefix}.proj_norm"))?,
            )),
            None => None,
        };
        let msca_spec = cfg.msca_spec(stage);
        Ok(Self {
            conv_spec: g.conv,
            conv: ConvParams::load(w, &format!("{prefix}.conv"), false)?,
            norm: NormParams::load(w, &format!("{prefix}.norm"))?,
            proj,
            msca: MscaParams::load(w, &format!("{prefix}.msca"), &msca_spec)?,
            msca_spec,
        })
    }
}

fn iac_params<'a>(w: &'a ModelWeights, cfg: &ModelConfig, i: usize) -> Result<IacParams<'a>> {
    Ok(IacParams {
        spec: iac_spec(cfg, i),
        fuse: ConvParams::load(w, &format!("iac{i}.fuse"), false)?,
        norm: NormParams::load(w, &format!("iac{i}.norm"))?,
    })
}

/// Runs the stem and the four stages, returning each stage's output
/// (strides 1, 2, 4 and 8 relative to the input).
pub fn encoder_forward(img: &Tensor4, weights: &ModelWeights, cfg: &ModelConfig) -> Result<[Tensor4; 4]> {
    weights.check_against(cfg)?;
    let s = img.shape();
    cfg.check_input(s.c, s.h, s.w)?;

    let mut x = img.clone();
    for (k, spec) in stem_specs(cfg).iter().enumerate() {
        let conv = ConvParams::load(weights, &format!("stem.conv{k}"), false)?;
        let norm = NormParams::load(weights, &format!("stem.norm{k}"))?;
        x = conv_norm_relu(&x, &conv, &norm, spec)?;
    }
    let mut stages = Vec::with_capacity(4);
    for stage in 0..4 {
        for block in 0..cfg.stage_blocks[stage] {
            let p = BlockParams::load(weights, cfg, stage, block)?;
            x = basic_block_forward(&x, &p)?;
        }
        stages.push(x.clone());
    }
    Ok(stages.try_into().expect("four stages"))
}

/// Full forward pass: encoder, four IAC modules, main and auxiliary heads.
pub fn model_forward(img: &Tensor4, weights: &ModelWeights, cfg: &ModelConfig) -> Result<ModelOutput> {
    let stages = encoder_forward(img, weights, cfg)?;
    let (h, w) = (img.shape().h, img.shape().w);

    let mut iac: Vec<Tensor4> = Vec::with_capacity(4);
    for i in 1..=4 {
        let p = iac_params(weights, cfg, i)?;
        let out = iac_forward(&stages[4 - i], iac.last(), &p, h, w)?;
        iac.push(out);
    }
    drop(stages);

    let fused = concat_channels(&[&iac[1], &iac[2], &iac[3]])?;
    let logits = ConvParams::load(weights, "head.fuse", true)?.apply(&fused, &head_spec(cfg))?;
    drop(fused);

    let mut aux = Vec::with_capacity(3);
    for (i, feat) in iac.iter().take(3).enumerate() {
        let head = ConvParams::load(weights, &format!("aux{}.head", i + 1), true)?;
        aux.push(head.apply(feat, &aux_spec(cfg))?);
    }
    let aux: [Tensor4; 3] = aux
        .try_into()
        .map_err(|_| Error::shape("model_forward", "auxiliary heads"))?;
    Ok(ModelOutput { logits, aux })
}
