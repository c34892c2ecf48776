//! Parameter naming scheme and strict weight loading.
//!
//! Names follow the network structure:
//!
//! ```text
//! stem.conv{k}.weight            stem.norm{k}.{scale,shift}          k = 0..3
//! stage{i}.block{j}.conv.weight  stage{i}.block{j}.norm.{scale,shift}
//! stage{i}.block{j}.proj.weight  stage{i}.block{j}.proj_norm.{scale,shift}   (only when the block reshapes)
//! stage{i}.block{j}.msca.local.{weight,bias}
//! stage{i}.block{j}.msca.branch{b}.{a,b}.{weight,bias}
//! stage{i}.block{j}.msca.mix.{weight,bias}
//! iac{i}.fuse.weight             iac{i}.norm.{scale,shift}            i = 1..=4
//! head.fuse.{weight,bias}
//! aux{i}.head.{weight,bias}                                           i = 1..=3
//! ```
//!
//! Stages are numbered 1..=4, blocks and branches from 0. Convolutions that
//! feed a normalization carry no bias.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::ConvSpec;
use crate::tensorfile::{NamedTensor, TensorFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Scale,
    Shift,
}

/// One tensor demanded by a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    /// Inputs feeding one output of the owning layer.
    pub fan_in: usize,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Top-level component: `stem`, `stage2`, `iac1`, `head`, `aux3`, ...
    pub fn module(&self) -> &str {
        self.name.split('.').next().unwrap_or("")
    }
}

#[derive(Default)]
struct Layout(Vec<ParamSpec>);

impl Layout {
    fn conv(&mut self, prefix: &str, spec: &ConvSpec, bias: bool) {
        let fan_in = (spec.in_channels / spec.groups) * spec.kernel.0 * spec.kernel.1;
        self.0.push(ParamSpec {
            name: format!("{prefix}.weight"),
            shape: spec.weight_shape().to_vec(),
            kind: ParamKind::Weight,
            fan_in,
        });
        if bias {
            self.0.push(ParamSpec {
                name: format!("{prefix}.bias"),
                shape: vec![spec.out_channels],
                kind: ParamKind::Bias,
                fan_in,
            });
        }
    }

    fn norm(&mut self, prefix: &str, channels: usize) {
        for (suffix, kind) in [("scale", ParamKind::Scale), ("shift", ParamKind::Shift)] {
            self.0.push(ParamSpec {
                name: format!("{prefix}.{suffix}"),
                shape: vec![channels],
                kind,
                fan_in: 1,
            });
        }
    }
}

/// Convolution geometry of one encoder block, shared by the layout and the forward pass.
pub(crate) struct BlockGeometry {
    pub conv: ConvSpec,
    pub proj: Option<ConvSpec>,
}

pub(crate) fn block_geometry(cfg: &ModelConfig, stage: usize, block: usize) -> BlockGeometry {
    let out = cfg.stage_widths[stage];
    let inp = if block > 0 {
        out
    } else if stage == 0 {
        cfg.stem_channels
    } else {
        cfg.stage_widths[stage - 1]
    };
    let stride = if block == 0 && stage > 0 { 2 } else { 1 };
    let conv = ConvSpec::same(inp, out, 3).with_stride(stride, stride);
    let proj = (stride != 1 || inp != out).then(|| ConvSpec::new(inp, out, 1).with_stride(stride, stride));
    BlockGeometry { conv, proj }
}

pub(crate) fn stem_specs(cfg: &ModelConfig) -> [ConvSpec; 3] {
    let s = cfg.stem_channels;
    [
        ConvSpec::same(cfg.in_channels, s, 3),
        ConvSpec::same(s, s, 3),
        ConvSpec::same(s, s, 3),
    ]
}

/// Input channels of IAC module `i` (1-based, deepest first).
pub(crate) fn iac_spec(cfg: &ModelConfig, i: usize) -> ConvSpec {
    let enc = cfg.stage_widths[4 - i];
    let inp = if i == 1 { enc } else { enc + cfg.decoder_width };
    ConvSpec::same(inp, cfg.decoder_width, 3)
}

pub(crate) fn head_spec(cfg: &ModelConfig) -> ConvSpec {
    ConvSpec::new(3 * cfg.decoder_width, cfg.num_classes, 1)
}

pub(crate) fn aux_spec(cfg: &ModelConfig) -> ConvSpec {
    ConvSpec::new(cfg.decoder_width, cfg.num_classes, 1)
}

/// Every tensor the configuration requires, in a fixed canonical order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut l = Layout::default();
    for (k, spec) in stem_specs(cfg).iter().enumerate() {
        l.conv(&format!("stem.conv{k}"), spec, false);
        l.norm(&format!("stem.norm{k}"), spec.out_channels);
    }
    for stage in 0..4 {
        let msca = cfg.msca_spec(stage);
        let ch = msca.channels;
        for block in 0..cfg.stage_blocks[stage] {
            let p = format!("stage{}.block{block}", stage + 1);
            let g = block_geometry(cfg, stage, block);
            l.conv(&format!("{p}.conv"), &g.conv, false);
            l.norm(&format!("{p}.norm"), ch);
            if let Some(proj) = &g.proj {
                l.conv(&format!("{p}.proj"), proj, false);
                l.norm(&format!("{p}.proj_norm"), ch);
            }
            let k = msca.local_kernel;
            l.conv(&format!("{p}.msca.local"), &ConvSpec::depthwise(ch, k, k), true);
            for (b, s) in msca.branch_kernels.iter().enumerate() {
                l.conv(&format!("{p}.msca.branch{b}.a"), &ConvSpec::depthwise(ch, 1, *s), true);
                l.conv(&format!("{p}.msca.branch{b}.b"), &ConvSpec::depthwise(ch, *s, 1), true);
            }
            l.conv(&format!("{p}.msca.mix"), &ConvSpec::new(ch, ch, 1), true);
        }
    }
    for i in 1..=4 {
        l.conv(&format!("iac{i}.fuse"), &iac_spec(cfg, i), false);
        l.norm(&format!("iac{i}.norm"), cfg.decoder_width);
    }
    l.conv("head.fuse", &head_spec(cfg), true);
    for i in 1..=3 {
        l.conv(&format!("aux{i}.head"), &aux_spec(cfg), true);
    }
    l.0
}

/// Exact number of scalar parameters the configuration implies.
pub fn param_count(cfg: &ModelConfig) -> usize {
    param_specs(cfg).iter().map(ParamSpec::numel).sum()
}

/// Parameter totals per top-level component, in network order.
pub fn param_breakdown(cfg: &ModelConfig) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for p in param_specs(cfg) {
        match out.last_mut() {
            Some((m, n)) if m == p.module() => *n += p.numel(),
            _ => out.push((p.module().to_string(), p.numel())),
        }
    }
    out
}

/// Named parameters validated against a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    tensors: TensorFile,
}

impl ModelWeights {
    /// Strict load: every required tensor present with its exact shape and
    /// nothing else in the container.
    pub fn new(tensors: TensorFile, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        check_strict(&tensors, config)?;
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn read(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Self> {
        Self::new(TensorFile::read(path)?, config)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.tensors.write(path)
    }

    /// Seeded fan-in-scaled uniform initialization.
    ///
    /// Weights and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
    /// normalization scales from `U(0.9, 1.1)` and shifts from `U(-0.1, 0.1)`.
    pub fn init_random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = TensorFile::new();
        for p in param_specs(config) {
            let (lo, hi) = match p.kind {
                ParamKind::Weight | ParamKind::Bias => {
                    let b = 1.0 / (p.fan_in as f32).sqrt();
                    (-b, b)
                }
                ParamKind::Scale => (0.9, 1.1),
                ParamKind::Shift => (-0.1, 0.1),
            };
            let data = (0..p.numel()).map(|_| rng.random_range(lo..hi)).collect();
            tensors.insert(p.name, NamedTensor::new(p.shape, data)?);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &TensorFile {
        &self.tensors
    }

    pub fn into_tensors(self) -> TensorFile {
        self.tensors
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.total_elements()
    }

    /// Ensures these weights fit `cfg`, re-validating when it differs from
    /// the configuration they were loaded with.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        if *cfg == self.config {
            return Ok(());
        }
        cfg.validate()?;
        check_strict(&self.tensors, cfg)
    }

    pub(crate) fn get(&self, name: &str) -> Result<&[f32]> {
        self.tensors
            .get(name)
            .map(|t| t.data.as_slice())
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }
}

fn check_strict(tensors: &TensorFile, cfg: &ModelConfig) -> Result<()> {
    let specs = param_specs(cfg);
    for p in &specs {
        let t = tensors
            .get(&p.name)
            .ok_or_else(|| Error::MissingTensor(p.name.clone()))?;
        if t.shape != p.shape {
            return Err(Error::TensorShape {
                name: p.name.clone(),
                expected: p.shape.clone(),
                found: t.shape.clone(),
            });
        }
    }
    if tensors.len() != specs.len() {
        let known: std::collections::HashSet<&str> = specs.iter().map(|p| p.name.as_str()).collect();
        let extra: Vec<String> = tensors
            .names()
            .filter(|n| !known.contains(n))
            .map(String::from)
            .collect();
        return Err(Error::UnexpectedTensors(extra));
    }
    Ok(())
}
