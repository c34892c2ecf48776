use crate::error::{Error, Result};

/// Multi-scale convolutional attention geometry for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MscaSpec {
    pub channels: usize,
    /// Side of the square depth-wise kernel that aggregates local context.
    pub local_kernel: usize,
    /// One strip branch per entry: depth-wise `1 x s` then `s x 1`.
    pub branch_kernels: Vec<usize>,
}

/// Network hyper-parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub stem_channels: usize,
    pub stage_widths: [usize; 4],
    pub stage_blocks: [usize; 4],
    pub decoder_width: usize,
    pub msca_local_kernel: usize,
    pub msca_branch_kernels: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 5,
            num_classes: 20,
            stem_channels: 64,
            stage_widths: [64, 128, 128, 256],
            stage_blocks: [3, 4, 6, 3],
            decoder_width: 64,
            msca_local_kernel: 5,
            msca_branch_kernels: vec![7, 11, 21],
        }
    }
}

impl ModelConfig {
    /// Attention geometry for blocks of stage `stage` (0-based).
    pub fn msca_spec(&self, stage: usize) -> MscaSpec {
        MscaSpec {
            channels: self.stage_widths[stage],
            local_kernel: self.msca_local_kernel,
            branch_kernels: self.msca_branch_kernels.clone(),
        }
    }

    /// Spatial reduction of the deepest stage relative to the input.
    pub const DOWNSAMPLE: usize = 8;

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.in_channels", self.in_channels),
            ("model.num_classes", self.num_classes),
            ("model.stem_channels", self.stem_channels),
            ("model.decoder_width", self.decoder_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::param(name, "must be >= 1"));
            }
        }
        for i in 0..4 {
            if self.stage_widths[i] == 0 {
                return Err(Error::param(format!("model.stage_widths[{i}]"), "must be >= 1"));
            }
            if self.stage_blocks[i] == 0 {
                return Err(Error::param(format!("model.stage_blocks[{i}]"), "must be >= 1"));
            }
        }
        if self.msca_local_kernel % 2 == 0 {
            return Err(Error::param("model.msca_local_kernel", "must be odd"));
        }
        if let Some(k) = self.msca_branch_kernels.iter().find(|k| *k % 2 == 0) {
            return Err(Error::param(
                "model.msca_branch_kernels",
                format!("strip size {k} is not odd"),
            ));
        }
        Ok(())
    }

    pub fn check_input(&self, c: usize, h: usize, w: usize) -> Result<()> {
        if c != self.in_channels {
            return Err(Error::shape(
                "model_forward",
                format!("input has {c} channels, model expects {}", self.in_channels),
            ));
        }
        if h % Self::DOWNSAMPLE != 0 || w % Self::DOWNSAMPLE != 0 {
            return Err(Error::geometry(
                "encoder_forward",
                format!("{h}x{w} is not divisible by {}", Self::DOWNSAMPLE),
            ));
        }
        Ok(())
    }
}
