use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::LabelMap;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::ModelConfig;
use crate::projection::{KnnConfig, ProjectionConfig};

/// The shipped SemanticKITTI configuration.
pub const DEFAULT_CONFIG: &str = include_str!("semantic_kitti.toml");

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    version: u32,
    projection: ProjectionSection,
    model: ModelSection,
    loss: LossSection,
    knn: KnnSection,
    classes: Vec<ClassEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionSection {
    height: usize,
    width: usize,
    fov_up_deg: f64,
    fov_down_deg: f64,
    channel_means: Option<[f32; 5]>,
    channel_stds: Option<[f32; 5]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    stem_channels: usize,
    stage_widths: [usize; 4],
    stage_blocks: [usize; 4],
    decoder_width: usize,
    msca_local_kernel: usize,
    msca_branch_kernels: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSection {
    weights: [f64; 3],
    aux_weights: [f64; 3],
    theta0: usize,
    ignore_class: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnnSection {
    k: usize,
    window: usize,
    range_cutoff: f32,
    gaussian_sigma: f32,
}

/// One `[[classes]]` entry.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    /// Raw dataset ids folded into this class.
    pub raw: Vec<u16>,
    /// Raw id written for predictions of this class.
    pub emit: u16,
    pub freq: f64,
}

/// Validated configuration bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub projection: ProjectionConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub knn: KnnConfig,
    pub labels: LabelMap,
}

impl RunConfig {
    pub fn into_parts(self) -> (ProjectionConfig, ModelConfig, LossConfig, KnnConfig, LabelMap) {
        (self.projection, self.model, self.loss, self.knn, self.labels)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Parses and validates a TOML configuration. `origin` is only used in messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config {
        field: origin.display().to_string(),
        reason: e.message().to_string(),
    })?;
    if file.version != SCHEMA_VERSION {
        return Err(Error::config(
            "version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", file.version),
        ));
    }

    let mut labels = LabelMap {
        raw_to_train: BTreeMap::new(),
        train_to_raw: Vec::new(),
        class_names: Vec::new(),
        class_freqs: Vec::new(),
        ignore_class: file.loss.ignore_class,
    };
    for (i, c) in file.classes.iter().enumerate() {
        if c.id as usize != i {
            return Err(Error::config(
                format!("classes[{i}].id"),
                format!("expected {i}, got {}", c.id),
            ));
        }
        for &raw in &c.raw {
            if let Some(prev) = labels.raw_to_train.insert(raw, c.id) {
                return Err(Error::config(
                    format!("classes[{i}].raw"),
                    format!("raw id {raw} already mapped to class {prev}"),
                ));
            }
        }
        labels.train_to_raw.push(c.emit);
        labels.class_names.push(c.name.clone());
        labels.class_freqs.push(c.freq);
    }
    labels.validate()?;

    let p = &file.projection;
    let projection = ProjectionConfig {
        h: p.height,
        w: p.width,
        fov_up: p.fov_up_deg.to_radians(),
        fov_down: p.fov_down_deg.to_radians(),
        channel_means: p.channel_means.unwrap_or([0.0; 5]),
        channel_stds: p.channel_stds.unwrap_or([1.0; 5]),
    };
    projection.validate().map_err(|e| in_section("projection", e))?;

    let m = file.model;
    let model = ModelConfig {
        in_channels: crate::projection::RANGE_CHANNELS.len(),
        num_classes: labels.num_classes(),
        stem_channels: m.stem_channels,
        stage_widths: m.stage_widths,
        stage_blocks: m.stage_blocks,
        decoder_width: m.decoder_width,
        msca_local_kernel: m.msca_local_kernel,
        msca_branch_kernels: m.msca_branch_kernels,
    };
    model.validate().map_err(|e| in_section("model", e))?;
    if projection.h % ModelConfig::DOWNSAMPLE != 0 || projection.w % ModelConfig::DOWNSAMPLE != 0 {
        return Err(Error::config(
            "projection.height",
            format!("image size must be divisible by {}", ModelConfig::DOWNSAMPLE),
        ));
    }

    let l = file.loss;
    let loss = LossConfig {
        weights: l.weights,
        aux_weights: l.aux_weights,
        theta0: l.theta0,
        class_freqs: labels.class_freqs.clone(),
        ignore_class: Some(l.ignore_class),
    };
    loss.validate().map_err(|e| in_section("loss", e))?;

    let k = file.knn;
    let knn = KnnConfig {
        k: k.k,
        window: k.window,
        range_cutoff: k.range_cutoff,
        gaussian_sigma: k.gaussian_sigma,
    };
    knn.validate().map_err(|e| in_section("knn", e))?;

    Ok(RunConfig {
        projection,
        model,
        loss,
        knn,
        labels,
    })
}

/// Turns a validation error into a config error naming the dotted field.
fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let field = if name.contains('.') {
                name
            } else {
                format!("{section}.{name}")
            };
            Error::Config { field, reason }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, Path::new("test.toml"))
    }

    #[test]
    fn shipped_default_loads() {
        let cfg = parse(DEFAULT_CONFIG).unwrap();
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!(cfg.labels.num_classes(), 20);
        assert_eq!(cfg.loss.weights, [1.0, 1.5, 1.0]);
        assert_eq!(cfg.loss.aux_weights, [1.0, 1.0, 0.5]);
        assert_eq!(cfg.loss.theta0, 3);
        assert_eq!((cfg.projection.h, cfg.projection.w), (64, 2048));
        let total: f64 = cfg.labels.class_freqs.iter().sum();
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn even_theta0_rejected_by_name() {
        let text = DEFAULT_CONFIG.replace("theta0 = 3", "theta0 = 4");
        match parse(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "loss.theta0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_normalization_is_identity() {
        let text: String = DEFAULT_CONFIG
            .lines()
            .filter(|l| !l.starts_with("channel_"))
            .map(|l| format!("{l}\n"))
            .collect();
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.projection.channel_means, [0.0; 5]);
        assert_eq!(cfg.projection.channel_stds, [1.0; 5]);
    }

    #[test]
    fn missing_field_is_named() {
        let text = DEFAULT_CONFIG.replace("decoder_width = 64\n", "");
        match parse(&text) {
            Err(Error::Config { reason, .. }) => assert!(reason.contains("decoder_width"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_and_invariants() {
        assert!(parse(&DEFAULT_CONFIG.replace("version = 1", "version = 2")).is_err());
        let bad_knn = DEFAULT_CONFIG.replace("window = 5", "window = 4");
        assert!(matches!(parse(&bad_knn), Err(Error::Config { field, .. }) if field == "knn.window"));
        let bad_size = DEFAULT_CONFIG.replace("width = 2048", "width = 2044");
        assert!(matches!(parse(&bad_size), Err(Error::Config { field, .. }) if field == "projection.height"));
        let dup = DEFAULT_CONFIG.replace("raw = [10, 252]", "raw = [10, 40]");
        assert!(parse(&dup).is_err());
    }
}
