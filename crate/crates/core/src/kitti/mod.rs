//! SemanticKITTI scan and label files, class remapping and run configuration.
//!
//! Scans (`.bin`) are consecutive little-endian `f32` records
//! `(x, y, z, remission)`, 16 bytes per point. Labels (`.label`) are one
//! little-endian `u32` per point: the semantic id in the low 16 bits and the
//! instance id in the high 16 bits.

mod config;

pub use config::{load_config, parse_config, ClassEntry, RunConfig, DEFAULT_CONFIG};

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::projection::PointCloud;

const POINT_BYTES: usize = 16;

/// A parsed scan. Points with non-finite coordinates or zero range are
/// dropped; `source_index` maps each kept point back to its record.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: PointCloud,
    pub source_index: Vec<u32>,
    pub total_points: usize,
}

impl Scan {
    pub fn rejected(&self) -> usize {
        self.total_points - self.cloud.len()
    }

    /// Expands per-kept-point labels to one label per record, filling
    /// rejected records with `fill`.
    pub fn scatter(&self, labels: &[u32], fill: u32) -> Result<Vec<u32>> {
        if labels.len() != self.cloud.len() {
            return Err(Error::shape(
                "scatter",
                format!("{} labels for {} kept points", labels.len(), self.cloud.len()),
            ));
        }
        let mut out = vec![fill; self.total_points];
        for (&i, &l) in self.source_index.iter().zip(labels) {
            out[i as usize] = l;
        }
        Ok(out)
    }
}

pub fn parse_scan(bytes: &[u8], origin: &Path) -> Result<Scan> {
    if bytes.is_empty() {
        return Err(Error::format(origin, "empty scan"));
    }
    if bytes.len() % POINT_BYTES != 0 {
        return Err(Error::format(
            origin,
            format!("{} bytes is not a whole number of 16-byte points", bytes.len()),
        ));
    }
    let total = bytes.len() / POINT_BYTES;
    let mut points = Vec::with_capacity(total);
    let mut remission = Vec::with_capacity(total);
    let mut source_index = Vec::with_capacity(total);
    for (i, rec) in bytes.chunks_exact(POINT_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let (p, rem) = ([f(0), f(1), f(2)], f(3));
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if p.iter().all(|v| v.is_finite()) && rem.is_finite() && r2 > 0.0 {
            points.push(p);
            remission.push(rem);
            source_index.push(i as u32);
        }
    }
    if total != points.len() {
        log::warn!(
            "{}: dropped {} of {total} points",
            origin.display(),
            total - points.len()
        );
    }
    Ok(Scan {
        cloud: PointCloud { points, remission },
        source_index,
        total_points: total,
    })
}

pub fn read_scan(path: impl AsRef<Path>) -> Result<Scan> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_scan(&bytes, path)
}

pub fn scan_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for (p, r) in cloud.points.iter().zip(&cloud.remission) {
        for v in [p[0], p[1], p[2], *r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_scan(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scan_bytes(cloud)).map_err(|e| Error::io(path, e))
}

/// Raw label word split into its halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawLabel {
    pub semantic: u16,
    pub instance: u16,
}

impl From<u32> for RawLabel {
    fn from(word: u32) -> Self {
        Self {
            semantic: (word & 0xFFFF) as u16,
            instance: (word >> 16) as u16,
        }
    }
}

pub fn parse_labels(bytes: &[u8], origin: &Path) -> Result<Vec<RawLabel>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            origin,
            format!("{} bytes is not a whole number of labels", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|w| RawLabel::from(u32::from_le_bytes(w.try_into().unwrap())))
        .collect())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<RawLabel>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes, path)
}

/// Reads labels and checks that there is exactly one per scan record.
pub fn read_labels_for(path: impl AsRef<Path>, scan: &Scan) -> Result<Vec<RawLabel>> {
    let path = path.as_ref();
    let labels = read_labels(path)?;
    if labels.len() != scan.total_points {
        return Err(Error::format(
            path,
            format!("{} labels for a scan of {} points", labels.len(), scan.total_points),
        ));
    }
    Ok(labels)
}

/// Mapping between raw dataset ids and contiguous training ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub raw_to_train: BTreeMap<u16, u32>,
    pub train_to_raw: Vec<u16>,
    pub class_names: Vec<String>,
    pub class_freqs: Vec<f64>,
    /// Training id assigned to raw ids missing from the map.
    pub ignore_class: u32,
}

impl LabelMap {
    pub fn num_classes(&self) -> usize {
        self.train_to_raw.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c == 0 {
            return Err(Error::config("classes", "at least one class is required"));
        }
        if self.class_names.len() != c || self.class_freqs.len() != c {
            return Err(Error::config(
                "classes",
                "names, frequencies and emit ids must have one entry per class",
            ));
        }
        if self.ignore_class as usize >= c {
            return Err(Error::config(
                "loss.ignore_class",
                format!("{} is not a class id", self.ignore_class),
            ));
        }
        if let Some((raw, t)) = self.raw_to_train.iter().find(|(_, t)| **t as usize >= c) {
            return Err(Error::config(
                "classes.raw",
                format!("raw id {raw} maps to class {t} of {c}"),
            ));
        }
        for (t, raw) in self.train_to_raw.iter().enumerate() {
            if self.raw_to_train.get(raw) != Some(&(t as u32)) {
                return Err(Error::config(
                    format!("classes[{t}].emit"),
                    format!("emitted raw id {raw} does not map back to class {t}"),
                ));
            }
        }
        Ok(())
    }

    /// Training ids for raw labels; unmapped ids become the ignore class.
    /// Returns the ids and the number of unmapped labels.
    pub fn remap(&self, raw: &[RawLabel]) -> (Vec<u32>, usize) {
        let mut unmapped = 0;
        let ids = raw
            .iter()
            .map(|l| {
                self.raw_to_train.get(&l.semantic).copied().unwrap_or_else(|| {
                    unmapped += 1;
                    self.ignore_class
                })
            })
            .collect();
        if unmapped > 0 {
            log::warn!(
                "{unmapped} label(s) with unmapped raw ids set to class {}",
                self.ignore_class
            );
        }
        (ids, unmapped)
    }

    pub fn to_raw(&self, ids: &[u32]) -> Result<Vec<u16>> {
        ids.iter()
            .map(|&id| {
                self.train_to_raw
                    .get(id as usize)
                    .copied()
                    .ok_or(Error::ClassOutOfRange {
                        id,
                        num_classes: self.num_classes(),
                    })
            })
            .collect()
    }
}

/// Prediction words for training ids, instance bits zero.
pub fn prediction_bytes(ids: &[u32], map: &LabelMap) -> Result<Vec<u8>> {
    Ok(map
        .to_raw(ids)?
        .into_iter()
        .flat_map(|raw| u32::from(raw).to_le_bytes())
        .collect())
}

pub fn write_predictions(path: impl AsRef<Path>, ids: &[u32], map: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    let bytes = prediction_bytes(ids, map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
