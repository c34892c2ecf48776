//! Named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                              |
//! |------------------|------------------------------------------------------|
//! | 4                | magic `LENW`                                         |
//! | 4                | `u32` version, currently 1                           |
//! | 8                | `u64` header length `L`                              |
//! | L                | UTF-8 JSON: `{name: {"dtype":"f32","shape":[..],"offset":o}}` |
//! | rest             | blob of IEEE-754 `f32` values                        |
//!
//! Offsets are byte offsets into the blob and multiples of 4. The writer
//! emits tensors in name order and pads the header with spaces so the blob
//! starts 8-byte aligned; readers accept any header length.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LENW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "NamedTensor::new",
                format!("shape {shape:?} holds {numel} elements, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    tensors: BTreeMap<String, NamedTensor>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: NamedTensor) -> Option<NamedTensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<NamedTensor> {
        self.tensors.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NamedTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(NamedTensor::numel).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = BTreeMap::new();
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            header.insert(
                name.as_str(),
                HeaderEntry {
                    dtype: "f32".into(),
                    shape: t.shape.clone(),
                    offset,
                },
            );
            offset += 4 * t.numel() as u64;
        }
        let mut text = serde_json::to_string(&header).expect("header serializes");
        while (16 + text.len()) % 8 != 0 {
            text.push(' ');
        }
        let mut out = Vec::with_capacity(16 + text.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a container; `origin` only labels error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format(origin, reason);
        if bytes.len() < 16 {
            return Err(bad(format!("{} bytes is shorter than the fixed preamble", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic, expected LENW".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let blob_start = 16u64
            .checked_add(header_len)
            .filter(|end| *end <= bytes.len() as u64)
            .ok_or_else(|| bad(format!("header length {header_len} exceeds file")))? as usize;
        let text = std::str::from_utf8(&bytes[16..blob_start]).map_err(|e| bad(format!("header is not UTF-8: {e}")))?;
        let header: BTreeMap<String, HeaderEntry> =
            serde_json::from_str(text).map_err(|e| bad(format!("header: {e}")))?;
        let blob = &bytes[blob_start..];

        let mut tensors = BTreeMap::new();
        for (name, entry) in header {
            if entry.dtype != "f32" {
                return Err(bad(format!(
                    "tensor `{name}` has dtype {}, only f32 is supported",
                    entry.dtype
                )));
            }
            if entry.offset % 4 != 0 {
                return Err(bad(format!(
                    "tensor `{name}` offset {} is not 4-byte aligned",
                    entry.offset
                )));
            }
            let numel = entry
                .shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .ok_or_else(|| bad(format!("tensor `{name}` shape overflows")))?;
            let start = entry.offset as usize;
            let end = numel
                .checked_mul(4)
                .and_then(|n| n.checked_add(start))
                .filter(|end| *end <= blob.len())
                .ok_or_else(|| bad(format!("tensor `{name}` runs past the end of the blob")))?;
            let data = blob[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(
                name,
                NamedTensor {
                    shape: entry.shape,
                    data,
                },
            );
        }
        Ok(Self { tensors })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TensorFile {
        let mut f = TensorFile::new();
        f.insert("b.bias", NamedTensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        f.insert(
            "a.weight",
            NamedTensor::new(vec![2, 1, 1, 2], vec![0.25, 1e-8, -0.0, 7.0]).unwrap(),
        );
        f
    }

    #[test]
    fn byte_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"LENW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!((16 + hl) % 8, 0);
        let header: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&bytes[16..16 + hl]).unwrap()).unwrap();
        assert_eq!(header["a.weight"]["offset"], 0);
        assert_eq!(header["b.bias"]["offset"], 16);
        assert_eq!(header["b.bias"]["dtype"], "f32");
        assert_eq!(header["a.weight"]["shape"], serde_json::json!([2, 1, 1, 2]));
        let blob = &bytes[16 + hl..];
        assert_eq!(blob.len(), 28);
        assert_eq!(&blob[0..4], &0.25f32.to_le_bytes());
        assert_eq!(&blob[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn malformed_inputs() {
        let p = Path::new("x");
        let good = sample().to_bytes();
        assert!(TensorFile::from_bytes(&good[..10], p).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(TensorFile::from_bytes(&bad, p).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(TensorFile::from_bytes(&bad, p).is_err());
        assert!(TensorFile::from_bytes(&good[..good.len() - 4], p).is_err());
    }

    #[test]
    fn rejects_unaligned_offset() {
        let text = r#"{"t":{"dtype":"f32","shape":[1],"offset":2}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"LENW");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(text.len() as u64).to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        let err = TensorFile::from_bytes(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("aligned"), "{err}");
    }

    proptest! {
        #[test]
        fn roundtrip(entries in proptest::collection::btree_map("[a-z.]{1,12}", proptest::collection::vec(-1e6f32..1e6, 0..20), 0..6)) {
            let mut f = TensorFile::new();
            for (name, data) in entries {
                f.insert(name, NamedTensor::new(vec![data.len()], data).unwrap());
            }
            let back = TensorFile::from_bytes(&f.to_bytes(), Path::new("mem")).unwrap();
            prop_assert_eq!(back.to_bytes(), f.to_bytes());
            prop_assert_eq!(back, f);
        }
    }
}
