//! Checkpoint format: a binary little-endian f64 blob plus a TOML manifest
//! naming every tensor with its shape and byte offset, all config strings and
//! the RNG seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    seed: u64,
    blob: String,
    config: BTreeMap<String, String>,
    tensor: Vec<TensorEntry>,
}

/// In-memory checkpoint: ordered named tensors + string config + seed.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn take(&mut self, name: &str) -> Result<Tensor, NnError> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::Manifest(format!("missing tensor {name:?}")))?;
        Ok(self.tensors.remove(pos).1)
    }

    pub fn config_str(&self, key: &str) -> Result<&str, NnError> {
        self.config
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| NnError::Manifest(format!("missing config key {key:?}")))
    }

    /// Write `<stem>.toml` and `<stem>.bin` next to each other.
    pub fn save(&self, stem: &Path) -> Result<(), NnError> {
        let blob_name = format!(
            "{}.bin",
            stem.file_name().and_then(|s| s.to_str()).unwrap_or("checkpoint")
        );
        let mut blob = Vec::new();
        let mut entries = Vec::new();
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset: blob.len(),
            });
            for x in &t.data {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed: self.seed,
            blob: blob_name.clone(),
            config: self.config.clone(),
            tensor: entries,
        };
        let text = toml::to_string(&manifest).map_err(|e| NnError::Manifest(e.to_string()))?;
        fs::write(stem.with_extension("toml"), text)?;
        fs::write(stem.with_extension("bin"), blob)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self, NnError> {
        let text = fs::read_to_string(stem.with_extension("toml"))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| NnError::Manifest(e.to_string()))?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(NnError::Manifest(format!(
                "unsupported checkpoint version {}",
                manifest.format_version
            )));
        }
        let blob = fs::read(stem.with_extension("bin"))?;
        let mut tensors = Vec::with_capacity(manifest.tensor.len());
        for e in manifest.tensor {
            let len: usize = e.shape.iter().product();
            let bytes = len * 8;
            if e.offset + bytes > blob.len() {
                return Err(NnError::BlobTruncated {
                    wanted: bytes,
                    offset: e.offset,
                });
            }
            let data: Vec<f64> = blob[e.offset..e.offset + bytes]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((e.name, Tensor::from_vec(&e.shape, data)));
        }
        Ok(Checkpoint {
            tensors,
            config: manifest.config,
            seed: manifest.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        let mut ck = Checkpoint {
            seed: 42,
            ..Default::default()
        };
        ck.config.insert("domain".into(), "sphere:0,0,0,0.5".into());
        ck.push("a.w", Tensor::from_vec(&[2, 2], vec![1.0, -2.5, 3.25, 0.0]));
        ck.push("a.b", Tensor::from_vec(&[2], vec![0.5, -0.5]));
        ck.save(&stem).unwrap();

        let back = Checkpoint::load(&stem).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.config_str("domain").unwrap(), "sphere:0,0,0,0.5");
        assert_eq!(back.tensors.len(), 2);
        assert_eq!(back.get("a.w").unwrap().data, vec![1.0, -2.5, 3.25, 0.0]);
        assert_eq!(back.get("a.b").unwrap().shape, vec![2]);
    }

    #[test]
    fn missing_tensor_reported() {
        let mut ck = Checkpoint::default();
        ck.push("x", Tensor::scalar(1.0));
        assert!(ck.take("y").is_err());
    }
}
