use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write_bytes;
use crate::segnet::model::{SegConfig, SegModel};

pub const CHECKPOINT_FORMAT: &str = "roadedge-segnet";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained model with the inference mode it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SegModel,
    /// Whether temporal features are computed at inference time.
    pub temporal: bool,
    /// Free-form arm name, e.g. `full` or `no-temporal`.
    pub arm: String,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    arm: String,
    temporal: bool,
    config: SegConfig,
    tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arm: self.arm.clone(),
            temporal: self.temporal,
            config: self.model.config.clone(),
            tensors: self
                .model
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} version {}",
                file.format, file.version
            )));
        }
        let mut model = SegModel::new(file.config, 0)?;
        let expected: Vec<(String, Vec<usize>)> = model
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != file.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                file.tensors.len()
            )));
        }
        for ((slot, (name, shape)), rec) in model.tensors_mut().into_iter().zip(&expected).zip(&file.tensors) {
            if &rec.name != name || &rec.shape != shape || rec.data.len() != slot.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    rec.name, rec.shape, name, shape
                )));
            }
            slot.copy_from_slice(&rec.data);
        }
        if !model.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self {
            model,
            temporal: file.temporal,
            arm: file.arm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write_bytes(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let ck = Checkpoint {
            model: SegModel::new(SegConfig::default(), 11).unwrap(),
            temporal: true,
            arm: "full".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        for (a, b) in ck.model.tensors().iter().zip(back.model.tensors().iter()) {
            assert!(a.2.iter().zip(b.2).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_bad_files() {
        let ck = Checkpoint {
            model: SegModel::new(SegConfig::micro(), 1).unwrap(),
            temporal: false,
            arm: "x".into(),
        };
        let text = ck.to_json().unwrap();
        let wrong_version = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(Checkpoint::from_json(&wrong_version), Err(Error::Checkpoint(_))));
        let renamed = text.replacen("sa1.0.weight", "sa1.0.w", 1);
        assert!(matches!(Checkpoint::from_json(&renamed), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_json("{").is_err());
    }
}
