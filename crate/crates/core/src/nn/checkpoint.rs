use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FORMAT: &str = "distnet-params/1";

/// One named tensor. Values are stored as the 16-hex-digit IEEE-754 bit
/// pattern so a round trip is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub bits: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub format: String,
    pub tensors: Vec<TensorRecord>,
}

impl ParamManifest {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

impl ParamSet {
    pub fn to_manifest(&self) -> ParamManifest {
        let tensors = self
            .iter()
            .map(|(name, t)| TensorRecord {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                bits: t
                    .data()
                    .iter()
                    .map(|v| format!("{:016x}", v.to_bits()))
                    .collect(),
            })
            .collect();
        ParamManifest {
            format: FORMAT.to_string(),
            tensors,
        }
    }

    /// Overwrites every parameter from `m`, which must hold exactly the same
    /// names and shapes in the same order.
    pub fn load_manifest(&mut self, m: &ParamManifest) -> Result<()> {
        if m.format != FORMAT {
            return Err(Error::Version(format!(
                "unsupported parameter format {}",
                m.format
            )));
        }
        if m.tensors.len() != self.len() {
            return Err(Error::Version(format!(
                "checkpoint has {} tensors, model has {}",
                m.tensors.len(),
                self.len()
            )));
        }
        let mut decoded = Vec::with_capacity(m.tensors.len());
        for (rec, (name, t)) in m.tensors.iter().zip(self.iter()) {
            if rec.name != name || rec.shape != t.shape() {
                return Err(Error::Version(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {name} {:?}",
                    rec.name,
                    rec.shape,
                    t.shape()
                )));
            }
            let data = rec
                .bits
                .iter()
                .map(|h| {
                    u64::from_str_radix(h, 16)
                        .map(f64::from_bits)
                        .map_err(|_| Error::Version(format!("bad value {h:?} in {name}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            decoded.push(
                Tensor::new(rec.shape.clone(), data).map_err(|e| Error::Version(e.to_string()))?,
            );
        }
        for (slot, t) in self.tensors_mut().iter_mut().zip(decoded) {
            *slot = t.with_requires_grad(true);
        }
        Ok(())
    }
}
