//! Self-describing JSON checkpoints. Floats are written in their shortest
//! round-trip decimal form, so a save/load cycle is bit-exact.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{Arch, GnnModel, Layer, Norm};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "alegnn-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NormDoc {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    /// Row-major `in x out`.
    weight: Vec<f64>,
    bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attention: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<NormDoc>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    arch: Arch,
    dims: Vec<usize>,
    layers: Vec<LayerDoc>,
}

impl GnnModel {
    pub fn to_checkpoint_string(&self) -> Result<String> {
        let layers = self
            .layers()
            .iter()
            .map(|l| LayerDoc {
                weight: l.weight.iter().copied().collect(),
                bias: l.bias.clone(),
                attention: l.attention.clone(),
                norm: l.norm.as_ref().map(|n| NormDoc {
                    gamma: n.gamma.clone(),
                    beta: n.beta.clone(),
                    running_mean: n.running_mean.clone(),
                    running_var: n.running_var.clone(),
                }),
            })
            .collect();
        let doc = CheckpointDoc {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: self.arch(),
            dims: self.dims().to_vec(),
            layers,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a model checkpoint: {}", doc.format)));
        }
        if doc.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if doc.dims.len() != doc.layers.len() + 1 {
            return Err(Error::Dimension {
                context: "checkpoint dimension chain",
                expected: doc.layers.len() + 1,
                found: doc.dims.len(),
            });
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (w, l) in doc.dims.windows(2).zip(doc.layers) {
            let weight = Array2::from_shape_vec((w[0], w[1]), l.weight).map_err(|_| {
                Error::Format(format!("weight does not match dimensions {} x {}", w[0], w[1]))
            })?;
            layers.push(Layer {
                weight,
                bias: l.bias,
                attention: l.attention,
                norm: l.norm.map(|n| Norm {
                    gamma: n.gamma,
                    beta: n.beta,
                    running_mean: n.running_mean,
                    running_var: n.running_var,
                }),
            });
        }
        let model = GnnModel::from_layers(doc.arch, layers)?;
        if model.dims() != doc.dims.as_slice() {
            return Err(Error::Format("dimension chain disagrees with layers".into()));
        }
        Ok(model)
    }

    /// Short content hash identifying the exact parameters.
    pub fn fingerprint(&self) -> String {
        let text = self.to_checkpoint_string().expect("model serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

pub fn save_checkpoint(model: &GnnModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_checkpoint_string()? + "\n")?;
    Ok(())
}

/// Loads a checkpoint, optionally insisting on an architecture.
pub fn load_checkpoint(path: &Path, expected: Option<Arch>) -> Result<GnnModel> {
    let model = GnnModel::from_checkpoint_str(&std::fs::read_to_string(path)?)?;
    if let Some(arch) = expected {
        model.check_arch(arch)?;
    }
    Ok(model)
}
