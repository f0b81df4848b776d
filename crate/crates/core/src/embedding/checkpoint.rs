//! Versioned JSON documents for trained networks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Layer, Mlp};
use super::model::EmbeddingModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// One network: layer sizes, row-major weights and biases per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkDoc {
    pub fn from_mlp(m: &Mlp) -> Self {
        NetworkDoc {
            dims: m.dims(),
            activation: m.hidden_activation,
            weights: m
                .layers
                .iter()
                .map(|l| l.weights.transpose().as_slice().to_vec())
                .collect(),
            biases: m
                .layers
                .iter()
                .map(|l| l.bias.as_slice().to_vec())
                .collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let n = self.dims.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(Error::Checkpoint("layer count does not match dims".into()));
        }
        let layers = self
            .dims
            .windows(2)
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(d, (w, b))| {
                if w.len() != d[0] * d[1] || b.len() != d[1] {
                    return Err(Error::Checkpoint("weight array has the wrong size".into()));
                }
                Ok(Layer {
                    weights: DMatrix::from_row_slice(d[1], d[0], w),
                    bias: DVector::from_column_slice(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp {
            layers,
            hidden_activation: self.activation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingDoc {
    version: u32,
    method: String,
    feature_dim: usize,
    f: NetworkDoc,
    g: NetworkDoc,
    dec_s: NetworkDoc,
    dec_t: NetworkDoc,
}

/// Reads only the `version` field, so every loader can reject unknown
/// versions before looking at the payload.
pub fn check_version(text: &str) -> Result<()> {
    #[derive(Deserialize)]
    struct Head {
        version: u32,
    }
    let head: Head = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if head.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            head.version
        )));
    }
    Ok(())
}

impl EmbeddingModel {
    pub fn to_json(&self) -> String {
        let doc = EmbeddingDoc {
            version: CHECKPOINT_VERSION,
            method: "invariant".into(),
            feature_dim: self.feature_dim,
            f: NetworkDoc::from_mlp(&self.f),
            g: NetworkDoc::from_mlp(&self.g),
            dec_s: NetworkDoc::from_mlp(&self.dec_s),
            dec_t: NetworkDoc::from_mlp(&self.dec_t),
        };
        serde_json::to_string_pretty(&doc).expect("embedding document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_version(text)?;
        let doc: EmbeddingDoc =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let model = EmbeddingModel {
            f: doc.f.to_mlp()?,
            g: doc.g.to_mlp()?,
            dec_s: doc.dec_s.to_mlp()?,
            dec_t: doc.dec_t.to_mlp()?,
            feature_dim: doc.feature_dim,
        };
        model
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(model)
    }
}
