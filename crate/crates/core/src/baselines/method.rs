use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::direct::DirectMapping;
use super::kernel::{KernelEmbedding, KernelKind, KernelSide};
use super::linear::LinearEmbedding;
use crate::embedding::{check_version, EmbeddingModel, NetworkDoc, Side, CHECKPOINT_VERSION};
use crate::error::{Error, Result};

/// Which state correspondence the target is rewarded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Invariant,
    NoTransfer,
    RandomProjection,
    Cca,
    Kcca,
    DirectMapping,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Invariant,
        Method::NoTransfer,
        Method::RandomProjection,
        Method::Cca,
        Method::Kcca,
        Method::DirectMapping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Invariant => "invariant",
            Method::NoTransfer => "no_transfer",
            Method::RandomProjection => "random_projection",
            Method::Cca => "cca",
            Method::Kcca => "kcca",
            Method::DirectMapping => "direct_mapping",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the canonical names plus the short forms `none`,
    /// `random_proj` and `direct`.
    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "none" => Some(Method::NoTransfer),
            "random_proj" => Some(Method::RandomProjection),
            "direct" => Some(Method::DirectMapping),
            _ => None,
        };
        alias
            .or_else(|| Method::ALL.into_iter().find(|m| m.name() == s))
            .ok_or_else(|| {
                let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::arg(format!(
                    "unknown method `{s}` (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}

/// A trained correspondence, reduced to the two maps the transfer reward
/// needs: what the source state predicts, and what the target state is
/// compared in.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedMethod {
    Invariant(EmbeddingModel),
    RandomProjection(LinearEmbedding),
    Cca(LinearEmbedding),
    Kcca(KernelEmbedding),
    DirectMapping(DirectMapping),
}

impl FittedMethod {
    pub fn method(&self) -> Method {
        match self {
            FittedMethod::Invariant(_) => Method::Invariant,
            FittedMethod::RandomProjection(_) => Method::RandomProjection,
            FittedMethod::Cca(_) => Method::Cca,
            FittedMethod::Kcca(_) => Method::Kcca,
            FittedMethod::DirectMapping(_) => Method::DirectMapping,
        }
    }

    pub fn source_dim(&self) -> usize {
        match self {
            FittedMethod::Invariant(m) => m.source_dim(),
            FittedMethod::RandomProjection(l) | FittedMethod::Cca(l) => l.source_dim(),
            FittedMethod::Kcca(k) => k.source_dim(),
            FittedMethod::DirectMapping(d) => d.net.input_dim(),
        }
    }

    pub fn target_dim(&self) -> usize {
        match self {
            FittedMethod::Invariant(m) => m.target_dim(),
            FittedMethod::RandomProjection(l) | FittedMethod::Cca(l) => l.target_dim(),
            FittedMethod::Kcca(k) => k.target_dim(),
            FittedMethod::DirectMapping(d) => d.net.output_dim(),
        }
    }

    fn project(&self, side: Side, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FittedMethod::Invariant(m) => Ok(m.embed(side, x)?.iter().copied().collect()),
            FittedMethod::RandomProjection(l) | FittedMethod::Cca(l) => l.project(side, x),
            FittedMethod::Kcca(k) => k.project(side, x),
            FittedMethod::DirectMapping(d) => match side {
                Side::Source => d.predict(x),
                Side::Target => {
                    if x.len() != d.net.output_dim() {
                        return Err(Error::arg("target state has the wrong dimension"));
                    }
                    Ok(x.to_vec())
                }
            },
        }
    }

    /// What a source agent state predicts in the comparison space.
    pub fn reference(&self, source: &[f64]) -> Result<Vec<f64>> {
        self.project(Side::Source, source)
    }

    /// Where a target agent state lands in the comparison space.
    pub fn target_features(&self, target: &[f64]) -> Result<Vec<f64>> {
        self.project(Side::Target, target)
    }

    pub fn to_json(&self) -> String {
        let body = match self {
            FittedMethod::Invariant(m) => return m.to_json(),
            FittedMethod::RandomProjection(l) => Body::RandomProjection(LinearDoc::from(l)),
            FittedMethod::Cca(l) => Body::Cca(LinearDoc::from(l)),
            FittedMethod::Kcca(k) => Body::Kcca(KernelDoc::from(k)),
            FittedMethod::DirectMapping(d) => Body::DirectMapping(DirectDoc {
                net: NetworkDoc::from_mlp(&d.net),
                final_loss: d.final_loss,
            }),
        };
        let doc = MethodDoc {
            version: CHECKPOINT_VERSION,
            body,
        };
        serde_json::to_string_pretty(&doc).expect("method document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_version(text)?;
        #[derive(Deserialize)]
        struct Head {
            method: Method,
        }
        let bad = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        let head: Head = serde_json::from_str(text).map_err(bad)?;
        if head.method == Method::Invariant {
            return Ok(FittedMethod::Invariant(EmbeddingModel::from_json(text)?));
        }
        let doc: MethodDoc = serde_json::from_str(text).map_err(bad)?;
        Ok(match doc.body {
            Body::RandomProjection(l) => FittedMethod::RandomProjection(l.into_embedding()?),
            Body::Cca(l) => FittedMethod::Cca(l.into_embedding()?),
            Body::Kcca(k) => FittedMethod::Kcca(k.into_embedding()?),
            Body::DirectMapping(d) => FittedMethod::DirectMapping(DirectMapping {
                net: d.net.to_mlp()?,
                history: Vec::new(),
                final_loss: d.final_loss,
            }),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MethodDoc {
    version: u32,
    #[serde(flatten)]
    body: Body,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
enum Body {
    RandomProjection(LinearDoc),
    Cca(LinearDoc),
    Kcca(KernelDoc),
    DirectMapping(DirectDoc),
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixDoc {
    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Checkpoint("matrix data has the wrong size".into()));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
struct LinearDoc {
    source: MatrixDoc,
    target: MatrixDoc,
    source_mean: Option<Vec<f64>>,
    target_mean: Option<Vec<f64>>,
    correlations: Vec<f64>,
}

impl From<&LinearEmbedding> for LinearDoc {
    fn from(l: &LinearEmbedding) -> Self {
        LinearDoc {
            source: (&l.source).into(),
            target: (&l.target).into(),
            source_mean: l.source_mean.as_ref().map(|m| m.as_slice().to_vec()),
            target_mean: l.target_mean.as_ref().map(|m| m.as_slice().to_vec()),
            correlations: l.correlations.clone(),
        }
    }
}

impl LinearDoc {
    fn into_embedding(self) -> Result<LinearEmbedding> {
        let l = LinearEmbedding {
            source: self.source.to_matrix()?,
            target: self.target.to_matrix()?,
            source_mean: self.source_mean.map(DVector::from_vec),
            target_mean: self.target_mean.map(DVector::from_vec),
            correlations: self.correlations,
        };
        let mean_ok = |m: &Option<DVector<f64>>, d: usize| m.as_ref().is_none_or(|m| m.len() == d);
        if l.source.nrows() != l.target.nrows()
            || !mean_ok(&l.source_mean, l.source.ncols())
            || !mean_ok(&l.target_mean, l.target.ncols())
        {
            return Err(Error::Checkpoint(
                "linear embedding shapes are inconsistent".into(),
            ));
        }
        Ok(l)
    }
}

#[derive(Serialize, Deserialize)]
struct KernelSideDoc {
    samples: Vec<Vec<f64>>,
    bandwidth: f64,
    row_means: Vec<f64>,
    total_mean: f64,
    coefficients: MatrixDoc,
}

#[derive(Serialize, Deserialize)]
struct KernelDoc {
    kernel: KernelKind,
    reg: f64,
    source: KernelSideDoc,
    target: KernelSideDoc,
    correlations: Vec<f64>,
}

impl From<&KernelEmbedding> for KernelDoc {
    fn from(k: &KernelEmbedding) -> Self {
        let side = |s: &KernelSide| KernelSideDoc {
            samples: s.samples.clone(),
            bandwidth: s.bandwidth,
            row_means: s.row_means.clone(),
            total_mean: s.total_mean,
            coefficients: (&s.coefficients).into(),
        };
        KernelDoc {
            kernel: k.kind,
            reg: k.reg,
            source: side(&k.source),
            target: side(&k.target),
            correlations: k.correlations.clone(),
        }
    }
}

impl KernelDoc {
    fn into_embedding(self) -> Result<KernelEmbedding> {
        let k = self.correlations.len();
        let side = |s: KernelSideDoc| -> Result<KernelSide> {
            let coefficients = s.coefficients.to_matrix()?;
            let n = s.samples.len();
            if n == 0
                || s.row_means.len() != n
                || coefficients.nrows() != n
                || coefficients.ncols() != k
            {
                return Err(Error::Checkpoint(
                    "kernel embedding shapes are inconsistent".into(),
                ));
            }
            Ok(KernelSide {
                samples: s.samples,
                bandwidth: s.bandwidth,
                row_means: s.row_means,
                total_mean: s.total_mean,
                coefficients,
            })
        };
        Ok(KernelEmbedding {
            kind: self.kernel,
            reg: self.reg,
            source: side(self.source)?,
            target: side(self.target)?,
            correlations: self.correlations,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DirectDoc {
    net: NetworkDoc,
    final_loss: f64,
}
