//! Fully connected networks with exact batched backpropagation.
//!
//! Batches are matrices with one sample per column.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Hidden layers use `hidden_activation`; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
}

/// Per-layer inputs and pre-activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<DMatrix<f64>>,
    pub pre_activations: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn new<R: Rng>(dims: &[usize], hidden_activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::arg("an MLP needs at least two positive layer sizes"));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weights = DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound));
                let bias = DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound));
                Layer { weights, bias }
            })
            .collect();
        Ok(Mlp {
            layers,
            hidden_activation,
        })
    }

    pub fn zeros(dims: &[usize], hidden_activation: Activation) -> Self {
        Mlp {
            layers: dims
                .windows(2)
                .map(|w| Layer {
                    weights: DMatrix::zeros(w[1], w[0]),
                    bias: DVector::zeros(w[1]),
                })
                .collect(),
            hidden_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weights.nrows()));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        if x.nrows() != self.input_dim() {
            return Err(Error::arg(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * &h;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let out = if i == last {
                z.clone()
            } else {
                z.map(|v| self.hidden_activation.apply(v))
            };
            cache.inputs.push(h);
            cache.pre_activations.push(z);
            h = out;
        }
        Ok((h, cache))
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<(DVector<f64>, ForwardCache)> {
        let (y, cache) =
            self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
        Ok((y.column(0).into_owned(), cache))
    }

    /// Output only.
    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.forward(&DVector::from_column_slice(x))?.0)
    }

    /// Gradients of `sum_ij dy_ij * y_ij` for the batch behind `cache`,
    /// plus the gradient with respect to the input batch.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        dy: &DMatrix<f64>,
    ) -> (MlpGrads, DMatrix<f64>) {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i != last {
                let z = &cache.pre_activations[i];
                delta.zip_apply(z, |d, zv| *d *= self.hidden_activation.derivative(zv));
            }
            let dw = &delta * cache.inputs[i].transpose();
            let db = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            let next = self.layers[i].weights.transpose() * &delta;
            grads.push(Layer {
                weights: dw,
                bias: db,
            });
            delta = next;
        }
        grads.reverse();
        (MlpGrads { layers: grads }, delta)
    }

    /// Parameters in layer order, each weight matrix column-major then its bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(l.weights.as_slice());
            v.extend_from_slice(l.bias.as_slice());
        }
        v
    }

    /// Inverse of [`Mlp::flatten`]; returns the number of values consumed.
    pub fn assign(&mut self, flat: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        at
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Gradient with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: Mlp::zeros(&net.dims(), net.hidden_activation).layers,
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(l.weights.as_slice());
            v.extend_from_slice(l.bias.as_slice());
        }
        v
    }
}
