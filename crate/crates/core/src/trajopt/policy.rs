use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;

/// Time-varying linear-Gaussian controller `u_t ~ N(K_t x_t + k_t, C_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianPolicy {
    pub gains: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl LinearGaussianPolicy {
    /// `K = 0`, `k = 0`, `C = variance * I`.
    pub fn initial(horizon: usize, state_dim: usize, action_dim: usize, variance: f64) -> Self {
        LinearGaussianPolicy {
            gains: vec![DMatrix::zeros(action_dim, state_dim); horizon],
            biases: vec![DVector::zeros(action_dim); horizon],
            covariances: vec![DMatrix::identity(action_dim, action_dim) * variance; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn action_dim(&self) -> usize {
        self.biases.first().map_or(0, |k| k.len())
    }

    pub fn mean_action(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.gains[t] * x + &self.biases[t]
    }

    /// Same means with every covariance replaced by zero.
    pub fn deterministic(&self) -> Self {
        let mut p = self.clone();
        for c in &mut p.covariances {
            c.fill(0.0);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon();
        if self.biases.len() != h || self.covariances.len() != h {
            return Err(Error::arg("policy sequences have different lengths"));
        }
        for (t, c) in self.covariances.iter().enumerate() {
            if (c - c.transpose()).amax() > 1e-9 * c.amax().max(1.0) {
                return Err(Error::numerical(format!("covariance {t} is not symmetric")));
            }
            if min_eigenvalue(c) < -1e-10 {
                return Err(Error::numerical(format!("covariance {t} is not PSD")));
            }
        }
        Ok(())
    }
}
