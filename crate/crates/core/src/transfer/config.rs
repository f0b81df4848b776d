use serde::{Deserialize, Serialize};

use crate::baselines::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    #[default]
    None,
    LinearToZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    /// Weight on the tracking term, in units of the feature scale.
    pub alpha0: f64,
    pub decay: Decay,
    /// Iterations until the weight reaches zero under linear decay.
    pub decay_horizon: usize,
    pub method: Method,
    /// Residual norm, as a fraction of the feature scale, below which the
    /// tracking term's curvature stops growing.
    pub curvature_floor: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            alpha0: 1.0,
            decay: Decay::None,
            decay_horizon: 20,
            method: Method::Invariant,
            curvature_floor: 0.05,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.alpha0 >= 0.0) || !self.alpha0.is_finite() {
            errs.push("transfer.alpha0 must be finite and non-negative".into());
        }
        if self.decay == Decay::LinearToZero && self.decay_horizon == 0 {
            errs.push("transfer.decay_horizon must be positive for linear decay".into());
        }
        if !(self.curvature_floor > 0.0) {
            errs.push("transfer.curvature_floor must be positive".into());
        }
        errs
    }
}

pub fn alpha_at(cfg: &TransferConfig, iter: usize) -> f64 {
    match cfg.decay {
        Decay::None => cfg.alpha0,
        Decay::LinearToZero => cfg.alpha0 * (1.0 - iter as f64 / cfg.decay_horizon as f64).max(0.0),
    }
}
