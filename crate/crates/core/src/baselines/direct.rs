use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alignment::PairSet;
use crate::embedding::{Activation, Adam, AdamConfig, Mlp};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for DirectConfig {
    fn default() -> Self {
        DirectConfig {
            hidden: vec![60, 60, 60],
            epochs: 500,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

impl DirectConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.hidden.contains(&0) {
            errs.push("direct.hidden sizes must be positive".into());
        }
        if self.batch_size == 0 {
            errs.push("direct.batch_size must be positive".into());
        }
        if !(self.adam.lr > 0.0) {
            errs.push("direct.adam.lr must be positive".into());
        }
        errs
    }
}

/// Regressor from source agent state to target agent state.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectMapping {
    pub net: Mlp,
    /// Mean squared error at the start of each epoch.
    pub history: Vec<f64>,
    pub final_loss: f64,
}

impl DirectMapping {
    pub fn predict(&self, source: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.apply(source)?.iter().copied().collect())
    }
}

fn mse(net: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let (p, _) = net.forward_batch(x)?;
    Ok((p - y).column_iter().map(|c| c.norm_squared()).sum::<f64>() / x.ncols() as f64)
}

pub fn fit_direct_mapping(pairs: &PairSet, cfg: &DirectConfig, seed: u64) -> Result<DirectMapping> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    pairs.validate()?;
    let mut dims = vec![pairs.source_dim()];
    dims.extend(&cfg.hidden);
    dims.push(pairs.target_dim());
    let mut net = Mlp::new(
        &dims,
        Activation::Relu,
        &mut seed::rng(seed::derive(seed, &["direct", "init"], &[])),
    )?;
    let n = pairs.len();
    let xs = DMatrix::from_fn(pairs.source_dim(), n, |i, j| pairs.entries[j].source[i]);
    let ys = DMatrix::from_fn(pairs.target_dim(), n, |i, j| pairs.entries[j].target[i]);
    let mut params = net.flatten();
    let mut opt = Adam::new(cfg.adam, params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        history.push(mse(&net, &xs, &ys)?);
        order.shuffle(&mut seed::rng(seed::derive(
            seed,
            &["direct", "shuffle"],
            &[epoch as u64],
        )));
        for chunk in order.chunks(cfg.batch_size) {
            let x = xs.select_columns(chunk);
            let y = ys.select_columns(chunk);
            let (p, cache) = net.forward_batch(&x)?;
            let dy = (p - y) * (2.0 / chunk.len() as f64);
            let (grads, _) = net.backward_batch(&cache, &dy);
            opt.update(&mut params, &grads.flatten());
            net.assign(&params);
        }
        if !net.is_finite() {
            return Err(Error::numerical(format!(
                "direct mapping diverged in epoch {epoch}"
            )));
        }
    }
    let final_loss = mse(&net, &xs, &ys)?;
    Ok(DirectMapping {
        net,
        history,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{PairEntry, Provenance};
    use rand::Rng;

    fn self_pairs(n: usize, seed_: u64) -> PairSet {
        let mut rng = seed::rng(seed_);
        PairSet {
            entries: (0..n)
                .map(|i| {
                    let s: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                    PairEntry {
                        cond: 0,
                        src_t: i,
                        tgt_t: i,
                        source: s.clone(),
                        target: s,
                    }
                })
                .collect(),
            provenance: Provenance::External,
        }
    }

    #[test]
    fn zero_epochs_returns_the_initial_network() {
        let pairs = self_pairs(20, 1);
        let cfg = DirectConfig {
            epochs: 0,
            ..DirectConfig::default()
        };
        let m = fit_direct_mapping(&pairs, &cfg, 3).unwrap();
        assert!(m.history.is_empty());
        let init = Mlp::new(
            &[4, 60, 60, 60, 4],
            Activation::Relu,
            &mut seed::rng(seed::derive(3, &["direct", "init"], &[])),
        )
        .unwrap();
        assert_eq!(m.net, init);
    }

    #[test]
    fn learns_the_identity_map() {
        let pairs = self_pairs(400, 2);
        let cfg = DirectConfig {
            epochs: 300,
            ..DirectConfig::default()
        };
        let m = fit_direct_mapping(&pairs, &cfg, 5).unwrap();
        assert!(m.final_loss < m.history[0]);
        let held = self_pairs(100, 77);
        let mut err = 0.0;
        let mut norm = 0.0;
        for e in &held.entries {
            let p = m.predict(&e.source).unwrap();
            err += crate::linalg::dist(&p, &e.target);
            norm += crate::linalg::norm(&e.target);
        }
        assert!(err / norm < 0.05, "relative error {}", err / norm);
    }

    #[test]
    fn deterministic_per_seed() {
        let pairs = self_pairs(50, 4);
        let cfg = DirectConfig {
            epochs: 5,
            ..DirectConfig::default()
        };
        assert_eq!(
            fit_direct_mapping(&pairs, &cfg, 8).unwrap(),
            fit_direct_mapping(&pairs, &cfg, 8).unwrap()
        );
    }
}
