//! Paired encoders `f` (source) and `g` (target) with decoders back to each
//! agent state, trained so paired states land on the same feature vector.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::mlp::{Activation, Mlp, MlpGrads};
use crate::alignment::PairSet;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub sim_weight: f64,
    pub ae_source_weight: f64,
    pub ae_target_weight: f64,
    /// Use squared norms in all three losses.
    pub squared: bool,
    /// `eps` in the gradient `d / sqrt(|d|^2 + eps)` of a norm.
    pub smoothing: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            feature_dim: 6,
            hidden: vec![60, 60, 60],
            epochs: 500,
            batch_size: 64,
            adam: AdamConfig::default(),
            sim_weight: 1.0,
            ae_source_weight: 1.0,
            ae_target_weight: 1.0,
            squared: false,
            smoothing: 1e-8,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.feature_dim == 0 {
            errs.push("embedding.feature_dim must be positive".into());
        }
        if self.hidden.contains(&0) {
            errs.push("embedding.hidden sizes must be positive".into());
        }
        if self.batch_size == 0 {
            errs.push("embedding.batch_size must be positive".into());
        }
        if !(self.adam.lr > 0.0) {
            errs.push("embedding.adam.lr must be positive".into());
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            errs.push("embedding.adam betas must lie in [0, 1)".into());
        }
        for (name, w) in [
            ("sim_weight", self.sim_weight),
            ("ae_source_weight", self.ae_source_weight),
            ("ae_target_weight", self.ae_target_weight),
        ] {
            if !(w >= 0.0) {
                errs.push(format!("embedding.{name} must be non-negative"));
            }
        }
        if !(self.smoothing > 0.0) {
            errs.push("embedding.smoothing must be positive".into());
        }
        errs
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(&self.hidden);
        d.push(output);
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub f: Mlp,
    pub g: Mlp,
    pub dec_s: Mlp,
    pub dec_t: Mlp,
    pub feature_dim: usize,
}

/// Loss values; each is the weighted contribution to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Losses {
    pub sim: f64,
    pub ae_source: f64,
    pub ae_target: f64,
}

impl Losses {
    pub fn total(&self) -> f64 {
        self.sim + self.ae_source + self.ae_target
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    /// Mean per-pair losses over the whole pair set at the start of each epoch.
    pub sim: Vec<f64>,
    pub ae_source: Vec<f64>,
    pub ae_target: Vec<f64>,
    pub total: Vec<f64>,
    /// Same measure after the last epoch.
    pub final_losses: Losses,
}

impl TrainingHistory {
    fn push(&mut self, l: Losses) {
        self.sim.push(l.sim);
        self.ae_source.push(l.ae_source);
        self.ae_target.push(l.ae_target);
        self.total.push(l.total());
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,sim,ae_source,ae_target,total\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                self.sim[i], self.ae_source[i], self.ae_target[i], self.total[i]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub f: MlpGrads,
    pub g: MlpGrads,
    pub dec_s: MlpGrads,
    pub dec_t: MlpGrads,
}

impl ModelGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.f.flatten();
        v.extend(self.g.flatten());
        v.extend(self.dec_s.flatten());
        v.extend(self.dec_t.flatten());
        v
    }
}

pub(crate) fn columns(rows: &[&[f64]]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(d, rows.len(), |i, j| rows[j][i])
}

/// Value of one (possibly squared) norm and its gradient scale:
/// the gradient with respect to `d` is `scale * d`.
fn norm_term(d: &[f64], squared: bool, smoothing: f64) -> (f64, f64) {
    let sq: f64 = d.iter().map(|v| v * v).sum();
    if squared {
        (sq, 2.0)
    } else {
        (sq.sqrt(), 1.0 / (sq + smoothing).sqrt())
    }
}

impl EmbeddingModel {
    pub fn new(source_dim: usize, target_dim: usize, cfg: &EmbedConfig, seed: u64) -> Result<Self> {
        let k = cfg.feature_dim;
        let net = |name: &str, dims: Vec<usize>| {
            Mlp::new(
                &dims,
                Activation::Relu,
                &mut seed::rng(seed::derive(seed, &["embedding", name], &[])),
            )
        };
        Ok(EmbeddingModel {
            f: net("f", cfg.dims(source_dim, k))?,
            g: net("g", cfg.dims(target_dim, k))?,
            dec_s: net("dec_s", cfg.dims(k, source_dim))?,
            dec_t: net("dec_t", cfg.dims(k, target_dim))?,
            feature_dim: k,
        })
    }

    pub fn source_dim(&self) -> usize {
        self.f.input_dim()
    }

    pub fn target_dim(&self) -> usize {
        self.g.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.feature_dim;
        let ok = self.f.output_dim() == k
            && self.g.output_dim() == k
            && self.dec_s.input_dim() == k
            && self.dec_t.input_dim() == k
            && self.dec_s.output_dim() == self.f.input_dim()
            && self.dec_t.output_dim() == self.g.input_dim();
        if !ok {
            return Err(Error::arg("encoder and decoder shapes are inconsistent"));
        }
        Ok(())
    }

    pub fn embed(&self, side: Side, state: &[f64]) -> Result<DVector<f64>> {
        match side {
            Side::Source => self.f.apply(state),
            Side::Target => self.g.apply(state),
        }
    }

    /// One feature vector per input row.
    pub fn embed_batch(&self, side: Side, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        let net = match side {
            Side::Source => &self.f,
            Side::Target => &self.g,
        };
        let (y, _) = net.forward_batch(&columns(&refs))?;
        Ok(y.column_iter()
            .map(|c| c.iter().copied().collect())
            .collect())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.f.flatten();
        v.extend(self.g.flatten());
        v.extend(self.dec_s.flatten());
        v.extend(self.dec_t.flatten());
        v
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut at = self.f.assign(flat);
        at += self.g.assign(&flat[at..]);
        at += self.dec_s.assign(&flat[at..]);
        self.dec_t.assign(&flat[at..]);
    }

    /// Summed weighted losses over `batch` and their exact gradients
    /// (norm gradients smoothed at zero).
    pub fn objective_grad(
        &self,
        batch: &[(&[f64], &[f64])],
        cfg: &EmbedConfig,
    ) -> Result<(Losses, ModelGrads)> {
        if batch.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        let s: Vec<&[f64]> = batch.iter().map(|p| p.0).collect();
        let t: Vec<&[f64]> = batch.iter().map(|p| p.1).collect();
        let (xs, xt) = (columns(&s), columns(&t));
        let (fs, cf) = self.f.forward_batch(&xs)?;
        let (gt, cg) = self.g.forward_batch(&xt)?;
        let (rs, cds) = self.dec_s.forward_batch(&fs)?;
        let (rt, cdt) = self.dec_t.forward_batch(&gt)?;

        let mut losses = Losses::default();
        let mut d_f = DMatrix::zeros(fs.nrows(), fs.ncols());
        let mut d_g = DMatrix::zeros(gt.nrows(), gt.ncols());
        let mut d_rs = DMatrix::zeros(rs.nrows(), rs.ncols());
        let mut d_rt = DMatrix::zeros(rt.nrows(), rt.ncols());
        for j in 0..batch.len() {
            let diff = fs.column(j) - gt.column(j);
            let (v, scale) = norm_term(diff.as_slice(), cfg.squared, cfg.smoothing);
            losses.sim += cfg.sim_weight * v;
            let gcol = &diff * (cfg.sim_weight * scale);
            d_f.column_mut(j).copy_from(&gcol);
            d_g.column_mut(j).copy_from(&(-gcol));

            let es = rs.column(j) - xs.column(j);
            let (v, scale) = norm_term(es.as_slice(), cfg.squared, cfg.smoothing);
            losses.ae_source += cfg.ae_source_weight * v;
            d_rs.column_mut(j)
                .copy_from(&(es * (cfg.ae_source_weight * scale)));

            let et = rt.column(j) - xt.column(j);
            let (v, scale) = norm_term(et.as_slice(), cfg.squared, cfg.smoothing);
            losses.ae_target += cfg.ae_target_weight * v;
            d_rt.column_mut(j)
                .copy_from(&(et * (cfg.ae_target_weight * scale)));
        }
        let (gds, dfs) = self.dec_s.backward_batch(&cds, &d_rs);
        let (gdt, dgt) = self.dec_t.backward_batch(&cdt, &d_rt);
        d_f += dfs;
        d_g += dgt;
        let (gf, _) = self.f.backward_batch(&cf, &d_f);
        let (gg, _) = self.g.backward_batch(&cg, &d_g);
        Ok((
            losses,
            ModelGrads {
                f: gf,
                g: gg,
                dec_s: gds,
                dec_t: gdt,
            },
        ))
    }

    /// Mean per-pair losses over a pair set.
    pub fn evaluate(&self, pairs: &PairSet, cfg: &EmbedConfig) -> Result<Losses> {
        let batch = pairs.as_batch();
        let (l, _) = self.objective_grad(&batch, cfg)?;
        let n = batch.len() as f64;
        Ok(Losses {
            sim: l.sim / n,
            ae_source: l.ae_source / n,
            ae_target: l.ae_target / n,
        })
    }

    /// Mean per-dimension variance of `f` over the source states of `pairs`.
    pub fn feature_variance(&self, pairs: &PairSet) -> Result<f64> {
        let states: Vec<Vec<f64>> = pairs.entries.iter().map(|e| e.source.clone()).collect();
        let feats = self.embed_batch(Side::Source, &states)?;
        let n = feats.len() as f64;
        let k = self.feature_dim;
        let mut total = 0.0;
        for d in 0..k {
            let mean = feats.iter().map(|f| f[d]).sum::<f64>() / n;
            total += feats.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n;
        }
        Ok(total / k as f64)
    }
}

/// Seeded initialization, shuffled mini-batches, ADAM on the mean batch
/// gradient.
pub fn train_embedding(
    pairs: &PairSet,
    cfg: &EmbedConfig,
    seed: u64,
) -> Result<(EmbeddingModel, TrainingHistory)> {
    pairs.validate()?;
    let model = EmbeddingModel::new(pairs.source_dim(), pairs.target_dim(), cfg, seed)?;
    train_from(model, pairs, cfg, seed)
}

/// Continues training an existing model (warm start).
pub fn train_from(
    mut model: EmbeddingModel,
    pairs: &PairSet,
    cfg: &EmbedConfig,
    seed: u64,
) -> Result<(EmbeddingModel, TrainingHistory)> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    pairs.validate()?;
    if model.source_dim() != pairs.source_dim() || model.target_dim() != pairs.target_dim() {
        return Err(Error::arg("model dimensions do not match the pair set"));
    }
    let batch_all = pairs.as_batch();
    let mut params = model.params();
    let mut opt = Adam::new(cfg.adam, params.len());
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..batch_all.len()).collect();
    for epoch in 0..cfg.epochs {
        history.push(model.evaluate(pairs, cfg)?);
        let mut rng = seed::rng(seed::derive(
            seed,
            &["embedding", "shuffle"],
            &[epoch as u64],
        ));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], &[f64])> = chunk.iter().map(|&i| batch_all[i]).collect();
            let (_, grads) = model.objective_grad(&batch, cfg)?;
            let scale = 1.0 / batch.len() as f64;
            let g: Vec<f64> = grads.flatten().into_iter().map(|v| v * scale).collect();
            opt.update(&mut params, &g);
            model.assign(&params);
        }
        if !model.f.is_finite() {
            return Err(Error::numerical(format!(
                "embedding parameters diverged in epoch {epoch}"
            )));
        }
    }
    history.final_losses = model.evaluate(pairs, cfg)?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{PairEntry, Provenance};
    use rand::Rng;

    fn toy_pairs(n: usize, ds: usize, dt: usize, seed_: u64) -> PairSet {
        let mut rng = seed::rng(seed_);
        let entries = (0..n)
            .map(|i| {
                let z: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let source = (0..ds).map(|d| z[d % 2] * (1.0 + d as f64 * 0.3)).collect();
                let target = (0..dt)
                    .map(|d| z[(d + 1) % 2] - 0.5 * z[d % 2] * d as f64 * 0.2)
                    .collect();
                PairEntry {
                    cond: 0,
                    src_t: i,
                    tgt_t: i,
                    source,
                    target,
                }
            })
            .collect();
        PairSet {
            entries,
            provenance: Provenance::External,
        }
    }

    fn small_cfg() -> EmbedConfig {
        EmbedConfig {
            feature_dim: 2,
            hidden: vec![5, 4],
            ..EmbedConfig::default()
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pairs = toy_pairs(6, 4, 4, 1);
        for squared in [false, true] {
            let cfg = EmbedConfig {
                squared,
                ..small_cfg()
            };
            let model = EmbeddingModel::new(4, 4, &cfg, 9).unwrap();
            let batch = pairs.as_batch();
            let (_, grads) = model.objective_grad(&batch, &cfg).unwrap();
            let analytic = grads.flatten();
            let p0 = model.params();
            let total = |p: &[f64]| {
                let mut m = model.clone();
                m.assign(p);
                m.objective_grad(&batch, &cfg).unwrap().0.total()
            };
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] += 1e-5;
                let up = total(&p);
                p[i] -= 2e-5;
                let down = total(&p);
                let fd = (up - down) / 2e-5;
                let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
                assert!(err < 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
            }
        }
    }

    #[test]
    fn duplicated_pair_doubles_gradient() {
        let pairs = toy_pairs(1, 3, 5, 2);
        let cfg = small_cfg();
        let model = EmbeddingModel::new(3, 5, &cfg, 4).unwrap();
        let one = pairs.as_batch();
        let two = vec![one[0], one[0]];
        let (l1, g1) = model.objective_grad(&one, &cfg).unwrap();
        let (l2, g2) = model.objective_grad(&two, &cfg).unwrap();
        assert_eq!(l2.total(), 2.0 * l1.total());
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn identical_encoders_have_zero_similarity_loss() {
        let cfg = small_cfg();
        let mut model = EmbeddingModel::new(3, 3, &cfg, 1).unwrap();
        model.g = model.f.clone();
        let entry = PairEntry {
            cond: 0,
            src_t: 0,
            tgt_t: 0,
            source: vec![0.1, 0.2, -0.3],
            target: vec![0.1, 0.2, -0.3],
        };
        let set = PairSet {
            entries: vec![entry],
            provenance: Provenance::External,
        };
        assert_eq!(model.evaluate(&set, &cfg).unwrap().sim, 0.0);
    }

    #[test]
    fn perfect_linear_autoencoder_has_zero_loss_and_gradient() {
        // Identity activations, one hidden layer of the input size, identity weights.
        let cfg = EmbedConfig {
            feature_dim: 3,
            hidden: vec![3],
            ..EmbedConfig::default()
        };
        let eye = |n: usize| {
            let mut m = Mlp::zeros(&[n, n, n], Activation::Identity);
            for l in &mut m.layers {
                l.weights = DMatrix::identity(n, n);
            }
            m
        };
        let model = EmbeddingModel {
            f: eye(3),
            g: eye(3),
            dec_s: eye(3),
            dec_t: eye(3),
            feature_dim: 3,
        };
        let s = [0.4, -0.2, 0.9];
        let (l, g) = model.objective_grad(&[(&s, &s)], &cfg).unwrap();
        assert_eq!(l.total(), 0.0);
        assert!(g.flatten().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn losses_match_separate_forwards() {
        let pairs = toy_pairs(5, 4, 3, 8);
        let cfg = small_cfg();
        let model = EmbeddingModel::new(4, 3, &cfg, 2).unwrap();
        let l = model.evaluate(&pairs, &cfg).unwrap();
        let norm = |v: DVector<f64>| v.norm();
        let (mut sim, mut aes, mut aet) = (0.0, 0.0, 0.0);
        for e in &pairs.entries {
            let fs = model.f.apply(&e.source).unwrap();
            let gt = model.g.apply(&e.target).unwrap();
            sim += norm(&fs - &gt);
            aes += norm(
                model.dec_s.apply(fs.as_slice()).unwrap() - DVector::from_column_slice(&e.source),
            );
            aet += norm(
                model.dec_t.apply(gt.as_slice()).unwrap() - DVector::from_column_slice(&e.target),
            );
        }
        let n = pairs.entries.len() as f64;
        assert!((l.sim - sim / n).abs() < 1e-12);
        assert!((l.ae_source - aes / n).abs() < 1e-12);
        assert!((l.ae_target - aet / n).abs() < 1e-12);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let pairs = toy_pairs(200, 6, 8, 3);
        let cfg = EmbedConfig {
            epochs: 40,
            ..EmbedConfig::default()
        };
        let (m1, h1) = train_embedding(&pairs, &cfg, 17).unwrap();
        let (m2, h2) = train_embedding(&pairs, &cfg, 17).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 40);
        assert!(h1.final_losses.total() < h1.total[0]);
        for i in 0..h1.len() {
            let sum = h1.sim[i] + h1.ae_source[i] + h1.ae_target[i];
            assert!((sum - h1.total[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn self_pairs_drive_similarity_loss_down() {
        let base = toy_pairs(200, 6, 6, 5);
        let pairs = PairSet {
            entries: base
                .entries
                .into_iter()
                .map(|mut e| {
                    e.target = e.source.clone();
                    e
                })
                .collect(),
            provenance: Provenance::External,
        };
        let cfg = EmbedConfig {
            epochs: 100,
            ..EmbedConfig::default()
        };
        let (_, h) = train_embedding(&pairs, &cfg, 1).unwrap();
        assert!(
            h.final_losses.sim < 0.1 * h.sim[0],
            "{} vs {}",
            h.final_losses.sim,
            h.sim[0]
        );
    }

    #[test]
    fn initial_loss_ignores_pair_order() {
        let pairs = toy_pairs(50, 4, 3, 6);
        let mut shuffled = pairs.clone();
        shuffled.entries.reverse();
        let cfg = EmbedConfig {
            epochs: 1,
            ..small_cfg()
        };
        let (_, a) = train_embedding(&pairs, &cfg, 3).unwrap();
        let (_, b) = train_embedding(&shuffled, &cfg, 3).unwrap();
        assert!((a.total[0] - b.total[0]).abs() < 1e-12);
    }

    #[test]
    fn embed_delegates_and_batches() {
        let cfg = EmbedConfig::default();
        let model = EmbeddingModel::new(6, 8, &cfg, 0).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64; 8]).collect();
        let batch = model.embed_batch(Side::Target, &xs).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            let single = model.embed(Side::Target, x).unwrap();
            assert_eq!(single, model.g.apply(x).unwrap());
            assert_eq!(single.len(), 6);
            assert!((single - DVector::from_column_slice(b)).amax() < 1e-12);
        }
        assert!(model.embed(Side::Source, &[0.0; 8]).is_err());
    }
}
