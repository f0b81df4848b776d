use serde::{Deserialize, Serialize};

use super::dtw::{dtw, AlignmentPath};
use super::pairs::{pairs_from_paths, time_align, PairSet};
use crate::dynamics::Trajectory;
use crate::embedding::{
    train_embedding, train_from, EmbedConfig, EmbeddingModel, Side, TrainingHistory,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub rounds: usize,
    /// Continue training the previous round's networks instead of
    /// re-initializing them.
    pub warm_start: bool,
    pub band: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            rounds: 3,
            warm_start: false,
            band: None,
            exec: Exec::default(),
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.rounds == 0 {
            errs.push("alignment.rounds must be at least 1".into());
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub pairs: usize,
    pub final_loss: f64,
    /// Summed DTW cost over conditions in this round's feature space.
    pub dtw_cost: f64,
    /// Fraction of DTW pairs that lie on the time diagonal.
    pub diagonal_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct EmAlignment {
    pub model: EmbeddingModel,
    pub pairs: PairSet,
    pub history: TrainingHistory,
    pub rounds: Vec<RoundDiagnostics>,
}

impl EmAlignment {
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("round,pairs,final_loss,dtw_cost,diagonal_fraction\n");
        for r in &self.rounds {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.round, r.pairs, r.final_loss, r.dtw_cost, r.diagonal_fraction
            ));
        }
        out
    }
}

/// Aligns each trajectory pair by DTW over embedded agent states.
pub fn embedded_dtw(
    model: &EmbeddingModel,
    src: &[Trajectory],
    tgt: &[Trajectory],
    band: Option<usize>,
    exec: Exec,
) -> Result<Vec<AlignmentPath>> {
    if src.len() != tgt.len() {
        return Err(Error::arg(
            "need one target trajectory per source trajectory",
        ));
    }
    exec.try_map(src.len(), |c| {
        let a = model.embed_batch(Side::Source, &src[c].agent_states())?;
        let b = model.embed_batch(Side::Target, &tgt[c].agent_states())?;
        dtw(&a, &b, band)
    })
}

fn round_seed(master: u64, round: usize) -> u64 {
    if round == 0 {
        master
    } else {
        seed::derive(master, &["alignment", "round"], &[round as u64])
    }
}

/// Alternates embedding training on the current pairs with DTW re-pairing in
/// the learned feature space, starting from time alignment. Every round's
/// model is scored with DTW; only rounds before the last replace the pairs.
pub fn em_align(
    src: &[Trajectory],
    tgt: &[Trajectory],
    embed: &EmbedConfig,
    cfg: &AlignConfig,
    seed: u64,
) -> Result<EmAlignment> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let mut pairs = time_align(src, tgt)?;
    let mut prev: Option<EmbeddingModel> = None;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut last = None;
    for r in 0..cfg.rounds {
        let s = round_seed(seed, r);
        let (model, history) = match prev.take() {
            Some(m) if cfg.warm_start => train_from(m, &pairs, embed, s)?,
            _ => train_embedding(&pairs, embed, s)?,
        };
        let paths = embedded_dtw(&model, src, tgt, cfg.band, cfg.exec)?;
        let dtw_cost: f64 = paths.iter().map(|p| p.cost).sum();
        if !dtw_cost.is_finite() {
            return Err(Error::numerical(format!(
                "round {r}: DTW cost is not finite"
            )));
        }
        let total: usize = paths.iter().map(|p| p.path.len()).sum();
        let diag: usize = paths
            .iter()
            .map(|p| p.path.iter().filter(|(i, j)| i == j).count())
            .sum();
        rounds.push(RoundDiagnostics {
            round: r,
            pairs: pairs.len(),
            final_loss: history.final_losses.total(),
            dtw_cost,
            diagonal_fraction: diag as f64 / total as f64,
        });
        log::debug!("alignment round {r}: dtw cost {dtw_cost:.4}, diagonal {diag}/{total}");
        if r + 1 < cfg.rounds {
            pairs = pairs_from_paths(src, tgt, &paths)?;
        }
        prev = Some(model.clone());
        last = Some((model, history));
    }
    let (model, history) = last.expect("rounds >= 1");
    Ok(EmAlignment {
        model,
        pairs,
        history,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DomainState;

    fn traj(states: Vec<Vec<f64>>) -> Trajectory {
        let n = states.len();
        Trajectory {
            condition: 0,
            states: states
                .into_iter()
                .map(|agent| DomainState {
                    agent,
                    env: vec![0.0; 4],
                })
                .collect(),
            actions: vec![vec![0.0]; n - 1],
            costs: vec![0.0; n],
            success: false,
        }
    }

    /// Source and target trace the same curve at the same rate through
    /// different linear state maps.
    fn equal_rate(conds: usize, len: usize) -> (Vec<Trajectory>, Vec<Trajectory>) {
        let mut src = Vec::new();
        let mut tgt = Vec::new();
        for c in 0..conds {
            let z: Vec<(f64, f64)> = (0..len)
                .map(|t| {
                    let u = t as f64 / (len - 1) as f64;
                    (u * (1.0 + 0.3 * c as f64), (3.0 * u + c as f64).sin())
                })
                .collect();
            src.push(traj(z.iter().map(|&(a, b)| vec![a, b, a - b]).collect()));
            tgt.push(traj(
                z.iter()
                    .map(|&(a, b)| vec![b, 0.5 * a, a + b, -a])
                    .collect(),
            ));
        }
        (src, tgt)
    }

    fn small() -> EmbedConfig {
        EmbedConfig {
            feature_dim: 2,
            hidden: vec![16, 16],
            epochs: 150,
            batch_size: 16,
            squared: true,
            ..EmbedConfig::default()
        }
    }

    #[test]
    fn one_round_equals_plain_training_on_time_pairs() {
        let (src, tgt) = equal_rate(2, 12);
        let cfg = AlignConfig {
            rounds: 1,
            ..AlignConfig::default()
        };
        let em = em_align(&src, &tgt, &small(), &cfg, 9).unwrap();
        let (model, history) =
            train_embedding(&time_align(&src, &tgt).unwrap(), &small(), 9).unwrap();
        assert_eq!(em.pairs, time_align(&src, &tgt).unwrap());
        assert_eq!(em.model.params(), model.params());
        assert_eq!(em.history.total, history.total);
        assert_eq!(em.rounds.len(), 1);
    }

    #[test]
    fn equal_rate_data_keeps_the_diagonal() {
        let (src, tgt) = equal_rate(2, 15);
        let mut embed = small();
        embed.epochs = 600;
        let cfg = AlignConfig {
            rounds: 2,
            ..AlignConfig::default()
        };
        let em = em_align(&src, &tgt, &embed, &cfg, 4).unwrap();
        assert_eq!(em.rounds.len(), 2);
        assert!(em.rounds.iter().all(|r| r.dtw_cost.is_finite()));
        let mut expected = time_align(&src, &tgt).unwrap();
        expected.provenance = em.pairs.provenance;
        assert_eq!(em.pairs, expected);
        assert_eq!(em.rounds[0].diagonal_fraction, 1.0);
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let (src, tgt) = equal_rate(3, 10);
        let mut embed = small();
        embed.epochs = 40;
        let run = |exec, warm_start| {
            let cfg = AlignConfig {
                rounds: 3,
                exec,
                warm_start,
                ..AlignConfig::default()
            };
            em_align(&src, &tgt, &embed, &cfg, 21).unwrap()
        };
        for warm in [false, true] {
            let a = run(Exec::Parallel, warm);
            let b = run(Exec::Sequential, warm);
            assert_eq!(a.pairs, b.pairs);
            assert_eq!(a.model.params(), b.model.params());
            assert_eq!(a.rounds, b.rounds);
        }
    }

    #[test]
    fn zero_rounds_is_rejected() {
        let (src, tgt) = equal_rate(1, 5);
        let cfg = AlignConfig {
            rounds: 0,
            ..AlignConfig::default()
        };
        assert!(matches!(
            em_align(&src, &tgt, &small(), &cfg, 1),
            Err(Error::Validation(_))
        ));
    }
}
