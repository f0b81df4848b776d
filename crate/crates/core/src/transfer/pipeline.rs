use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{alpha_at, TransferConfig};
use crate::alignment::{em_align, time_align, AlignConfig, EmAlignment, PairSet};
use crate::baselines::{
    as_transfer_reward, cca_fit, fit_direct_mapping, kcca_fit, random_projection, DirectConfig,
    FittedMethod, KccaConfig, Method,
};
use crate::dynamics::{DomainSpec, RewardMode, Task, Trajectory};
use crate::embedding::{train_embedding, EmbedConfig, TrainingHistory};
use crate::error::{Error, Result};
use crate::linalg::{dist, median};
use crate::seed;
use crate::trajopt::{
    mean_rollouts, rl_iteration, AgentCostTerm, IterationStats, RlConfig, RlState,
};

/// Feature points beyond this are thinned before the median pairwise distance.
const SCALE_POINTS: usize = 300;

/// A task learned from scratch: its learning curve, the mean-policy rollout
/// of every condition and the exploratory samples of the last iteration.
#[derive(Debug, Clone)]
pub struct SolvedTask {
    pub stats: Vec<IterationStats>,
    pub trajectories: Vec<Trajectory>,
    /// `samples[c][k]`: sample `k` of condition `c`.
    pub samples: Vec<Vec<Trajectory>>,
}

impl SolvedTask {
    pub fn success_rate(&self) -> f64 {
        let n = self.trajectories.len().max(1) as f64;
        self.trajectories.iter().filter(|t| t.success).count() as f64 / n
    }
}

/// The source agent's solution of the test task.
pub type SourceSolution = SolvedTask;

/// One proxy task solved by both agents.
#[derive(Debug, Clone)]
pub struct ProxySolution {
    pub task: Task,
    pub source: SolvedTask,
    pub target: SolvedTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    #[default]
    Time,
    Em,
}

/// Hyperparameters of every correspondence method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfigs {
    pub embedding: EmbedConfig,
    pub alignment: AlignConfig,
    pub kcca: KccaConfig,
    pub direct: DirectConfig,
    /// Regularizer added to both CCA covariances.
    pub cca_reg: f64,
    /// Also pair the exploratory samples of the last proxy iteration.
    pub proxy_samples: bool,
    /// Pair only proxy conditions solved by both agents' mean policies.
    pub successful_proxies_only: bool,
}

impl Default for MethodConfigs {
    fn default() -> Self {
        MethodConfigs {
            embedding: EmbedConfig::default(),
            alignment: AlignConfig::default(),
            kcca: KccaConfig::default(),
            direct: DirectConfig::default(),
            cca_reg: 0.0,
            proxy_samples: true,
            successful_proxies_only: true,
        }
    }
}

impl MethodConfigs {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.embedding.validate();
        errs.extend(self.alignment.validate());
        errs.extend(self.kcca.validate());
        errs.extend(self.direct.validate());
        if !(self.cca_reg >= 0.0) {
            errs.push("cca_reg must be non-negative".into());
        }
        errs
    }
}

/// Runs RL from scratch and rolls out the final mean policies.
pub fn solve_task(
    spec: &DomainSpec,
    rl: &RlConfig,
    iterations: usize,
    seed: u64,
) -> Result<SolvedTask> {
    spec.validate()?;
    let mut state = RlState::initial(spec, rl);
    let mut stats = Vec::with_capacity(iterations);
    let mut samples = Vec::new();
    for it in 0..iterations {
        let (next, s, batch) = rl_iteration(spec, None, &state, rl, seed, it)?;
        state = next;
        stats.push(s);
        samples = batch;
    }
    let trajectories = mean_rollouts(spec, &state.accepted, rl.exec)?;
    Ok(SolvedTask {
        stats,
        trajectories,
        samples,
    })
}

/// Solves each proxy task with shaped costs in both domains.
pub fn solve_proxies(
    source: &DomainSpec,
    target: &DomainSpec,
    tasks: &[Task],
    rl: &RlConfig,
    iterations: usize,
    seed: u64,
) -> Result<Vec<ProxySolution>> {
    tasks
        .iter()
        .map(|&task| {
            let solve = |base: &DomainSpec, side: &str| {
                let mut spec = DomainSpec::new(base.morphology.clone(), task, RewardMode::Shaped);
                spec.horizon = base.horizon;
                spec.dt = base.dt;
                let s = seed::derive(seed, &["proxy", task.name(), side], &[]);
                solve_task(&spec, rl, iterations, s)
                    .map_err(|e| e.in_stage(format!("proxy {} ({side})", task.name())))
            };
            let src = solve(source, "source")?;
            let tgt = solve(target, "target")?;
            log::info!(
                "proxy {}: mean-policy success {:.2} (source) {:.2} (target)",
                task.name(),
                src.success_rate(),
                tgt.success_rate()
            );
            Ok(ProxySolution {
                task,
                source: src,
                target: tgt,
            })
        })
        .collect()
}

/// Which proxy trajectories are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProxySelection {
    /// Also pair the exploratory samples of the last iteration, sample `k`
    /// of a condition with the other agent's sample `k`.
    pub samples: bool,
    /// Skip conditions whose mean-policy rollout failed in either domain.
    pub successful_only: bool,
}

impl From<&MethodConfigs> for ProxySelection {
    fn from(c: &MethodConfigs) -> Self {
        ProxySelection {
            samples: c.proxy_samples,
            successful_only: c.successful_proxies_only,
        }
    }
}

/// Source and target proxy trajectories, concatenated over proxies and
/// conditions: each kept condition contributes its mean-policy rollouts,
/// then its samples when selected.
pub fn proxy_trajectories(
    proxies: &[&ProxySolution],
    select: ProxySelection,
) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let mut src = Vec::new();
    let mut tgt = Vec::new();
    for p in proxies {
        for (c, (a, b)) in p
            .source
            .trajectories
            .iter()
            .zip(&p.target.trajectories)
            .enumerate()
        {
            if select.successful_only && !(a.success && b.success) {
                continue;
            }
            src.push(a.clone());
            tgt.push(b.clone());
            if select.samples {
                if let (Some(sa), Some(sb)) = (p.source.samples.get(c), p.target.samples.get(c)) {
                    let n = sa.len().min(sb.len());
                    src.extend(sa[..n].iter().cloned());
                    tgt.extend(sb[..n].iter().cloned());
                }
            }
        }
    }
    (src, tgt)
}

/// Pairs from the pooled proxy trajectories. EM alignment also returns the
/// embedding trained in its last round.
pub fn build_pairs(
    proxies: &[&ProxySolution],
    mode: AlignmentMode,
    cfgs: &MethodConfigs,
    seed: u64,
) -> Result<(PairSet, Option<EmAlignment>)> {
    if proxies.is_empty() {
        return Err(Error::arg("at least one proxy task is required"));
    }
    let (src, tgt) = proxy_trajectories(proxies, cfgs.into());
    if src.is_empty() {
        return Err(Error::State(
            "no proxy condition was solved by both agents".into(),
        ));
    }
    match mode {
        AlignmentMode::Time => Ok((time_align(&src, &tgt)?, None)),
        AlignmentMode::Em => {
            let s = seed::derive(seed, &["fit", Method::Invariant.name()], &[]);
            let em = em_align(&src, &tgt, &cfgs.embedding, &cfgs.alignment, s)?;
            Ok((em.pairs.clone(), Some(em)))
        }
    }
}

/// A fitted method with what it was trained on.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub method: FittedMethod,
    /// Embedding loss curve, for the learned embedding only.
    pub history: Option<TrainingHistory>,
    /// Median pairwise distance between target-side features of the pairs.
    pub scale: f64,
}

/// Fits `method` on `pairs`. `em` supplies the already trained embedding
/// when the pairs came from EM alignment.
pub fn fit_method(
    method: Method,
    pairs: &PairSet,
    em: Option<&EmAlignment>,
    cfgs: &MethodConfigs,
    seed: u64,
) -> Result<Option<Fitted>> {
    pairs.validate()?;
    let s = seed::derive(seed, &["fit", method.name()], &[]);
    let k = cfgs.embedding.feature_dim;
    let (ds, dt) = (pairs.source_dim(), pairs.target_dim());
    let mut history = None;
    let fitted = match method {
        Method::NoTransfer => return Ok(None),
        Method::Invariant => match em {
            Some(em) => {
                history = Some(em.history.clone());
                FittedMethod::Invariant(em.model.clone())
            }
            None => {
                let (model, h) = train_embedding(pairs, &cfgs.embedding, s)?;
                history = Some(h);
                FittedMethod::Invariant(model)
            }
        },
        Method::RandomProjection => {
            FittedMethod::RandomProjection(random_projection(ds, dt, k.min(ds.min(dt)), s)?)
        }
        Method::Cca => FittedMethod::Cca(cca_fit(
            &pairs.sources(),
            &pairs.targets(),
            k.min(ds.min(dt)),
            cfgs.cca_reg,
        )?),
        Method::Kcca => {
            FittedMethod::Kcca(kcca_fit(&pairs.sources(), &pairs.targets(), k, &cfgs.kcca)?)
        }
        Method::DirectMapping => {
            FittedMethod::DirectMapping(fit_direct_mapping(pairs, &cfgs.direct, s)?)
        }
    };
    let scale = feature_scale(&fitted, pairs)?;
    Ok(Some(Fitted {
        method: fitted,
        history,
        scale,
    }))
}

/// Median pairwise distance between target-side features of the pairs.
pub fn feature_scale(method: &FittedMethod, pairs: &PairSet) -> Result<f64> {
    let n = pairs.len();
    let m = n.min(SCALE_POINTS);
    let feats: Vec<Vec<f64>> = (0..m)
        .map(|i| method.target_features(&pairs.entries[i * n / m].target))
        .collect::<Result<_>>()?;
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            d.push(dist(&feats[i], &feats[j]));
        }
    }
    let scale = if d.is_empty() { 0.0 } else { median(&d) };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::numerical(format!(
            "{} features collapse to a point on the training pairs",
            method.method()
        )));
    }
    Ok(scale)
}

/// `alpha(iter) / scale * |g(s_T) - f(s_S(t))|` for one target state.
pub fn transfer_cost(
    source: &SourceSolution,
    fitted: &Fitted,
    cfg: &TransferConfig,
    iter: usize,
    cond: usize,
    t: usize,
    target_agent: &[f64],
) -> Result<f64> {
    let s = source
        .trajectories
        .get(cond)
        .and_then(|tr| tr.states.get(t))
        .ok_or_else(|| Error::arg(format!("no source state for condition {cond}, step {t}")))?;
    let reference = fitted.method.reference(&s.agent)?;
    let phi = fitted.method.target_features(target_agent)?;
    Ok(alpha_at(cfg, iter) / fitted.scale * dist(&phi, &reference))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iter: usize,
    pub success_rate: f64,
    pub mean_cost: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct TransferRun {
    pub method: Method,
    pub curve: Vec<CurvePoint>,
    /// Mean-policy rollouts of the final controllers.
    pub final_rollouts: Vec<Trajectory>,
}

impl TransferRun {
    pub fn best_success(&self) -> f64 {
        self.curve
            .iter()
            .map(|p| p.success_rate)
            .fold(0.0, f64::max)
    }

    pub fn final_success(&self) -> f64 {
        self.curve.last().map_or(0.0, |p| p.success_rate)
    }

    /// `iter,success_rate,mean_cost,alpha` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("iter,success_rate,mean_cost,alpha\n");
        for p in &self.curve {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.iter, p.success_rate, p.mean_cost, p.alpha
            );
        }
        out
    }
}

/// Target-domain RL on `target` plus the tracking term of `fitted`
/// (none for the no-transfer baseline). Every method shares the rollout
/// noise of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn transfer_rl(
    target: &DomainSpec,
    source: &SourceSolution,
    fitted: Option<&Fitted>,
    cfg: &TransferConfig,
    rl: &RlConfig,
    iterations: usize,
    seed: u64,
) -> Result<TransferRun> {
    target.validate()?;
    if source.trajectories.len() != target.conditions.len() {
        return Err(Error::arg(
            "source solution and target task have different condition counts",
        ));
    }
    if source
        .trajectories
        .iter()
        .any(|t| t.horizon() != target.horizon)
    {
        return Err(Error::arg("source and target horizons differ"));
    }
    let s = seed::derive(seed, &["target"], &[]);
    let mut state = RlState::initial(target, rl);
    let mut curve = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let alpha = alpha_at(cfg, it);
        let reward = match fitted {
            Some(f) if alpha > 0.0 => {
                let weights = vec![alpha / f.scale; target.horizon + 1];
                Some(as_transfer_reward(
                    &f.method,
                    &source.trajectories,
                    weights,
                    cfg.curvature_floor * f.scale,
                )?)
            }
            _ => None,
        };
        let extra = reward.as_ref().map(|r| r as &dyn AgentCostTerm);
        let (next, stats, _) = rl_iteration(target, extra, &state, rl, s, it)?;
        state = next;
        curve.push(CurvePoint {
            iter: it,
            success_rate: stats.success_rate,
            mean_cost: stats.mean_cost,
            alpha: if fitted.is_some() { alpha } else { 0.0 },
        });
    }
    let final_rollouts = mean_rollouts(target, &state.accepted, rl.exec)?;
    Ok(TransferRun {
        method: fitted.map_or(Method::NoTransfer, |f| f.method.method()),
        curve,
        final_rollouts,
    })
}

/// Iteration budgets of the pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub proxy_iterations: usize,
    pub source_iterations: usize,
    pub target_iterations: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            proxy_iterations: 15,
            source_iterations: 15,
            target_iterations: 25,
        }
    }
}

/// Everything one method's transfer produced.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub proxies: Vec<ProxySolution>,
    pub pairs: PairSet,
    pub alignment: Option<EmAlignment>,
    pub source: SourceSolution,
    pub fitted: Option<Fitted>,
    pub run: TransferRun,
}

/// Proxy solves, pairing, fitting, source solve and target RL for one method.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer(
    source: &DomainSpec,
    target: &DomainSpec,
    proxies: &[Task],
    mode: AlignmentMode,
    cfg: &TransferConfig,
    cfgs: &MethodConfigs,
    rl: &RlConfig,
    budgets: &Budgets,
    seed: u64,
) -> Result<ExperimentResult> {
    let mut errs = cfg.validate();
    errs.extend(cfgs.validate());
    errs.extend(rl.validate());
    if proxies.is_empty() && cfg.method != Method::NoTransfer {
        errs.push("at least one proxy task is required unless the method is no_transfer".into());
    }
    if source.horizon != target.horizon {
        errs.push(format!(
            "source.horizon ({}) and target.horizon ({}) must match",
            source.horizon, target.horizon
        ));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let solved = solve_proxies(source, target, proxies, rl, budgets.proxy_iterations, seed)?;
    let refs: Vec<&ProxySolution> = solved.iter().collect();
    let (pairs, alignment) = if refs.is_empty() {
        (
            PairSet {
                entries: Vec::new(),
                provenance: crate::alignment::Provenance::TimeAligned,
            },
            None,
        )
    } else {
        build_pairs(&refs, mode, cfgs, seed).map_err(|e| e.in_stage("alignment"))?
    };
    let fitted = if cfg.method == Method::NoTransfer {
        None
    } else {
        fit_method(cfg.method, &pairs, alignment.as_ref(), cfgs, seed)
            .map_err(|e| e.in_stage("fit"))?
    };
    let mut source_task = source.clone();
    source_task.reward_mode = RewardMode::Shaped;
    let source_solution = solve_task(
        &source_task,
        rl,
        budgets.source_iterations,
        seed::derive(seed, &["source"], &[]),
    )
    .map_err(|e| e.in_stage("source"))?;
    let mut target_task = target.clone();
    target_task.reward_mode = RewardMode::Sparse;
    let run = transfer_rl(
        &target_task,
        &source_solution,
        fitted.as_ref(),
        cfg,
        rl,
        budgets.target_iterations,
        seed,
    )
    .map_err(|e| e.in_stage("target"))?;
    Ok(ExperimentResult {
        proxies: solved,
        pairs,
        alignment,
        source: source_solution,
        fitted,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DomainState;

    fn traj(cond: usize, tag: f64, success: bool) -> Trajectory {
        Trajectory {
            condition: cond,
            states: vec![
                DomainState {
                    agent: vec![tag],
                    env: vec![0.0; 4],
                };
                3
            ],
            actions: vec![vec![0.0]; 2],
            costs: vec![0.0; 3],
            success,
        }
    }

    fn solved(tags: &[(f64, bool)]) -> SolvedTask {
        SolvedTask {
            stats: Vec::new(),
            trajectories: tags
                .iter()
                .enumerate()
                .map(|(c, &(t, s))| traj(c, t, s))
                .collect(),
            samples: tags
                .iter()
                .enumerate()
                .map(|(c, &(t, _))| vec![traj(c, t + 0.5, false)])
                .collect(),
        }
    }

    fn tags(v: &[Trajectory]) -> Vec<f64> {
        v.iter().map(|t| t.states[0].agent[0]).collect()
    }

    #[test]
    fn selection_skips_conditions_failed_on_either_side() {
        let p = ProxySolution {
            task: Task::Reach,
            source: solved(&[(1.0, true), (2.0, true), (3.0, false)]),
            target: solved(&[(10.0, true), (20.0, false), (30.0, true)]),
        };
        let all = ProxySelection {
            samples: true,
            successful_only: false,
        };
        let (s, t) = proxy_trajectories(&[&p], all);
        assert_eq!(tags(&s), vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5]);
        assert_eq!(tags(&t), vec![10.0, 10.5, 20.0, 20.5, 30.0, 30.5]);
        let (s, t) = proxy_trajectories(
            &[&p],
            ProxySelection {
                samples: false,
                successful_only: true,
            },
        );
        assert_eq!(tags(&s), vec![1.0]);
        assert_eq!(tags(&t), vec![10.0]);
    }

    #[test]
    fn unsolved_proxies_leave_nothing_to_pair() {
        let p = ProxySolution {
            task: Task::Reach,
            source: solved(&[(1.0, false)]),
            target: solved(&[(10.0, true)]),
        };
        let err =
            build_pairs(&[&p], AlignmentMode::Time, &MethodConfigs::default(), 0).unwrap_err();
        assert!(matches!(err, Error::State(_)), "{err}");
    }
}
