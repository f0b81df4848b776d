//! Sample, fit, quadratize, improve: one iteration of trajectory-centric RL
//! per condition, plus a driver loop and the iteration-stats CSV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fit::{fit_dynamics_with_prior, fit_prior};
use super::ilqg::ilqg_backward;
use super::policy::LinearGaussianPolicy;
use super::quadratize::{quadratize_nominal, AgentCostTerm, Curvature};
use crate::dynamics::{rollout, ControlProblem, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::project_psd;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub samples_per_condition: usize,
    /// Starting bound on the RMS change of the mean action (action units).
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub dynamics_regularizer: f64,
    /// Pseudo-sample weight of the pooled affine prior; 0 disables it.
    pub prior_strength: f64,
    pub initial_variance: f64,
    /// Lower bound on every eigenvalue of the controller covariance after an
    /// update; 0 lets exploration shrink freely.
    pub min_variance: f64,
    /// Discard a controller whose samples did worse and retry from the last
    /// accepted one with the halved step.
    pub reject_worse: bool,
    pub curvature: Curvature,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            samples_per_condition: 5,
            initial_step: 1.0,
            max_step: 8.0,
            min_step: 1e-3,
            dynamics_regularizer: 1e-6,
            prior_strength: 5.0,
            initial_variance: 0.1,
            min_variance: 0.0,
            reject_worse: true,
            curvature: Curvature::Majorized,
            exec: Exec::default(),
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.samples_per_condition < 2 {
            errs.push("samples_per_condition must be at least 2".to_string());
        }
        if !(self.min_step > 0.0
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step)
        {
            errs.push(
                "step sizes must satisfy 0 < min_step <= initial_step <= max_step".to_string(),
            );
        }
        if !(self.dynamics_regularizer >= 0.0) {
            errs.push("dynamics_regularizer must be non-negative".to_string());
        }
        if !(self.prior_strength >= 0.0) {
            errs.push("prior_strength must be non-negative".to_string());
        }
        if !(self.initial_variance > 0.0) {
            errs.push("initial_variance must be positive".to_string());
        }
        if !(self.min_variance >= 0.0) || self.min_variance > self.initial_variance {
            errs.push("min_variance must be in [0, initial_variance]".to_string());
        }
        errs
    }
}

/// Learner state carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct RlState {
    pub policies: Vec<LinearGaussianPolicy>,
    pub step_sizes: Vec<f64>,
    /// Mean sample objective of the previous iteration, per condition.
    pub prev_costs: Vec<Option<f64>>,
    /// Last accepted controller and its samples.
    pub accepted: Vec<LinearGaussianPolicy>,
    pub history: Vec<Vec<Trajectory>>,
}

impl RlState {
    pub fn initial<P: ControlProblem + ?Sized>(problem: &P, cfg: &RlConfig) -> Self {
        let k = problem.condition_count();
        let policy = LinearGaussianPolicy::initial(
            problem.horizon(),
            problem.state_dim(),
            problem.action_dim(),
            cfg.initial_variance,
        );
        RlState {
            accepted: vec![policy.clone(); k],
            policies: vec![policy; k],
            step_sizes: vec![cfg.initial_step; k],
            prev_costs: vec![None; k],
            history: vec![Vec::new(); k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iter: usize,
    /// Mean task cost (without any extra term) of this iteration's samples.
    pub mean_cost: f64,
    pub success_rate: f64,
    /// Mean step bound across conditions used for the update.
    pub step_size: f64,
}

/// Samples every condition with the current policies.
pub fn collect_samples<P: ControlProblem + ?Sized>(
    problem: &P,
    policies: &[LinearGaussianPolicy],
    samples: usize,
    seed: u64,
    iteration: usize,
    exec: Exec,
) -> Result<Vec<Vec<Trajectory>>> {
    let k = problem.condition_count();
    let flat = exec.try_map(k * samples, |i| {
        let (c, s) = (i / samples, i % samples);
        let sd = seed::derive(seed, &["rollout"], &[c as u64, iteration as u64, s as u64]);
        rollout(problem, &policies[c], c, sd)
    })?;
    let mut it = flat.into_iter();
    Ok((0..k)
        .map(|_| it.by_ref().take(samples).collect())
        .collect())
}

/// Noise-free rollouts of the policy means, one per condition.
pub fn mean_rollouts<P: ControlProblem + ?Sized>(
    problem: &P,
    policies: &[LinearGaussianPolicy],
    exec: Exec,
) -> Result<Vec<Trajectory>> {
    exec.try_map(policies.len(), |c| {
        rollout(problem, &policies[c].deterministic(), c, 0)
    })
}

fn objective(traj: &Trajectory, extra: Option<&dyn AgentCostTerm>) -> f64 {
    let mut total = traj.total_cost();
    if let Some(term) = extra {
        total += traj
            .states
            .iter()
            .enumerate()
            .map(|(t, s)| term.cost(traj.condition, t, &s.agent))
            .sum::<f64>();
    }
    total
}

fn mean_nominal(samples: &[Trajectory]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = samples.len() as f64;
    let mean = |rows: Vec<Vec<f64>>, acc: &mut Vec<Vec<f64>>| {
        if acc.is_empty() {
            *acc = vec![vec![0.0; rows[0].len()]; rows.len()];
        }
        for (a, r) in acc.iter_mut().zip(rows) {
            for (ai, ri) in a.iter_mut().zip(r) {
                *ai += ri / n;
            }
        }
    };
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for s in samples {
        mean(s.states.iter().map(|x| x.flat()).collect(), &mut xs);
        mean(s.actions.clone(), &mut us);
    }
    (xs, us)
}

/// Fits, quadratizes and improves one condition's policy from its samples.
/// Returns the new policy and the step bound that was used.
pub fn improve_condition<P: ControlProblem + ?Sized>(
    problem: &P,
    extra: Option<&dyn AgentCostTerm>,
    cond: usize,
    policy: &LinearGaussianPolicy,
    samples: &[Trajectory],
    history: &[Trajectory],
    step: f64,
    cfg: &RlConfig,
) -> Result<(LinearGaussianPolicy, f64)> {
    let prior = if cfg.prior_strength > 0.0 {
        let pooled: Vec<Trajectory> = samples.iter().chain(history).cloned().collect();
        Some(fit_prior(
            &pooled,
            cfg.dynamics_regularizer,
            cfg.prior_strength,
        )?)
    } else {
        None
    };
    let model = fit_dynamics_with_prior(samples, cfg.dynamics_regularizer, prior.as_ref())?;
    let (xs, us) = mean_nominal(samples);
    let quad = quadratize_nominal(problem, extra, cond, &xs, &us, cfg.curvature, cfg.exec);
    let mut step = step;
    let mut retries = 0;
    loop {
        match ilqg_backward(&model, &quad, policy, step) {
            Ok((mut p, _eta)) => {
                if cfg.min_variance > 0.0 {
                    for c in &mut p.covariances {
                        *c = project_psd(c, cfg.min_variance);
                    }
                }
                return Ok((p, step));
            }
            Err(e) if retries >= 3 => return Err(e),
            Err(e) => {
                log::debug!("condition {cond}: backward pass failed ({e}); shrinking step");
                retries += 1;
                step *= 0.5;
            }
        }
    }
}

/// One iteration over every condition: sample, adapt the step, improve.
pub fn rl_iteration<P: ControlProblem + ?Sized>(
    problem: &P,
    extra: Option<&dyn AgentCostTerm>,
    state: &RlState,
    cfg: &RlConfig,
    seed: u64,
    iteration: usize,
) -> Result<(RlState, IterationStats, Vec<Vec<Trajectory>>)> {
    let k = problem.condition_count();
    if state.policies.len() != k {
        return Err(Error::arg(
            "learner state does not match the condition count",
        ));
    }
    let spc = cfg.samples_per_condition;
    let dims = problem.state_dim() + problem.action_dim();
    if (spc as f64) < 2.0 * dims as f64 / problem.horizon() as f64 {
        log::warn!(
            "{spc} samples per condition is below the 2(n+m)/T heuristic for {dims} dimensions"
        );
    }
    let samples = collect_samples(problem, &state.policies, spc, seed, iteration, cfg.exec)?;

    let mut next = state.clone();
    let mut task_cost = 0.0;
    let mut successes = 0usize;
    // Per condition: (policy to improve, its samples, extra samples for the prior).
    let mut bases: Vec<(LinearGaussianPolicy, Vec<Trajectory>, Vec<Trajectory>)> =
        Vec::with_capacity(k);
    for (c, batch) in samples.iter().enumerate() {
        let obj = batch.iter().map(|t| objective(t, extra)).sum::<f64>() / spc as f64;
        task_cost += batch.iter().map(Trajectory::total_cost).sum::<f64>();
        successes += batch.iter().filter(|t| t.success).count();
        // The accepted batch is re-scored so a changing extra term compares
        // both batches under the same objective.
        let prev = state.prev_costs[c].map(|_| {
            state.history[c]
                .iter()
                .map(|t| objective(t, extra))
                .sum::<f64>()
                / state.history[c].len() as f64
        });
        let worse = prev.is_some_and(|prev| obj > prev);
        if state.prev_costs[c].is_some() {
            let s = if worse {
                state.step_sizes[c] * 0.5
            } else {
                state.step_sizes[c] * 2.0
            };
            next.step_sizes[c] = s.clamp(cfg.min_step, cfg.max_step);
        }
        if worse && cfg.reject_worse {
            bases.push((
                state.accepted[c].clone(),
                state.history[c].clone(),
                batch.clone(),
            ));
        } else {
            bases.push((
                state.policies[c].clone(),
                batch.clone(),
                state.history[c].clone(),
            ));
            next.prev_costs[c] = Some(obj);
            next.accepted[c] = state.policies[c].clone();
            next.history[c] = batch.clone();
        }
    }

    let updates = cfg.exec.try_map(k, |c| {
        let (policy, own, other) = &bases[c];
        improve_condition(
            problem,
            extra,
            c,
            policy,
            own,
            other,
            next.step_sizes[c],
            cfg,
        )
    })?;
    for (c, (policy, step)) in updates.into_iter().enumerate() {
        next.policies[c] = policy;
        next.step_sizes[c] = step;
    }
    let total = (k * spc) as f64;
    let stats = IterationStats {
        iter: iteration,
        mean_cost: task_cost / total,
        success_rate: successes as f64 / total,
        step_size: next.step_sizes.iter().sum::<f64>() / k as f64,
    };
    Ok((next, stats, samples))
}

/// Result of [`run_rl`].
#[derive(Debug, Clone)]
pub struct RlRun {
    pub state: RlState,
    pub stats: Vec<IterationStats>,
}

/// Runs `iterations` RL iterations from the initial controllers.
pub fn run_rl<P: ControlProblem + ?Sized>(
    problem: &P,
    extra: Option<&dyn AgentCostTerm>,
    cfg: &RlConfig,
    seed: u64,
    iterations: usize,
) -> Result<RlRun> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let mut state = RlState::initial(problem, cfg);
    let mut stats = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let (next, s, _) = rl_iteration(problem, extra, &state, cfg, seed, it)?;
        log::debug!(
            "iter {it}: cost {:.4} success {:.2} step {:.3}",
            s.mean_cost,
            s.success_rate,
            s.step_size
        );
        state = next;
        stats.push(s);
    }
    Ok(RlRun { state, stats })
}

pub fn stats_csv(stats: &[IterationStats]) -> String {
    let mut out = String::from("iter,mean_cost,success_rate,step_size\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.iter, s.mean_cost, s.success_rate, s.step_size
        );
    }
    out
}
