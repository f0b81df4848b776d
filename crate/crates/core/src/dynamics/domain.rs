use serde::{Deserialize, Serialize};

use super::morphology::MorphologySpec;
use super::task::{advance_object, task_cost, Condition, CostWeights, RewardMode, Task};
use crate::error::{Error, Result};
use crate::linalg::dist;

/// Full state split into the agent-specific and task-specific parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainState {
    pub agent: Vec<f64>,
    pub env: Vec<f64>,
}

impl DomainState {
    pub fn flat(&self) -> Vec<f64> {
        self.agent.iter().chain(&self.env).copied().collect()
    }

    pub fn from_flat(x: &[f64], agent_dim: usize) -> Self {
        DomainState {
            agent: x[..agent_dim].to_vec(),
            env: x[agent_dim..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.agent.iter().chain(&self.env).all(|v| v.is_finite())
    }
}

/// One `weight * |residual|` term of a cost. `floor` is the residual length
/// below which curvature stops growing.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTerm {
    pub weight: f64,
    pub residual: Vec<f64>,
    pub floor: f64,
}

/// Curvature floor of end-effector-to-object terms: wide enough that an
/// end-effector resting on an object can still push into it.
pub const CONTACT_FLOOR: f64 = 0.05;
/// Curvature floor of terms measured against a goal.
pub const GOAL_FLOOR: f64 = 1e-3;

/// An episodic control problem with per-condition initial states.
///
/// [`DomainSpec`] is the main implementor; tests plug in analytic systems.
pub trait ControlProblem: Sync {
    fn horizon(&self) -> usize;
    fn condition_count(&self) -> usize;
    fn agent_dim(&self) -> usize;
    fn env_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn initial_state(&self, cond: usize) -> Result<DomainState>;
    fn clamp_action(&self, action: &mut [f64]);
    /// Advances one step; the action is clamped first.
    fn step(&self, cond: usize, state: &DomainState, action: &[f64]) -> Result<DomainState>;
    /// Per-step cost; `action == None` is the terminal cost.
    fn cost(&self, cond: usize, state: &DomainState, action: Option<&[f64]>) -> f64;
    fn is_success(&self, cond: usize, state: &DomainState) -> bool;

    /// Euclidean-norm terms `w * |r|` inside [`ControlProblem::cost`].
    /// Optimizers may use them to add curvature along `r`.
    fn distance_terms(&self, _cond: usize, _state: &DomainState) -> Vec<NormTerm> {
        Vec::new()
    }

    fn state_dim(&self) -> usize {
        self.agent_dim() + self.env_dim()
    }
}

/// An MDP: morphology, task, reward mode, time discretization and conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub morphology: MorphologySpec,
    pub task: Task,
    pub reward_mode: RewardMode,
    pub horizon: usize,
    /// seconds
    pub dt: f64,
    pub conditions: Vec<Condition>,
    pub weights: CostWeights,
    /// meters
    pub success_eps: f64,
}

pub const ENV_COLUMNS: [&str; 4] = ["obj_x", "obj_y", "goal_x", "goal_y"];

impl DomainSpec {
    pub fn new(morphology: MorphologySpec, task: Task, reward_mode: RewardMode) -> Self {
        DomainSpec {
            morphology,
            task,
            reward_mode,
            horizon: 100,
            dt: 0.05,
            conditions: task.default_conditions(),
            weights: CostWeights::default(),
            success_eps: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.morphology.validate()?;
        if self.horizon == 0 {
            return Err(Error::arg("horizon must be positive"));
        }
        if !(self.dt > 0.0) || self.dt * self.morphology.joint_damping > 1.0 {
            return Err(Error::arg(
                "dt must be positive with dt * joint_damping <= 1",
            ));
        }
        if self.conditions.is_empty() {
            return Err(Error::arg("at least one condition is required"));
        }
        let reach = self.morphology.reach();
        for (i, c) in self.conditions.iter().enumerate() {
            if dist(&c.goal, &[0.0, 0.0]) >= reach {
                return Err(Error::arg(format!(
                    "condition {i}: goal outside the workspace"
                )));
            }
            if self.task != Task::Reach && c.geometry.is_none() {
                return Err(Error::arg(format!(
                    "condition {i}: object geometry missing"
                )));
            }
        }
        Ok(())
    }

    pub fn env_columns(&self) -> Vec<String> {
        ENV_COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn check_action(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.morphology.action_dim() {
            return Err(Error::arg(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.morphology.action_dim()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::arg("non-finite action"));
        }
        Ok(())
    }

    /// End-effector position for an agent state.
    pub fn end_effector(&self, agent: &[f64]) -> Result<[f64; 2]> {
        self.morphology.end_effector(agent)
    }

    /// Distance that decides success: object to goal (end-effector to goal for reach).
    pub fn goal_distance(&self, state: &DomainState) -> f64 {
        if self.task == Task::Reach {
            match self.end_effector(&state.agent) {
                Ok(ee) => dist(&ee, &state.env[2..4]),
                Err(_) => f64::INFINITY,
            }
        } else {
            dist(&state.env[0..2], &state.env[2..4])
        }
    }
}

impl ControlProblem for DomainSpec {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn condition_count(&self) -> usize {
        self.conditions.len()
    }

    fn agent_dim(&self) -> usize {
        self.morphology.agent_dim()
    }

    fn env_dim(&self) -> usize {
        ENV_COLUMNS.len()
    }

    fn action_dim(&self) -> usize {
        self.morphology.action_dim()
    }

    fn initial_state(&self, cond: usize) -> Result<DomainState> {
        let c = self
            .conditions
            .get(cond)
            .ok_or_else(|| Error::arg(format!("no condition {cond}")))?;
        let agent = self.morphology.home_state()?;
        let object = if self.task == Task::Reach {
            self.end_effector(&agent)?
        } else {
            c.object
        };
        Ok(DomainState {
            agent,
            env: vec![object[0], object[1], c.goal[0], c.goal[1]],
        })
    }

    fn clamp_action(&self, action: &mut [f64]) {
        let lim = self.morphology.action_limit;
        for a in action {
            *a = a.clamp(-lim, lim);
        }
    }

    fn step(&self, cond: usize, state: &DomainState, action: &[f64]) -> Result<DomainState> {
        self.check_action(action)?;
        let c = self
            .conditions
            .get(cond)
            .ok_or_else(|| Error::arg(format!("no condition {cond}")))?;
        let mut u = action.to_vec();
        self.clamp_action(&mut u);
        let m = &self.morphology;
        let (q, qd) = m.joint_state(&state.agent)?;
        let tau = m.joint_torques(&q, &u);
        let qd_next: Vec<f64> = qd
            .iter()
            .zip(&tau)
            .map(|(v, t)| v + self.dt * (m.inertia_scale * t - m.joint_damping * v))
            .collect();
        let q_next: Vec<f64> = q
            .iter()
            .zip(&qd_next)
            .map(|(p, v)| p + self.dt * v)
            .collect();
        let ee_prev = super::morphology::end_effector(&q, &m.link_lengths);
        let ee_next = super::morphology::end_effector(&q_next, &m.link_lengths);
        let object = advance_object(
            self.task,
            c.geometry.as_ref(),
            [state.env[0], state.env[1]],
            ee_prev,
            ee_next,
        );
        let next = DomainState {
            agent: m.agent_state(&q_next, &qd_next)?,
            env: vec![object[0], object[1], state.env[2], state.env[3]],
        };
        if !next.is_finite() {
            return Err(Error::numerical("simulation produced a non-finite state"));
        }
        Ok(next)
    }

    fn cost(&self, _cond: usize, state: &DomainState, action: Option<&[f64]>) -> f64 {
        match self.end_effector(&state.agent) {
            Ok(ee) => task_cost(
                self.task,
                self.reward_mode,
                &self.weights,
                ee,
                &state.env,
                action,
            ),
            Err(_) => f64::INFINITY,
        }
    }

    fn is_success(&self, _cond: usize, state: &DomainState) -> bool {
        self.goal_distance(state) < self.success_eps
    }

    fn distance_terms(&self, _cond: usize, state: &DomainState) -> Vec<NormTerm> {
        let Ok(ee) = self.end_effector(&state.agent) else {
            return Vec::new();
        };
        let (obj, goal) = (&state.env[0..2], &state.env[2..4]);
        let term = |weight: f64, a: &[f64], b: &[f64], floor: f64| NormTerm {
            weight,
            residual: vec![a[0] - b[0], a[1] - b[1]],
            floor,
        };
        let w = &self.weights;
        match (self.task, self.reward_mode) {
            (Task::Reach, _) => vec![term(w.goal, &ee, goal, GOAL_FLOOR)],
            (_, RewardMode::Shaped) => vec![
                term(w.approach, &ee, obj, CONTACT_FLOOR),
                term(w.goal, obj, goal, GOAL_FLOOR),
            ],
            (_, RewardMode::Sparse) => vec![term(w.goal, obj, goal, GOAL_FLOOR)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::morphology::forward_kinematics;

    fn torque_spec() -> DomainSpec {
        DomainSpec::new(
            MorphologySpec::three_link(),
            Task::Reach,
            RewardMode::Shaped,
        )
    }

    #[test]
    fn shipped_specs_validate() {
        for task in Task::ALL {
            for m in [
                MorphologySpec::three_link(),
                MorphologySpec::four_link(),
                MorphologySpec::tendon_three_link(),
            ] {
                DomainSpec::new(m, task, RewardMode::Sparse)
                    .validate()
                    .unwrap();
            }
        }
    }

    #[test]
    fn zero_action_at_rest_is_a_fixed_point() {
        let spec = torque_spec();
        let s = spec.initial_state(0).unwrap();
        let next = spec.step(0, &s, &[0.0; 3]).unwrap();
        assert_eq!(next.agent, s.agent);
    }

    #[test]
    fn one_euler_step_closed_form() {
        let mut spec = torque_spec();
        spec.morphology.inertia_scale = 1.7;
        let s = spec.initial_state(0).unwrap();
        let next = spec.step(0, &s, &[1.0, 0.0, 0.0]).unwrap();
        let v = 1.7 * 1.0 * spec.dt;
        assert!((next.agent[3] - v).abs() < 1e-15);
        assert!((next.agent[0] - (s.agent[0] + spec.dt * v)).abs() < 1e-15);
    }

    #[test]
    fn constant_torque_matches_reference_integrator() {
        let spec = torque_spec();
        let m = &spec.morphology;
        let torque = [0.8, -0.5, 0.3];
        let mut s = spec.initial_state(1).unwrap();
        for _ in 0..10 {
            s = spec.step(1, &s, &torque).unwrap();
        }
        // Independent scalar integrator, one joint at a time.
        for j in 0..3 {
            let (mut q, mut v) = (m.home_angles[j], 0.0f64);
            for _ in 0..10 {
                let acc = m.inertia_scale * torque[j] - m.joint_damping * v;
                v += spec.dt * acc;
                q += spec.dt * v;
            }
            assert!((s.agent[j] - q).abs() < 1e-14);
            assert!((s.agent[3 + j] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn action_errors() {
        let spec = torque_spec();
        let s = spec.initial_state(0).unwrap();
        assert!(spec.step(0, &s, &[f64::NAN, 0.0, 0.0]).is_err());
        assert!(spec.step(0, &s, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn actions_are_clamped() {
        let spec = torque_spec();
        let s = spec.initial_state(0).unwrap();
        let a = spec.step(0, &s, &[100.0, 0.0, 0.0]).unwrap();
        let b = spec
            .step(0, &s, &[spec.morphology.action_limit, 0.0, 0.0])
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shaped_cost_recomposes_from_kinematics() {
        let spec = DomainSpec::new(
            MorphologySpec::four_link(),
            Task::BlockMove,
            RewardMode::Shaped,
        );
        let state = DomainState {
            agent: vec![0.2, -0.4, 0.9, 0.1, 0.5, -0.2, 0.0, 0.3],
            env: vec![0.45, 0.1, 0.7, 0.2],
        };
        let action = [0.5, -1.0, 0.25, 2.0];
        let ee = *forward_kinematics(&state.agent[..4], &spec.morphology.link_lengths)
            .unwrap()
            .last()
            .unwrap();
        let d1 = ((ee[0] - 0.45).powi(2) + (ee[1] - 0.1).powi(2)).sqrt();
        let d2 = ((0.45f64 - 0.7).powi(2) + (0.1f64 - 0.2).powi(2)).sqrt();
        let a2: f64 = action.iter().map(|a| a * a).sum();
        let expected = 1.0 * d1 + 5.0 * d2 + 1e-3 * a2;
        assert!((spec.cost(0, &state, Some(&action)) - expected).abs() < 1e-14);
    }

    #[test]
    fn success_threshold() {
        let spec = DomainSpec::new(
            MorphologySpec::three_link(),
            Task::ButtonPress,
            RewardMode::Sparse,
        );
        let mut s = spec.initial_state(0).unwrap();
        s.env[0] = s.env[2];
        s.env[1] = s.env[3];
        assert!(spec.is_success(0, &s));
        s.env[0] += 10.0 * spec.success_eps;
        assert!(!spec.is_success(0, &s));
    }

    #[test]
    fn tendon_arm_steps_in_joint_space() {
        let spec = DomainSpec::new(
            MorphologySpec::tendon_three_link(),
            Task::Reach,
            RewardMode::Shaped,
        );
        let s = spec.initial_state(0).unwrap();
        let next = spec.step(0, &s, &[1.0, -0.5, 0.3]).unwrap();
        let (q, qd) = spec.morphology.joint_state(&next.agent).unwrap();
        let tau = spec
            .morphology
            .joint_torques(&spec.morphology.home_angles, &[1.0, -0.5, 0.3]);
        for j in 0..3 {
            let v = spec.dt * tau[j];
            assert!((qd[j] - v).abs() < 1e-10);
            assert!((q[j] - (spec.morphology.home_angles[j] + spec.dt * v)).abs() < 1e-10);
        }
    }
}
