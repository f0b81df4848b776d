//! Planar arm simulation: torque- and tendon-driven morphologies, episodic
//! tasks with shaped or sparse costs, rollouts and trajectory export.

mod domain;
mod morphology;
mod rollout;
mod task;
mod trajectory;

pub use domain::{
    ControlProblem, DomainSpec, DomainState, NormTerm, CONTACT_FLOOR, ENV_COLUMNS, GOAL_FLOOR,
};
pub use morphology::{forward_kinematics, tendon_observe, Actuation, MorphologySpec, TendonSpec};
pub use rollout::{rollout, success};
pub use task::{Condition, CostWeights, ObjectGeometry, RewardMode, Task};
pub use trajectory::Trajectory;
