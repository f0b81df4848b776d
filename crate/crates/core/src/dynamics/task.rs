//! Episodic manipulation tasks and the quasi-static object model.
//!
//! Every task keeps the same four environment columns: the tracked object
//! position and the goal position (meters). Objects only move along their
//! permitted axis:
//! - button / peg: depressed (inserted) by the end-effector's penetration into
//!   the capture zone, springing back when the end-effector leaves;
//! - blocks: advanced along the axis by the projected end-effector
//!   displacement while the end-effector is inside the block footprint,
//!   never backwards;
//! - reach: the tracked object is the end-effector itself.

use serde::{Deserialize, Serialize};

use crate::linalg::dist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reach,
    BlockMove,
    PegInsert,
    ButtonPress,
    BlockPull,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Reach,
        Task::BlockMove,
        Task::PegInsert,
        Task::ButtonPress,
        Task::BlockPull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Reach => "reach",
            Task::BlockMove => "block_move",
            Task::PegInsert => "peg_insert",
            Task::ButtonPress => "button_press",
            Task::BlockPull => "block_pull",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Four object/goal placements per task.
    pub fn default_conditions(self) -> Vec<Condition> {
        match self {
            Task::Reach => [(0.9, -0.4), (0.85, -0.1), (0.9, 0.2), (0.65, 0.5)]
                .iter()
                .map(|&(r, a)| Condition {
                    object: [0.0, 0.0],
                    goal: polar(r, a),
                    geometry: None,
                })
                .collect(),
            Task::BlockMove => [-0.4, -0.1, 0.2, 0.5]
                .iter()
                .map(|&a| block(polar(0.55, a), radial(a), 0.2))
                .collect(),
            Task::BlockPull => [-0.35, -0.1, 0.15, 0.4]
                .iter()
                .map(|&a| block(polar(0.8, a), scale(radial(a), -1.0), 0.2))
                .collect(),
            Task::ButtonPress => [-0.5, -0.25, 0.0, 0.25]
                .iter()
                .map(|&a| plunger(polar(0.8, a), radial(a), 0.15, 0.05, 0.1))
                .collect(),
            Task::PegInsert => [-0.7, -0.3, 0.1, 0.9]
                .iter()
                .map(|&a| plunger(polar(0.5, a), radial(a + 0.6), 0.15, 0.04, 0.12))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Shaped,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// end-effector to object
    pub approach: f64,
    /// object to goal
    pub goal: f64,
    /// squared action norm
    pub action: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            approach: 1.0,
            goal: 5.0,
            action: 1e-3,
        }
    }
}

/// Static geometry of the manipulated object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectGeometry {
    /// Rest position of the object (button surface, slot mouth, block center).
    pub anchor: [f64; 2],
    /// Unit direction the object may move along.
    pub axis: [f64; 2],
    /// Lateral half-width of the capture zone / footprint.
    pub half_width: f64,
    /// Axial half-length of a block footprint.
    pub size: f64,
    /// Maximum displacement along the axis.
    pub travel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    /// Initial object position; ignored for reach, where the object is the end-effector.
    pub object: [f64; 2],
    pub goal: [f64; 2],
    pub geometry: Option<ObjectGeometry>,
}

fn polar(r: f64, a: f64) -> [f64; 2] {
    [r * a.cos(), r * a.sin()]
}

fn radial(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

fn scale(v: [f64; 2], s: f64) -> [f64; 2] {
    [v[0] * s, v[1] * s]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn block(center: [f64; 2], axis: [f64; 2], goal_offset: f64) -> Condition {
    Condition {
        object: center,
        goal: add(center, scale(axis, goal_offset)),
        geometry: Some(ObjectGeometry {
            anchor: center,
            axis,
            half_width: 0.06,
            size: 0.05,
            travel: 0.3,
        }),
    }
}

fn plunger(
    anchor: [f64; 2],
    axis: [f64; 2],
    travel: f64,
    half_width: f64,
    goal_depth: f64,
) -> Condition {
    Condition {
        object: anchor,
        goal: add(anchor, scale(axis, goal_depth)),
        geometry: Some(ObjectGeometry {
            anchor,
            axis,
            half_width,
            size: 0.0,
            travel,
        }),
    }
}

/// Object position after the end-effector moved from `ee_prev` to `ee_next`.
pub(crate) fn advance_object(
    task: Task,
    geometry: Option<&ObjectGeometry>,
    object: [f64; 2],
    ee_prev: [f64; 2],
    ee_next: [f64; 2],
) -> [f64; 2] {
    let Some(g) = geometry else {
        return ee_next;
    };
    let normal = [-g.axis[1], g.axis[0]];
    match task {
        Task::Reach => ee_next,
        Task::ButtonPress | Task::PegInsert => {
            let rel = sub(ee_next, g.anchor);
            let axial = dot(rel, g.axis);
            let lateral = dot(rel, normal).abs();
            let depth = if lateral < g.half_width && axial > 0.0 {
                axial.min(g.travel)
            } else {
                0.0
            };
            add(g.anchor, scale(g.axis, depth))
        }
        Task::BlockMove | Task::BlockPull => {
            let rel = sub(ee_prev, object);
            let in_contact =
                dot(rel, g.axis).abs() <= g.size && dot(rel, normal).abs() <= g.half_width;
            if !in_contact {
                return object;
            }
            let progress = dot(sub(object, g.anchor), g.axis);
            let push = dot(sub(ee_next, ee_prev), g.axis).max(0.0);
            let moved = push.min((g.travel - progress).max(0.0));
            add(object, scale(g.axis, moved))
        }
    }
}

/// Per-step task cost; `ee` is the end-effector, `env` = (object, goal).
pub(crate) fn task_cost(
    task: Task,
    mode: RewardMode,
    w: &CostWeights,
    ee: [f64; 2],
    env: &[f64],
    action: Option<&[f64]>,
) -> f64 {
    let effort = action.map_or(0.0, |a| a.iter().map(|x| x * x).sum::<f64>());
    let object = &env[0..2];
    let goal = &env[2..4];
    let position = match (task, mode) {
        (Task::Reach, _) => w.goal * dist(&ee, goal),
        (_, RewardMode::Shaped) => w.approach * dist(&ee, object) + w.goal * dist(object, goal),
        (_, RewardMode::Sparse) => w.goal * dist(object, goal),
    };
    position + w.action * effort
}
