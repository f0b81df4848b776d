//! Cross-morphology skill transfer through learned invariant feature spaces.
//!
//! Two agents with different bodies solve shared proxy tasks; the pairs of
//! states they visit train maps into a common feature space, and the source
//! agent's trajectories on a new task, expressed in that space, become a
//! dense tracking reward for the target agent.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod baselines;
pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod linalg;
pub mod seed;
pub mod trajopt;
pub mod transfer;

pub use error::{Error, Result};
pub use exec::Exec;
