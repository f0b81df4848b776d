//! Time-varying linear-Gaussian controllers improved by iLQG on locally
//! fitted linear dynamics.

mod fit;
mod ilqg;
mod policy;
mod quadratize;
mod rl;

pub use fit::{
    fit_dynamics, fit_dynamics_with_prior, fit_prior, DynamicsPrior, LocalDynamicsModel,
};
pub use ilqg::{ilqg_backward, lqr_backward, predicted_mean_deviation, BackwardPass};
pub use policy::LinearGaussianPolicy;
pub use quadratize::{
    fd_gradient, fd_hessian, quadratize_cost, quadratize_nominal, quadratize_step,
    radial_curvature, AgentCostTerm, Curvature, QuadraticCost, GRADIENT_STEP, HESSIAN_STEP,
    PSD_FLOOR,
};
pub use rl::{
    collect_samples, improve_condition, mean_rollouts, rl_iteration, run_rl, stats_csv,
    IterationStats, RlConfig, RlRun, RlState,
};
