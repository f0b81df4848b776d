//! Target-domain learning shaped by a source solution mapped through a
//! learned correspondence.

mod config;
mod pipeline;

pub use config::{alpha_at, Decay, TransferConfig};
pub use pipeline::{
    build_pairs, feature_scale, fit_method, proxy_trajectories, run_transfer, solve_proxies,
    solve_task, transfer_cost, transfer_rl, AlignmentMode, Budgets, CurvePoint, ExperimentResult,
    Fitted, MethodConfigs, ProxySelection, ProxySolution, SolvedTask, SourceSolution, TransferRun,
};
