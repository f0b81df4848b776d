use rand_distr::{Distribution, StandardNormal};

use super::domain::ControlProblem;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{dvec, psd_sqrt};
use crate::seed;
use crate::trajopt::LinearGaussianPolicy;

/// Samples one episode with `u_t ~ N(K_t x_t + k_t, C_t)`, clamped to the action bounds.
pub fn rollout<P: ControlProblem + ?Sized>(
    problem: &P,
    policy: &LinearGaussianPolicy,
    cond: usize,
    seed: u64,
) -> Result<Trajectory> {
    let horizon = problem.horizon();
    if policy.horizon() != horizon {
        return Err(Error::arg(format!(
            "policy horizon {} does not match problem horizon {horizon}",
            policy.horizon()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut state = problem.initial_state(cond)?;
    let mut traj = Trajectory {
        condition: cond,
        states: Vec::with_capacity(horizon + 1),
        actions: Vec::with_capacity(horizon),
        costs: Vec::with_capacity(horizon + 1),
        success: false,
    };
    let m = problem.action_dim();
    for t in 0..horizon {
        let x = dvec(&state.flat());
        let noise: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut u = &policy.gains[t] * &x + &policy.biases[t];
        if policy.covariances[t].iter().any(|&c| c != 0.0) {
            u += psd_sqrt(&policy.covariances[t]) * dvec(&noise);
        }
        let mut action = u.as_slice().to_vec();
        problem.clamp_action(&mut action);
        let next = problem.step(cond, &state, &action)?;
        traj.costs.push(problem.cost(cond, &state, Some(&action)));
        traj.states.push(state);
        traj.actions.push(action);
        state = next;
    }
    traj.costs.push(problem.cost(cond, &state, None));
    traj.success = problem.is_success(cond, &state);
    traj.states.push(state);
    Ok(traj)
}

/// Success test on a finished trajectory.
pub fn success<P: ControlProblem + ?Sized>(traj: &Trajectory, problem: &P) -> bool {
    traj.states
        .last()
        .is_some_and(|s| problem.is_success(traj.condition, s))
}
