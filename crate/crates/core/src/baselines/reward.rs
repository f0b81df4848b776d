use super::method::FittedMethod;
use crate::dynamics::{NormTerm, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::trajopt::AgentCostTerm;

/// `w_t * |phi(s_T) - ref_c(t)|`, where `ref_c(t)` is what the method
/// predicts from the source trajectory of condition `c` at step `t` and
/// `phi` maps the target agent state into the same space.
#[derive(Debug, Clone)]
pub struct TransferReward<'a> {
    method: &'a FittedMethod,
    references: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
    floor: f64,
}

/// Passes each source trajectory through the method to get the per-step
/// references. `weights[t]` scales step `t`; `floor` is the residual norm
/// below which curvature stops growing.
pub fn as_transfer_reward<'a>(
    method: &'a FittedMethod,
    source: &[Trajectory],
    weights: Vec<f64>,
    floor: f64,
) -> Result<TransferReward<'a>> {
    if source.is_empty() {
        return Err(Error::arg("need at least one source trajectory"));
    }
    if !(floor > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::arg(
            "transfer weights must be finite and non-negative, floor positive",
        ));
    }
    let references = source
        .iter()
        .map(|tr| {
            if tr.states.len() != weights.len() {
                return Err(Error::arg(format!(
                    "source horizon {} does not match {} weights",
                    tr.horizon(),
                    weights.len()
                )));
            }
            tr.states
                .iter()
                .map(|s| method.reference(&s.agent))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferReward {
        method,
        references,
        weights,
        floor,
    })
}

impl TransferReward<'_> {
    pub fn references(&self) -> &[Vec<Vec<f64>>] {
        &self.references
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn residual(&self, cond: usize, t: usize, agent: &[f64]) -> Vec<f64> {
        let phi = self
            .method
            .target_features(agent)
            .expect("target state dimension matches the fitted method");
        phi.iter()
            .zip(&self.references[cond][t])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// The term at every step of a target trajectory.
    pub fn per_step(&self, traj: &Trajectory) -> Vec<f64> {
        traj.states
            .iter()
            .enumerate()
            .map(|(t, s)| self.cost(traj.condition, t, &s.agent))
            .collect()
    }
}

impl AgentCostTerm for TransferReward<'_> {
    fn cost(&self, cond: usize, t: usize, agent: &[f64]) -> f64 {
        let w = self.weights[t];
        if w == 0.0 {
            return 0.0;
        }
        let phi = self
            .method
            .target_features(agent)
            .expect("target state dimension matches the fitted method");
        w * dist(&phi, &self.references[cond][t])
    }

    fn distance_terms(&self, cond: usize, t: usize, agent: &[f64]) -> Vec<NormTerm> {
        let w = self.weights[t];
        if w == 0.0 {
            return Vec::new();
        }
        vec![NormTerm {
            weight: w,
            residual: self.residual(cond, t, agent),
            floor: self.floor,
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::random_projection;
    use crate::dynamics::DomainState;

    fn traj(cond: usize, states: Vec<Vec<f64>>) -> Trajectory {
        let n = states.len();
        Trajectory {
            condition: cond,
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

    fn line(n: usize, d: usize, k: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| (0..d).map(|i| k * (t + i) as f64).collect())
            .collect()
    }

    #[test]
    fn zero_at_the_prediction_and_linear_in_weight() {
        let mut shared = random_projection(3, 3, 2, 1).unwrap();
        shared.target = shared.source.clone();
        let m = FittedMethod::RandomProjection(shared);
        let src = traj(0, line(5, 3, 0.1));
        let r1 = as_transfer_reward(&m, std::slice::from_ref(&src), vec![1.0; 5], 1e-3).unwrap();
        let r2 = as_transfer_reward(&m, std::slice::from_ref(&src), vec![2.0; 5], 1e-3).unwrap();
        for (t, s) in src.states.iter().enumerate() {
            assert_eq!(r1.cost(0, t, &s.agent), 0.0);
        }
        let other = traj(0, line(5, 3, 0.3));
        for (a, b) in r1.per_step(&other).iter().zip(r2.per_step(&other)) {
            assert!(a > &0.0);
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn terms_recompute_from_exported_states() {
        let m = FittedMethod::RandomProjection(random_projection(3, 4, 2, 9).unwrap());
        let src = traj(0, line(6, 3, 0.2));
        let tgt = traj(0, line(6, 4, -0.1));
        let weights: Vec<f64> = (0..6).map(|t| 1.0 - t as f64 / 6.0).collect();
        let r = as_transfer_reward(&m, std::slice::from_ref(&src), weights.clone(), 1e-3).unwrap();
        let cols = |d: usize| (0..d).map(|i| format!("q{i}")).collect::<Vec<_>>();
        let env = ["obj_x", "obj_y", "goal_x", "goal_y"].map(String::from);
        let s_back = Trajectory::from_csv(&src.to_csv(&cols(3), &env, &cols(1)), 3, 4, 1).unwrap();
        let t_back = Trajectory::from_csv(&tgt.to_csv(&cols(4), &env, &cols(1)), 4, 4, 1).unwrap();
        let FittedMethod::RandomProjection(p) = &m else {
            unreachable!()
        };
        for (t, got) in r.per_step(&tgt).iter().enumerate() {
            let a = p
                .project(crate::embedding::Side::Target, &t_back.states[t].agent)
                .unwrap();
            let b = p
                .project(crate::embedding::Side::Source, &s_back.states[t].agent)
                .unwrap();
            assert!((got - weights[t] * dist(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let m = FittedMethod::RandomProjection(random_projection(3, 3, 2, 1).unwrap());
        let src = traj(0, line(5, 3, 0.1));
        assert!(as_transfer_reward(&m, &[src], vec![1.0; 4], 1e-3).is_err());
    }
}
