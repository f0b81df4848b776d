//! Arm morphologies: link geometry, actuation and the tendon transmission.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actuation {
    Torque,
    Tendon,
}

/// Tendon transmission for a three-joint arm.
///
/// Tendon `i` shortens by `moment_arms[i][j] * phi(q_j)` for every joint `j` it
/// spans, where `phi(q) = q` for fixed levers. The variable-lever tendon uses
/// `phi(q) = q + lever_eps * sin(q)`, so its moment arm (the derivative of the
/// shortening) is `a0 * (1 + lever_eps * cos(q))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendonSpec {
    pub rest_lengths: Vec<f64>,
    /// Row per tendon, column per joint.
    pub moment_arms: Vec<Vec<f64>>,
    pub variable_lever_index: usize,
    pub lever_eps: f64,
}

impl TendonSpec {
    /// Shoulder+elbow tendon, elbow tendon, and a variable-lever wrist tendon.
    pub fn three_link_default() -> Self {
        TendonSpec {
            rest_lengths: vec![1.0, 0.8, 0.6],
            moment_arms: vec![
                vec![0.5, 0.3, 0.0],
                vec![0.0, 0.5, 0.0],
                vec![0.0, 0.0, 0.4],
            ],
            variable_lever_index: 2,
            lever_eps: 0.5,
        }
    }

    pub fn count(&self) -> usize {
        self.rest_lengths.len()
    }

    fn validate(&self, joints: usize) -> Result<()> {
        if self.count() != 3 || joints != 3 {
            return Err(Error::arg(
                "tendon arms have exactly 3 tendons and 3 joints",
            ));
        }
        if self.moment_arms.len() != 3 || self.moment_arms.iter().any(|r| r.len() != joints) {
            return Err(Error::arg("moment_arms must be 3x3"));
        }
        if self.variable_lever_index >= 3 {
            return Err(Error::arg("variable_lever_index out of range"));
        }
        if !(0.0..1.0).contains(&self.lever_eps) {
            return Err(Error::arg("lever_eps must lie in [0, 1)"));
        }
        if self.moment_arms[0][0] == 0.0 || self.moment_arms[0][1] == 0.0 {
            return Err(Error::arg("the first tendon must span joints 1 and 2"));
        }
        if self.arm_matrix().determinant().abs() < 1e-9 {
            return Err(Error::arg("moment arm matrix must be invertible"));
        }
        Ok(())
    }

    fn arm_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| self.moment_arms[i][j])
    }

    fn lever(&self, tendon: usize, q: f64) -> (f64, f64) {
        if tendon == self.variable_lever_index {
            (q + self.lever_eps * q.sin(), 1.0 + self.lever_eps * q.cos())
        } else {
            (q, 1.0)
        }
    }

    pub fn lengths(&self, angles: &[f64]) -> Vec<f64> {
        (0..3)
            .map(|i| {
                let shortening: f64 = (0..3)
                    .map(|j| self.moment_arms[i][j] * self.lever(i, angles[j]).0)
                    .sum();
                self.rest_lengths[i] - shortening
            })
            .collect()
    }

    /// Moment-arm Jacobian `J = -dL/dq`.
    pub fn jacobian(&self, angles: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| {
            self.moment_arms[i][j] * self.lever(i, angles[j]).1
        })
    }

    /// Recovers joint angles and velocities from tendon lengths and velocities.
    pub fn invert(&self, lengths: &[f64], length_vels: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let target = DVector::from_column_slice(lengths);
        let rest = DVector::from_column_slice(&self.rest_lengths);
        let arms = self.arm_matrix();
        let lu = arms.clone().lu();
        let mut q = lu
            .solve(&(&rest - &target))
            .ok_or_else(|| Error::numerical("singular moment arm matrix"))?;
        for _ in 0..60 {
            let residual = DVector::from_vec(self.lengths(q.as_slice())) - &target;
            if residual.amax() < 1e-14 {
                break;
            }
            let jac = self.jacobian(q.as_slice());
            let dq = jac
                .lu()
                .solve(&residual)
                .ok_or_else(|| Error::numerical("singular tendon Jacobian"))?;
            // L(q + dq) ~ L(q) - J dq, so stepping by +J^-1 r removes the residual.
            q += dq;
        }
        let jac = self.jacobian(q.as_slice());
        let qdot = jac
            .lu()
            .solve(&(-DVector::from_column_slice(length_vels)))
            .ok_or_else(|| Error::numerical("singular tendon Jacobian"))?;
        Ok((q.as_slice().to_vec(), qdot.as_slice().to_vec()))
    }
}

/// Maps joint angles and velocities to tendon lengths and velocities.
pub fn tendon_observe(
    angles: &[f64],
    vels: &[f64],
    spec: &TendonSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if angles.len() != 3 || vels.len() != 3 {
        return Err(Error::arg("tendon_observe expects a 3-joint configuration"));
    }
    let lengths = spec.lengths(angles);
    let jac = spec.jacobian(angles);
    let v = -(jac * DVector::from_column_slice(vels));
    Ok((lengths, v.as_slice().to_vec()))
}

/// Joint positions of a planar chain rooted at the origin, ending with the end-effector.
pub fn forward_kinematics(angles: &[f64], link_lengths: &[f64]) -> Result<Vec<[f64; 2]>> {
    if angles.len() != link_lengths.len() {
        return Err(Error::arg(format!(
            "{} angles for {} links",
            angles.len(),
            link_lengths.len()
        )));
    }
    if link_lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::arg("link lengths must be positive"));
    }
    Ok(chain(angles, link_lengths))
}

fn chain(angles: &[f64], link_lengths: &[f64]) -> Vec<[f64; 2]> {
    let mut points = Vec::with_capacity(angles.len() + 1);
    let (mut x, mut y, mut theta) = (0.0, 0.0, 0.0);
    points.push([x, y]);
    for (q, l) in angles.iter().zip(link_lengths) {
        theta += q;
        x += l * theta.cos();
        y += l * theta.sin();
        points.push([x, y]);
    }
    points
}

pub(crate) fn end_effector(angles: &[f64], link_lengths: &[f64]) -> [f64; 2] {
    *chain(angles, link_lengths).last().expect("non-empty chain")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologySpec {
    pub actuation: Actuation,
    pub link_lengths: Vec<f64>,
    /// 1/s
    pub joint_damping: f64,
    pub inertia_scale: f64,
    /// Symmetric bound applied to every action component.
    pub action_limit: f64,
    /// Joint configuration every episode starts from (at rest).
    pub home_angles: Vec<f64>,
    pub tendon_spec: Option<TendonSpec>,
}

impl MorphologySpec {
    pub fn three_link() -> Self {
        MorphologySpec {
            actuation: Actuation::Torque,
            link_lengths: vec![0.4, 0.4, 0.3],
            joint_damping: 2.0,
            inertia_scale: 1.0,
            action_limit: 4.0,
            home_angles: vec![-0.6, 1.6, 1.2],
            tendon_spec: None,
        }
    }

    pub fn four_link() -> Self {
        MorphologySpec {
            actuation: Actuation::Torque,
            link_lengths: vec![0.3, 0.3, 0.3, 0.2],
            joint_damping: 2.0,
            inertia_scale: 1.0,
            action_limit: 4.0,
            home_angles: vec![-0.7, 1.1, 1.0, 0.8],
            tendon_spec: None,
        }
    }

    pub fn tendon_three_link() -> Self {
        MorphologySpec {
            actuation: Actuation::Tendon,
            link_lengths: vec![0.4, 0.4, 0.3],
            joint_damping: 2.0,
            inertia_scale: 1.0,
            action_limit: 8.0,
            home_angles: vec![-0.6, 1.6, 1.2],
            tendon_spec: Some(TendonSpec::three_link_default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.link_lengths.len();
        if n < 2 {
            return Err(Error::arg("at least two links are required"));
        }
        if self
            .link_lengths
            .iter()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return Err(Error::arg("link lengths must be positive and finite"));
        }
        if self.home_angles.len() != n {
            return Err(Error::arg("home_angles length must equal the link count"));
        }
        if !(self.joint_damping >= 0.0) || !(self.inertia_scale > 0.0) || !(self.action_limit > 0.0)
        {
            return Err(Error::arg(
                "damping must be >= 0, inertia_scale and action_limit > 0",
            ));
        }
        match (self.actuation, &self.tendon_spec) {
            (Actuation::Torque, None) => Ok(()),
            (Actuation::Tendon, Some(t)) => t.validate(n),
            _ => Err(Error::arg(
                "tendon_spec must be present iff actuation is tendon",
            )),
        }
    }

    pub fn joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn action_dim(&self) -> usize {
        match &self.tendon_spec {
            Some(t) => t.count(),
            None => self.joints(),
        }
    }

    pub fn agent_dim(&self) -> usize {
        match &self.tendon_spec {
            Some(t) => 2 * t.count(),
            None => 2 * self.joints(),
        }
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn agent_columns(&self) -> Vec<String> {
        let (pos, vel, k) = match &self.tendon_spec {
            Some(t) => ("len", "dlen", t.count()),
            None => ("q", "dq", self.joints()),
        };
        (1..=k)
            .map(|i| format!("{pos}{i}"))
            .chain((1..=k).map(|i| format!("{vel}{i}")))
            .collect()
    }

    pub fn action_columns(&self) -> Vec<String> {
        let prefix = if self.tendon_spec.is_some() {
            "tension"
        } else {
            "torque"
        };
        (1..=self.action_dim())
            .map(|i| format!("{prefix}{i}"))
            .collect()
    }

    /// Joint angles and velocities underlying an agent state.
    pub fn joint_state(&self, agent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if agent.len() != self.agent_dim() {
            return Err(Error::arg(format!(
                "agent state has {} entries, expected {}",
                agent.len(),
                self.agent_dim()
            )));
        }
        match &self.tendon_spec {
            None => {
                let n = self.joints();
                Ok((agent[..n].to_vec(), agent[n..].to_vec()))
            }
            Some(t) => t.invert(&agent[..3], &agent[3..]),
        }
    }

    /// Agent state observed for the given joint configuration.
    pub fn agent_state(&self, angles: &[f64], vels: &[f64]) -> Result<Vec<f64>> {
        match &self.tendon_spec {
            None => Ok(angles.iter().chain(vels).copied().collect()),
            Some(t) => {
                let (l, dl) = tendon_observe(angles, vels, t)?;
                Ok(l.into_iter().chain(dl).collect())
            }
        }
    }

    /// Generalized joint torques produced by an action at the given angles.
    pub fn joint_torques(&self, angles: &[f64], action: &[f64]) -> Vec<f64> {
        match &self.tendon_spec {
            None => action.to_vec(),
            Some(t) => {
                let tau = t.jacobian(angles).transpose() * DVector::from_column_slice(action);
                tau.as_slice().to_vec()
            }
        }
    }

    pub fn end_effector(&self, agent: &[f64]) -> Result<[f64; 2]> {
        let (q, _) = self.joint_state(agent)?;
        Ok(end_effector(&q, &self.link_lengths))
    }

    pub fn home_state(&self) -> Result<Vec<f64>> {
        self.agent_state(&self.home_angles, &vec![0.0; self.joints()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_and_rotated_chains() {
        let ee = *forward_kinematics(&[0.0; 3], &[1.0; 3])
            .unwrap()
            .last()
            .unwrap();
        assert!((ee[0] - 3.0).abs() < 1e-15 && ee[1].abs() < 1e-15);
        let ee = *forward_kinematics(&[FRAC_PI_2, 0.0, 0.0], &[1.0; 3])
            .unwrap()
            .last()
            .unwrap();
        assert!(ee[0].abs() < 1e-15 && (ee[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn fk_matches_term_by_term_oracle() {
        let (q, l) = ([0.3, -0.2, 0.7], [0.5, 0.4, 0.3]);
        // Absolute link angles 0.3, 0.1, 0.8 written out by hand.
        let x = 0.5 * 0.3f64.cos() + 0.4 * 0.1f64.cos() + 0.3 * 0.8f64.cos();
        let y = 0.5 * 0.3f64.sin() + 0.4 * 0.1f64.sin() + 0.3 * 0.8f64.sin();
        let pts = forward_kinematics(&q, &l).unwrap();
        assert_eq!(pts.len(), 4);
        assert!((pts[3][0] - x).abs() < 1e-14 && (pts[3][1] - y).abs() < 1e-14);
    }

    #[test]
    fn fk_rejects_mismatch() {
        assert!(matches!(
            forward_kinematics(&[0.0; 2], &[1.0; 3]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn tendon_rest_configuration() {
        let t = TendonSpec::three_link_default();
        let (l, dl) = tendon_observe(&[0.0; 3], &[0.0; 3], &t).unwrap();
        assert_eq!(l, t.rest_lengths);
        assert!(dl.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_lever_lengths_are_linear() {
        let t = TendonSpec::three_link_default();
        let (l, _) = tendon_observe(&[0.1, 0.2, 0.0], &[0.0; 3], &t).unwrap();
        // Hand-expanded: L1 = 1.0 - 0.5*0.1 - 0.3*0.2, L2 = 0.8 - 0.5*0.2, L3 = 0.6.
        assert!((l[0] - 0.89).abs() < 1e-15);
        assert!((l[1] - 0.70).abs() < 1e-15);
        assert!((l[2] - 0.60).abs() < 1e-15);
    }

    #[test]
    fn tendon_velocity_matches_finite_difference() {
        let t = TendonSpec::three_link_default();
        let q = [0.4, -0.3, 0.9];
        let qd = [0.7, -1.1, 0.5];
        let (l0, v) = tendon_observe(&q, &qd, &t).unwrap();
        let dt = 1e-6;
        let q1: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + dt * b).collect();
        let qm: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a - dt * b).collect();
        let (lp, _) = tendon_observe(&q1, &qd, &t).unwrap();
        let (lm, _) = tendon_observe(&qm, &qd, &t).unwrap();
        for i in 0..3 {
            let fd = (lp[i] - lm[i]) / (2.0 * dt);
            let rel = (fd - v[i]).abs() / v[i].abs().max(1e-12);
            assert!(rel < 1e-6, "tendon {i}: fd {fd} vs {v:?} (l0 {l0:?})");
        }
    }

    #[test]
    fn tendon_map_is_invertible_on_a_grid() {
        let t = TendonSpec::three_link_default();
        let grid: Vec<f64> = (0..9).map(|k| -2.5 + 0.625 * k as f64).collect();
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let q = [a, b, c];
                    let qd = [0.3, -0.2, 0.1];
                    let (l, dl) = tendon_observe(&q, &qd, &t).unwrap();
                    let (qr, qdr) = t.invert(&l, &dl).unwrap();
                    for i in 0..3 {
                        assert!((qr[i] - q[i]).abs() < 1e-10, "{q:?} -> {qr:?}");
                        assert!((qdr[i] - qd[i]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn morphology_invariants() {
        MorphologySpec::three_link().validate().unwrap();
        MorphologySpec::four_link().validate().unwrap();
        MorphologySpec::tendon_three_link().validate().unwrap();
        let mut bad = MorphologySpec::three_link();
        bad.tendon_spec = Some(TendonSpec::three_link_default());
        assert!(bad.validate().is_err());
        let mut bad = MorphologySpec::tendon_three_link();
        bad.tendon_spec = None;
        assert!(bad.validate().is_err());
        let mut bad = MorphologySpec::three_link();
        bad.link_lengths[1] = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn comparable_reach() {
        let r3 = MorphologySpec::three_link().reach();
        let r4 = MorphologySpec::four_link().reach();
        assert!((r3 - r4).abs() < 1e-12);
    }
}
