//! Finite-difference quadratic expansions of the per-step cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlProblem, DomainState, NormTerm, Trajectory};
use crate::exec::Exec;
use crate::linalg::project_psd;

/// Extra per-step cost that depends only on the agent-specific state, such as
/// the feature-space tracking term used for transfer.
pub trait AgentCostTerm: Sync {
    fn cost(&self, cond: usize, t: usize, agent: &[f64]) -> f64;

    /// Euclidean-norm terms `w * |r|` inside [`AgentCostTerm::cost`].
    fn distance_terms(&self, _cond: usize, _t: usize, _agent: &[f64]) -> Vec<NormTerm> {
        Vec::new()
    }
}

/// How the per-step Hessian is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    /// Finite-difference Hessian, projected to PSD.
    Newton,
    /// Newton plus `w / |r| * J' n n' J` for every norm term `w |r|`, with
    /// `n = r / |r|`. The result bounds each norm term from above, so its
    /// minimizer sits at the target instead of beyond it.
    #[default]
    Majorized,
}

/// Second-order expansion of the cost about `nominal = (x, u)`:
/// `l(z) ~ value + grad'(z - nominal) + 1/2 (z - nominal)' hess (z - nominal)`.
/// The terminal step carries an all-zero action block.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub nominal: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub const GRADIENT_STEP: f64 = 1e-5;
pub const HESSIAN_STEP: f64 = 1e-3;
pub const PSD_FLOOR: f64 = 1e-6;

/// Central-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, z: &[f64], h: f64) -> DVector<f64> {
    let mut zz = z.to_vec();
    DVector::from_iterator(
        z.len(),
        (0..z.len()).map(|i| {
            zz[i] = z[i] + h;
            let fp = f(&zz);
            zz[i] = z[i] - h;
            let fm = f(&zz);
            zz[i] = z[i];
            (fp - fm) / (2.0 * h)
        }),
    )
}

/// Central-difference Hessian (symmetric by construction).
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, z: &[f64], h: f64) -> DMatrix<f64> {
    let n = z.len();
    let f0 = f(z);
    let mut zz = z.to_vec();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        zz[i] = z[i] + h;
        let fp = f(&zz);
        zz[i] = z[i] - h;
        let fm = f(&zz);
        zz[i] = z[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                zz[i] = z[i] + si * h;
                zz[j] = z[j] + sj * h;
                let v = f(&zz);
                zz[i] = z[i];
                zz[j] = z[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Expansion of one step's cost (task cost plus optional agent term).
pub fn quadratize_step<P: ControlProblem + ?Sized>(
    problem: &P,
    extra: Option<&dyn AgentCostTerm>,
    cond: usize,
    t: usize,
    x: &[f64],
    u: Option<&[f64]>,
) -> QuadraticCost {
    let n = x.len();
    let m = problem.action_dim();
    let agent_dim = problem.agent_dim();
    let mut z: Vec<f64> = x.to_vec();
    z.extend(u.map_or_else(|| vec![0.0; m], |u| u.to_vec()));
    let terminal = u.is_none();
    let task = |zz: &[f64]| {
        let s = DomainState::from_flat(&zz[..n], agent_dim);
        problem.cost(cond, &s, if terminal { None } else { Some(&zz[n..]) })
    };
    let dim = if terminal { n } else { n + m };
    let mut grad = DVector::zeros(n + m);
    let mut hess = DMatrix::zeros(n + m, n + m);
    grad.rows_mut(0, dim).copy_from(&fd_gradient(
        &|zz| task(&pad(zz, &z, dim)),
        &z[..dim],
        GRADIENT_STEP,
    ));
    hess.view_mut((0, 0), (dim, dim)).copy_from(&fd_hessian(
        &|zz| task(&pad(zz, &z, dim)),
        &z[..dim],
        HESSIAN_STEP,
    ));
    let mut value = task(&z);
    if let Some(term) = extra {
        let f = |a: &[f64]| term.cost(cond, t, a);
        let agent = &z[..agent_dim];
        value += f(agent);
        let g = fd_gradient(&f, agent, GRADIENT_STEP);
        let h = fd_hessian(&f, agent, HESSIAN_STEP);
        let mut gv = grad.rows_mut(0, agent_dim);
        gv += g;
        let mut hv = hess.view_mut((0, 0), (agent_dim, agent_dim));
        hv += h;
    }
    let mut projected = DMatrix::zeros(n + m, n + m);
    projected
        .view_mut((0, 0), (dim, dim))
        .copy_from(&project_psd(
            &hess.view((0, 0), (dim, dim)).into_owned(),
            PSD_FLOOR,
        ));
    QuadraticCost {
        nominal: DVector::from_vec(z),
        value,
        grad,
        hess: projected,
    }
}

/// Sum of `w / |r| * (J' n)(n' J)` over the terms returned by `terms`,
/// with `J` the central-difference Jacobian of `r` at `x`. Below a term's
/// floor the isotropic `w / floor * J'J` is used instead.
pub fn radial_curvature(terms: &dyn Fn(&[f64]) -> Vec<NormTerm>, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let base = terms(x);
    let mut out = DMatrix::zeros(n, n);
    if base.is_empty() {
        return out;
    }
    let mut jac: Vec<DMatrix<f64>> = base
        .iter()
        .map(|k| DMatrix::zeros(k.residual.len(), n))
        .collect();
    let mut z = x.to_vec();
    for i in 0..n {
        z[i] = x[i] + GRADIENT_STEP;
        let plus = terms(&z);
        z[i] = x[i] - GRADIENT_STEP;
        let minus = terms(&z);
        z[i] = x[i];
        for (k, j) in jac.iter_mut().enumerate() {
            for (d, (a, b)) in plus[k].residual.iter().zip(&minus[k].residual).enumerate() {
                j[(d, i)] = (a - b) / (2.0 * GRADIENT_STEP);
            }
        }
    }
    for (term, j) in base.iter().zip(&jac) {
        let r = &term.residual;
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < term.floor {
            out += j.transpose() * j * (term.weight / term.floor);
            continue;
        }
        let dir = DVector::from_iterator(r.len(), r.iter().map(|v| v / norm));
        let row = j.transpose() * dir;
        out += &row * row.transpose() * (term.weight / norm);
    }
    out
}

fn pad(head: &[f64], full: &[f64], dim: usize) -> Vec<f64> {
    let mut v = full.to_vec();
    v[..dim].copy_from_slice(head);
    v
}

/// Expansions about a nominal state/action sequence (`horizon + 1` states).
pub fn quadratize_nominal<P: ControlProblem + ?Sized>(
    problem: &P,
    extra: Option<&dyn AgentCostTerm>,
    cond: usize,
    states: &[Vec<f64>],
    actions: &[Vec<f64>],
    curvature: Curvature,
    exec: Exec,
) -> Vec<QuadraticCost> {
    let horizon = actions.len();
    exec.map(horizon + 1, |t| {
        let u = actions.get(t).map(|a| a.as_slice());
        let mut q = quadratize_step(problem, extra, cond, t, &states[t], u);
        if curvature == Curvature::Majorized {
            let agent_dim = problem.agent_dim();
            let terms = |x: &[f64]| {
                let mut v = problem.distance_terms(cond, &DomainState::from_flat(x, agent_dim));
                if let Some(e) = extra {
                    v.extend(e.distance_terms(cond, t, &x[..agent_dim]));
                }
                v
            };
            let n = states[t].len();
            let mut block = q.hess.view_mut((0, 0), (n, n));
            block += radial_curvature(&terms, &states[t]);
        }
        q
    })
}

/// Expansion of the task cost along a trajectory.
pub fn quadratize_cost<P: ControlProblem + ?Sized>(
    problem: &P,
    nominal: &Trajectory,
) -> Vec<QuadraticCost> {
    let states: Vec<Vec<f64>> = nominal.states.iter().map(|s| s.flat()).collect();
    quadratize_nominal(
        problem,
        None,
        nominal.condition,
        &states,
        &nominal.actions,
        Curvature::Newton,
        Exec::default(),
    )
}
