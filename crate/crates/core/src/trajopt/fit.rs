//! Time-varying linear-Gaussian dynamics fitted by per-timestep regression.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// `x_{t+1} ~ N(A_t x_t + B_t u_t + c_t, residual_cov_t)`.
#[derive(Debug, Clone)]
pub struct LocalDynamicsModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: Vec<DVector<f64>>,
    pub residual_cov: Vec<DMatrix<f64>>,
    pub x0_mean: DVector<f64>,
    pub x0_cov: DMatrix<f64>,
}

impl LocalDynamicsModel {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x0_mean.len()
    }

    pub fn action_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    pub fn predict(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a[t] * x + &self.b[t] * u + &self.c[t]
    }
}

/// Time-invariant affine model pooled over every step of every sample, used
/// as a conjugate prior for the per-step fits.
#[derive(Debug, Clone)]
pub struct DynamicsPrior {
    /// `state_dim x (state_dim + action_dim + 1)`
    weights: DMatrix<f64>,
    /// Mean outer product of the regressors.
    second_moment: DMatrix<f64>,
    /// Pseudo-sample count the prior is worth at every step.
    pub strength: f64,
}

fn regressor(x: &[f64], u: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        x.len() + u.len() + 1,
        x.iter().chain(u).copied().chain([1.0]),
    )
}

fn rows(trajs: &[Trajectory], t: usize) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    trajs
        .iter()
        .map(|tr| {
            (
                regressor(&tr.states[t].flat(), &tr.actions[t]),
                DVector::from_vec(tr.states[t + 1].flat()),
            )
        })
        .unzip()
}

fn check(trajs: &[Trajectory]) -> Result<usize> {
    if trajs.len() < 2 {
        return Err(Error::arg(
            "dynamics fitting needs at least two trajectories",
        ));
    }
    let h = trajs[0].horizon();
    if trajs
        .iter()
        .any(|t| t.horizon() != h || t.states.len() != h + 1)
    {
        return Err(Error::arg("trajectories must share one horizon"));
    }
    Ok(h)
}

/// Solves `(G + ridge) W^T = rhs` by Cholesky; the last (bias) regressor is not penalized.
fn solve(mut gram: DMatrix<f64>, rhs: DMatrix<f64>, ridge: f64, t: usize) -> Result<DMatrix<f64>> {
    let d = gram.nrows();
    for i in 0..d - 1 {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::numerical(format!(
            "singular regression Gram matrix at step {t}; raise the regularizer"
        ))
    })?;
    Ok(chol.solve(&rhs))
}

fn split(w_t: &DMatrix<f64>, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let w = w_t.transpose();
    (
        w.columns(0, n).into_owned(),
        w.columns(n, m).into_owned(),
        w.column(n + m).into_owned(),
    )
}

fn initial_moments(trajs: &[Trajectory]) -> (DVector<f64>, DMatrix<f64>) {
    let n = trajs[0].states[0].flat().len();
    let xs: Vec<DVector<f64>> = trajs
        .iter()
        .map(|t| DVector::from_vec(t.states[0].flat()))
        .collect();
    let mean = xs.iter().fold(DVector::zeros(n), |acc, x| acc + x) / xs.len() as f64;
    let cov = xs.iter().fold(DMatrix::zeros(n, n), |acc, x| {
        acc + (x - &mean) * (x - &mean).transpose()
    }) / xs.len() as f64;
    (mean, cov)
}

/// Per-step ridge regression of `x_{t+1}` on `(x_t, u_t, 1)`.
///
/// `regularizer` is added to the Gram diagonal for the state and action
/// regressors; the intercept stays unpenalized so training residuals have
/// zero mean.
pub fn fit_dynamics(trajs: &[Trajectory], regularizer: f64) -> Result<LocalDynamicsModel> {
    fit_dynamics_with_prior(trajs, regularizer, None)
}

pub fn fit_dynamics_with_prior(
    trajs: &[Trajectory],
    regularizer: f64,
    prior: Option<&DynamicsPrior>,
) -> Result<LocalDynamicsModel> {
    let horizon = check(trajs)?;
    let n = trajs[0].states[0].flat().len();
    let m = trajs[0].actions[0].len();
    let (x0_mean, x0_cov) = initial_moments(trajs);
    let mut model = LocalDynamicsModel {
        a: Vec::with_capacity(horizon),
        b: Vec::with_capacity(horizon),
        c: Vec::with_capacity(horizon),
        residual_cov: Vec::with_capacity(horizon),
        x0_mean,
        x0_cov,
    };
    for t in 0..horizon {
        let (zs, ys) = rows(trajs, t);
        let d = n + m + 1;
        let mut gram = DMatrix::zeros(d, d);
        let mut rhs = DMatrix::zeros(d, n);
        for (z, y) in zs.iter().zip(&ys) {
            gram += z * z.transpose();
            rhs += z * y.transpose();
        }
        if let Some(p) = prior {
            gram += &p.second_moment * p.strength;
            rhs += &p.second_moment * p.weights.transpose() * p.strength;
        }
        let w_t = solve(gram, rhs, regularizer, t)?;
        let (a, b, c) = split(&w_t, n, m);
        let mut cov = DMatrix::zeros(n, n);
        for (z, y) in zs.iter().zip(&ys) {
            let r = y - w_t.transpose() * z;
            cov += &r * r.transpose();
        }
        model.a.push(a);
        model.b.push(b);
        model.c.push(c);
        model.residual_cov.push(cov / zs.len() as f64);
    }
    Ok(model)
}

/// Pools every transition into one affine model.
pub fn fit_prior(trajs: &[Trajectory], regularizer: f64, strength: f64) -> Result<DynamicsPrior> {
    let horizon = check(trajs)?;
    let n = trajs[0].states[0].flat().len();
    let m = trajs[0].actions[0].len();
    let d = n + m + 1;
    let mut gram = DMatrix::zeros(d, d);
    let mut rhs = DMatrix::zeros(d, n);
    let mut count = 0.0;
    for t in 0..horizon {
        let (zs, ys) = rows(trajs, t);
        for (z, y) in zs.iter().zip(&ys) {
            gram += z * z.transpose();
            rhs += z * y.transpose();
            count += 1.0;
        }
    }
    let second_moment = &gram / count;
    let w_t = solve(gram, rhs, regularizer.max(1e-14) * count, 0)?;
    Ok(DynamicsPrior {
        weights: w_t.transpose(),
        second_moment,
        strength,
    })
}
