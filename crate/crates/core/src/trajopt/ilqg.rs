//! Affine LQR backward recursion with a soft trust region.
//!
//! The trust region works like a dual variable `eta`: the problem solved is
//! `cost / eta + 1/2 (u - mu_prev(x))' C_prev^-1 (u - mu_prev(x))`, so a large
//! `eta` keeps the previous controller and a small one follows the cost. The
//! new covariance is the inverse of that problem's `Q_uu`, which never exceeds
//! the previous covariance. `eta` is chosen by bisection so that the predicted
//! mean-action change stays within the step size.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::fit::LocalDynamicsModel;
use super::policy::LinearGaussianPolicy;
use super::quadratize::QuadraticCost;
use crate::error::{Error, Result};
use crate::linalg::{project_psd, symmetrize};

const MAX_REGULARIZATION: f64 = 1e6;
/// Added to the previous covariance before inverting, so deterministic
/// controllers give a stiff but finite penalty.
const COVARIANCE_FLOOR: f64 = 1e-10;
const ETA_MIN: f64 = 1e-6;
const ETA_MAX: f64 = 1e12;

/// Result of one backward pass.
#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub policy: LinearGaussianPolicy,
    /// Value Hessians `V_t`, `t = 0..=horizon`.
    pub value_hessians: Vec<DMatrix<f64>>,
    pub value_gradients: Vec<DVector<f64>>,
    /// `Q_uu` (after any regularization) per step.
    pub quu: Vec<DMatrix<f64>>,
}

/// Costs in absolute coordinates: `1/2 z'Hz + g'z`.
fn absolute(
    q: &QuadraticCost,
    n: usize,
) -> (
    DMatrix<f64>,
    DMatrix<f64>,
    DMatrix<f64>,
    DVector<f64>,
    DVector<f64>,
) {
    let m = q.hess.nrows() - n;
    let g = &q.grad - &q.hess * &q.nominal;
    (
        q.hess.view((0, 0), (n, n)).into_owned(),
        q.hess.view((n, 0), (m, n)).into_owned(),
        q.hess.view((n, n), (m, m)).into_owned(),
        g.rows(0, n).into_owned(),
        g.rows(n, m).into_owned(),
    )
}

fn factor(quu: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>)> {
    let base = symmetrize(quu);
    if let Some(ch) = base.clone().cholesky() {
        return Ok((ch, base));
    }
    let m = base.nrows();
    let mut mu = 1e-8 * base.amax().max(1.0);
    while mu <= MAX_REGULARIZATION {
        let reg = &base + DMatrix::identity(m, m) * mu;
        if let Some(ch) = reg.clone().cholesky() {
            return Ok((ch, reg));
        }
        mu *= 10.0;
    }
    log::trace!(
        "Q_uu factorization failed: max |entry| {:.3e}, finite {}",
        base.amax(),
        base.iter().all(|v| v.is_finite())
    );
    Err(Error::numerical(
        "Q_uu is not positive definite after maximum regularization",
    ))
}

/// Backward recursion. `penalty = Some((prev, eta))` solves the trust-region problem.
pub fn lqr_backward(
    model: &LocalDynamicsModel,
    quad: &[QuadraticCost],
    penalty: Option<(&LinearGaussianPolicy, f64)>,
) -> Result<BackwardPass> {
    let horizon = model.horizon();
    if quad.len() != horizon + 1 {
        return Err(Error::arg("need horizon + 1 cost expansions"));
    }
    let n = model.state_dim();
    let scale = penalty.map_or(1.0, |(_, eta)| 1.0 / eta);

    let (hxx_t, _, _, gx_t, _) = absolute(&quad[horizon], n);
    let mut v = symmetrize(&(hxx_t * scale));
    let mut vg = gx_t * scale;
    let mut value_hessians = vec![v.clone()];
    let mut value_gradients = vec![vg.clone()];
    let mut gains = Vec::with_capacity(horizon);
    let mut biases = Vec::with_capacity(horizon);
    let mut covariances = Vec::with_capacity(horizon);
    let mut quus = Vec::with_capacity(horizon);

    for t in (0..horizon).rev() {
        let (mut hxx, mut hux, mut huu, mut gx, mut gu) = absolute(&quad[t], n);
        hxx *= scale;
        hux *= scale;
        huu *= scale;
        gx *= scale;
        gu *= scale;
        if let Some((prev, _)) = penalty {
            let m = prev.action_dim();
            let precision = (&prev.covariances[t] + DMatrix::identity(m, m) * COVARIANCE_FLOOR)
                .try_inverse()
                .ok_or_else(|| Error::numerical("previous covariance is singular"))?;
            let pk = &precision * &prev.gains[t];
            hxx += prev.gains[t].transpose() * &pk;
            hux -= &pk;
            huu += &precision;
            gx += prev.gains[t].transpose() * (&precision * &prev.biases[t]);
            gu -= &precision * &prev.biases[t];
        }
        let (a, b, c) = (&model.a[t], &model.b[t], &model.c[t]);
        let vc = &v * c + &vg;
        let qxx = hxx + a.transpose() * &v * a;
        let qux = hux + b.transpose() * &v * a;
        let quu = huu + b.transpose() * &v * b;
        let qx = gx + a.transpose() * &vc;
        let qu = gu + b.transpose() * &vc;

        let (chol, quu_reg) = factor(&quu)?;
        let gain = -chol.solve(&qux);
        let bias = -chol.solve(&qu);
        let cov = symmetrize(&chol.inverse());

        v = project_psd(&(&qxx + qux.transpose() * &gain), 0.0);
        vg = &qx + qux.transpose() * &bias;
        value_hessians.push(v.clone());
        value_gradients.push(vg.clone());
        gains.push(gain);
        biases.push(bias);
        covariances.push(cov);
        quus.push(quu_reg);
    }
    gains.reverse();
    biases.reverse();
    covariances.reverse();
    quus.reverse();
    value_hessians.reverse();
    value_gradients.reverse();
    Ok(BackwardPass {
        policy: LinearGaussianPolicy {
            gains,
            biases,
            covariances,
        },
        value_hessians,
        value_gradients,
        quu: quus,
    })
}

/// Root-mean-square change of the mean action along the new controller's
/// predicted mean trajectory.
pub fn predicted_mean_deviation(
    model: &LocalDynamicsModel,
    new: &LinearGaussianPolicy,
    prev: &LinearGaussianPolicy,
) -> f64 {
    let mut x = model.x0_mean.clone();
    let mut acc = 0.0;
    for t in 0..model.horizon() {
        let u = new.mean_action(t, &x);
        let d = &u - prev.mean_action(t, &x);
        acc += d.norm_squared();
        x = model.predict(t, &x, &u);
    }
    (acc / model.horizon() as f64).sqrt()
}

/// Trust-region iLQG update. An infinite `kl_step` solves the plain LQR
/// problem for the local model.
pub fn ilqg_backward(
    model: &LocalDynamicsModel,
    quad: &[QuadraticCost],
    prev: &LinearGaussianPolicy,
    kl_step: f64,
) -> Result<(LinearGaussianPolicy, f64)> {
    if kl_step.is_infinite() {
        return Ok((lqr_backward(model, quad, None)?.policy, 0.0));
    }
    let attempt = |eta: f64| -> Option<(LinearGaussianPolicy, f64)> {
        let pass = lqr_backward(model, quad, Some((prev, eta))).ok()?;
        let dev = predicted_mean_deviation(model, &pass.policy, prev);
        dev.is_finite().then_some((pass.policy, dev))
    };
    if let Some((p, dev)) = attempt(ETA_MIN) {
        if dev <= kl_step {
            return Ok((p, ETA_MIN));
        }
    }
    let mut best = match attempt(ETA_MAX) {
        Some((p, dev)) if dev <= kl_step => (p, ETA_MAX),
        Some((p, dev)) => {
            log::debug!(
                "trust region unattainable (deviation {dev:.3e}); keeping the stiffest update"
            );
            return Ok((p, ETA_MAX));
        }
        None => {
            return Err(Error::numerical(
                "backward pass failed even at the tightest trust region",
            ))
        }
    };
    let (mut lo, mut hi) = (ETA_MIN.ln(), ETA_MAX.ln());
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        match attempt(mid.exp()) {
            Some((p, dev)) if dev <= kl_step => {
                best = (p, mid.exp());
                hi = mid;
            }
            _ => lo = mid,
        }
        if hi - lo < 1e-3 {
            break;
        }
    }
    Ok(best)
}
