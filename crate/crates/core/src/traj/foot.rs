use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::generate::velocity_at;
use super::trajectory::Trajectory;
use crate::dynamics::body_positions;
use crate::error::{Error, Result};
use crate::model::{forward_kinematics, EffectiveModel, State};

pub const FOOT_TOLERANCE: f64 = 1e-9;
pub const MAX_QP_ITERATIONS: usize = 20;
const STATIONARITY_TOLERANCE: f64 = 1e-10;
const SINGULAR_NORM: f64 = 1e-10;

/// Minimal joint-angle change putting the free foot at a target height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootCorrection {
    pub q: Vec<f64>,
    pub delta: Vec<f64>,
    /// Multiplier of the height constraint at the solution.
    pub multiplier: f64,
    /// Constraint gradient with respect to the active joints at the solution.
    pub jacobian: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl FootCorrection {
    /// `|| delta_active - J^T lambda ||`.
    pub fn stationarity(&self, active: &[usize]) -> f64 {
        active
            .iter()
            .zip(&self.jacobian)
            .map(|(&k, &j)| (self.delta[k] - j * self.multiplier).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn foot_link(eff: &EffectiveModel<'_, f64>) -> Result<usize> {
    eff.model
        .free_foot()
        .ok_or_else(|| Error::Value("model has no free-foot link".into()))
}

/// World height of the free foot's distal point.
pub fn foot_height(eff: &EffectiveModel<'_, f64>, q: &[f64]) -> Result<f64> {
    let foot = foot_link(eff)?;
    let kin = forward_kinematics(eff, q)?;
    Ok(kin.distal(eff.model, foot)[1])
}

/// Foot height with its gradient and Hessian over the `active` joints. A joint
/// off the foot's path contributes nothing; one on it turns the foot about
/// its own origin, so `dh/dq_k = (p - o_k)_x` and
/// `d2h/dq_j dq_k = -(p - o_m)_y` with `m` the deeper of the two joints.
fn height_derivatives(
    eff: &EffectiveModel<'_, f64>,
    q: &[f64],
    active: &[usize],
) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    let model = eff.model;
    let foot = foot_link(eff)?;
    let kin = forward_kinematics(eff, q)?;
    let p = kin.distal(model, foot);
    let path = model.joint_path(foot);
    let depth: Vec<Option<usize>> = active.iter().map(|k| path.iter().position(|j| j == k)).collect();
    let origin = |k: usize| kin.origins[model.joints()[k].child_link];
    let grad = active
        .iter()
        .zip(&depth)
        .map(|(&k, d)| if d.is_some() { p[0] - origin(k)[0] } else { 0.0 })
        .collect();
    let m = active.len();
    let mut hess = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            if let (Some(da), Some(db)) = (depth[a], depth[b]) {
                let deeper = active[if da >= db { a } else { b }];
                hess[(a, b)] = -(p[1] - origin(deeper)[1]);
            }
        }
    }
    Ok((p[1], grad, hess))
}

#[cfg(test)]
fn height_and_gradient(eff: &EffectiveModel<'_, f64>, q: &[f64], active: &[usize]) -> Result<(f64, Vec<f64>)> {
    height_derivatives(eff, q, active).map(|(h, g, _)| (h, g))
}

/// Solves `min ||dq||^2  s.t.  h(q + dq) = target` over the `active` joints by
/// Newton steps on the KKT system `[I - lambda H, -J; J^T, 0]`.
pub fn foot_height_qp(
    eff: &EffectiveModel<'_, f64>,
    q: &[f64],
    active: &[usize],
    target: f64,
) -> Result<FootCorrection> {
    let n = eff.model.n_joints();
    if q.len() != n {
        return Err(Error::dim("q", n, q.len()));
    }
    if active.is_empty() {
        return Err(Error::Value("no active joints for the foot correction".into()));
    }
    if let Some(&k) = active.iter().find(|&&k| k >= n) {
        return Err(Error::Value(format!("active joint {k} does not exist")));
    }
    let m = active.len();
    let mut delta = vec![0.0; m];
    let mut lambda = 0.0;
    let mut qc = q.to_vec();
    for it in 0..=MAX_QP_ITERATIONS {
        let (h, jac, hess) = height_derivatives(eff, &qc, active)?;
        let jnorm = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
        if jnorm < SINGULAR_NORM {
            return Err(Error::SingularJacobian { norm: jnorm });
        }
        let r = h - target;
        let multiplier = jac.iter().zip(&delta).map(|(j, d)| j * d).sum::<f64>() / (jnorm * jnorm);
        let stationarity = jac
            .iter()
            .zip(&delta)
            .map(|(j, d)| (d - j * multiplier).powi(2))
            .sum::<f64>()
            .sqrt();
        if r.abs() < FOOT_TOLERANCE && stationarity < STATIONARITY_TOLERANCE {
            let mut full = vec![0.0; n];
            for (s, &k) in active.iter().enumerate() {
                full[k] = delta[s];
            }
            return Ok(FootCorrection {
                q: qc,
                delta: full,
                multiplier,
                jacobian: jac,
                residual: r.abs(),
                iterations: it,
            });
        }
        if it == MAX_QP_ITERATIONS {
            return Err(Error::NonConverged {
                iterations: it,
                residual: r.abs(),
            });
        }
        // Curvature is dropped (a Gauss-Newton step) when the Lagrangian
        // Hessian is indefinite on the constraint tangent space.
        let mut lag = DMatrix::<f64>::identity(m, m) - hess * lambda;
        let jv = DVector::from_column_slice(&jac);
        let normal = &jv * jv.transpose() / (jnorm * jnorm);
        let tangent = DMatrix::<f64>::identity(m, m) - &normal;
        if (&tangent * &lag * &tangent + normal).cholesky().is_none() {
            lag = DMatrix::identity(m, m);
        }
        let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for i in 0..m {
            for j in 0..m {
                kkt[(i, j)] = lag[(i, j)];
            }
            kkt[(i, m)] = -jac[i];
            kkt[(m, i)] = jac[i];
            rhs[i] = -(delta[i] - lambda * jac[i]);
        }
        rhs[m] = -r;
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { norm: jnorm })?;
        for i in 0..m {
            delta[i] += sol[i];
        }
        lambda += sol[m];
        for (s, &k) in active.iter().enumerate() {
            qc[k] = q[k] + delta[s];
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Applies the foot correction at every stance timestep, then recomputes the
/// velocities whose finite-difference stencil touches a corrected angle and
/// the body positions of corrected frames. Swing timesteps are copied
/// unchanged.
pub fn process_trajectory(
    eff: &EffectiveModel<'_, f64>,
    raw: &Trajectory,
    active: &[usize],
    target: f64,
) -> Result<Trajectory> {
    raw.validate()?;
    let mut out = raw.clone();
    if !raw.stance.any_stance() {
        return Ok(out);
    }
    let n = raw.states.len();
    let mut changed = vec![false; n];
    for t in 0..n {
        if !raw.stance.is_stance(t) {
            continue;
        }
        let corr = foot_height_qp(eff, &raw.states[t].q, active, target).map_err(|e| Error::AtTimestep {
            timestep: t,
            source: Box::new(e),
        })?;
        if corr.delta.iter().any(|&d| d != 0.0) {
            out.states[t].q = corr.q;
            changed[t] = true;
        }
    }
    if !changed.iter().any(|&c| c) {
        return Ok(out);
    }
    let q: Vec<Vec<f64>> = out.states.iter().map(|s| s.q.clone()).collect();
    for t in 0..n {
        let lo = t.saturating_sub(1);
        let hi = (t + 1).min(n - 1);
        if changed[lo..=hi].iter().any(|&c| c) {
            out.states[t] = State {
                q: q[t].clone(),
                qdot: velocity_at(&q, t, raw.dt),
            };
        }
        if changed[t] && raw.has_body_positions() {
            out.body_positions[t] = body_positions(eff, &q[t]);
        }
    }
    Ok(out)
}
