//! Forward dynamics of the welded-root planar tree.
//!
//! Equations of motion are `M(q) qdd + bias(q, qd) = tau`, integrated with
//! semi-implicit Euler. Every function is generic over [`Scalar`] so the same
//! code path yields plain values and parameter sensitivities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kinematics_unchecked, EffectiveModel, Kinematics, RobotModel, State};
use crate::scalar::{cross2, dot2, lift2, scale2, sub2, Scalar, Vec2};

/// Stiffness of the one-sided joint-limit spring, N m/rad.
pub const LIMIT_STIFFNESS: f64 = 500.0;

/// Any state entry beyond this magnitude is treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Commanded joint angles for one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub q_target: Vec<f64>,
}

impl ControlInput {
    pub fn new(q_target: Vec<f64>) -> Self {
        ControlInput { q_target }
    }

    /// Dimension, finiteness, and limits widened by 0.5 rad.
    pub fn check(&self, model: &RobotModel) -> Result<()> {
        if self.q_target.len() != model.n_joints() {
            return Err(Error::dim("control input", model.n_joints(), self.q_target.len()));
        }
        for (k, (&u, j)) in self.q_target.iter().zip(model.joints()).enumerate() {
            let [lo, hi] = j.angle_limits;
            if !u.is_finite() || u < lo - 0.5 || u > hi + 0.5 {
                return Err(Error::Value(format!(
                    "target {u} for joint {k} ('{}') outside limits",
                    j.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub record_bodies: bool,
    pub seed: u64,
}

impl RolloutConfig {
    pub fn new(horizon: usize) -> Self {
        RolloutConfig {
            horizon,
            record_bodies: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// `horizon + 1` states, the first being the initial state.
    pub states: Vec<State>,
    /// World CoM of every link per recorded state (empty unless requested).
    pub body_positions: Vec<Vec<[f64; 2]>>,
    /// Mean joint torque over the substeps of each control step.
    pub applied_torques: Vec<Vec<f64>>,
}

fn check_lengths<T>(model: &RobotModel, q: &[T], qdot: &[T]) -> Result<()> {
    let n = model.n_joints();
    if q.len() != n {
        return Err(Error::dim("q", n, q.len()));
    }
    if qdot.len() != n {
        return Err(Error::dim("qdot", n, qdot.len()));
    }
    Ok(())
}

/// PD actuation plus viscous damping and tanh-smoothed Coulomb friction.
pub fn joint_torque<T: Scalar>(
    eff: &EffectiveModel<'_, T>,
    q: &[T],
    qdot: &[T],
    u: &ControlInput,
) -> Result<Vec<T>> {
    check_lengths(eff.model, q, qdot)?;
    if u.q_target.len() != q.len() {
        return Err(Error::dim("control input", q.len(), u.q_target.len()));
    }
    Ok(torque_unchecked(eff, q, qdot, u))
}

fn torque_unchecked<T: Scalar>(
    eff: &EffectiveModel<'_, T>,
    q: &[T],
    qdot: &[T],
    u: &ControlInput,
) -> Vec<T> {
    let v_eps = eff.model.friction_velocity();
    eff.model
        .joints()
        .iter()
        .enumerate()
        .map(|(k, j)| {
            let pd = ((-q[k] + u.q_target[k]) * j.kp - qdot[k] * j.kd).clamp_abs(j.torque_limit);
            pd - eff.damping[k] * qdot[k] - eff.friction[k] * (qdot[k] / v_eps).tanh()
        })
        .collect()
}

/// One-sided stiff springs pushing joints back inside their limits.
fn limit_torque<T: Scalar>(model: &RobotModel, q: &[T], tau: &mut [T]) {
    for (k, j) in model.joints().iter().enumerate() {
        let [lo, hi] = j.angle_limits;
        let v = q[k].value();
        if v > hi {
            tau[k] -= (q[k] - hi) * LIMIT_STIFFNESS;
        } else if v < lo {
            tau[k] += (-q[k] + lo) * LIMIT_STIFFNESS;
        }
    }
}

/// Composite-rigid-body mass matrix, row-major `n x n`.
///
/// For joints `a` (ancestor-or-self of `b`) with world positions `p_a`, `p_b`,
/// `M_ab = S2_b - (p_a + p_b) . S1_b + (p_a . p_b) S0_b` where `S0`, `S1`,
/// `S2` are the mass, first moment, and second moment (plus CoM inertia) of
/// the subtree rooted at `b`.
pub fn mass_matrix<T: Scalar>(eff: &EffectiveModel<'_, T>, q: &[T]) -> Result<Vec<T>> {
    if q.len() != eff.model.n_joints() {
        return Err(Error::dim("q", eff.model.n_joints(), q.len()));
    }
    let kin = kinematics_unchecked(eff, q);
    Ok(mass_matrix_from(eff, &kin))
}

fn mass_matrix_from<T: Scalar>(eff: &EffectiveModel<'_, T>, kin: &Kinematics<T>) -> Vec<T> {
    let model = eff.model;
    let nl = model.n_links();
    let n = model.n_joints();

    let mut s0: Vec<T> = eff.mass.clone();
    let mut s1: Vec<Vec2<T>> = (0..nl).map(|i| scale2(kin.coms[i], eff.mass[i])).collect();
    let mut s2: Vec<T> = (0..nl)
        .map(|i| dot2(kin.coms[i], kin.coms[i]) * eff.mass[i] + eff.inertia[i])
        .collect();
    for i in (1..nl).rev() {
        let p = model.links()[i].parent.expect("non-root");
        let (a, b, c) = (s0[i], s1[i], s2[i]);
        s0[p] += a;
        s1[p] = [s1[p][0] + b[0], s1[p][1] + b[1]];
        s2[p] += c;
    }

    let mut m = vec![T::zero(); n * n];
    for lb in 1..nl {
        let kb = model.link_joint(lb).expect("non-root");
        let pb = kin.origins[lb];
        let mut cur = Some(lb);
        while let Some(la) = cur {
            if la == 0 {
                break;
            }
            let ka = model.link_joint(la).expect("non-root");
            let pa = kin.origins[la];
            let sum = [pa[0] + pb[0], pa[1] + pb[1]];
            let v = s2[lb] - dot2(sum, s1[lb]) + dot2(pa, pb) * s0[lb];
            m[ka * n + kb] = v;
            m[kb * n + ka] = v;
            cur = model.links()[la].parent;
        }
    }
    m
}

/// Coriolis, centrifugal and gravity generalized forces `C(q, qd) qd + g(q)`,
/// by recursive Newton-Euler with zero joint accelerations.
pub fn bias_forces<T: Scalar>(eff: &EffectiveModel<'_, T>, q: &[T], qdot: &[T]) -> Result<Vec<T>> {
    check_lengths(eff.model, q, qdot)?;
    let kin = kinematics_unchecked(eff, q);
    Ok(bias_from(eff, &kin, qdot))
}

fn bias_from<T: Scalar>(eff: &EffectiveModel<'_, T>, kin: &Kinematics<T>, qdot: &[T]) -> Vec<T> {
    let model = eff.model;
    let nl = model.n_links();
    let g = model.gravity();

    // Forward pass: angular velocities and accelerations of frame origins and
    // CoMs. Gravity enters as an upward acceleration of the root.
    let mut omega = vec![T::zero(); nl];
    let mut acc_origin: Vec<Vec2<T>> = vec![lift2([-g[0], -g[1]]); nl];
    let mut acc_com: Vec<Vec2<T>> = vec![[T::zero(), T::zero()]; nl];
    for i in 0..nl {
        if let Some(p) = model.links()[i].parent {
            let k = model.link_joint(i).expect("non-root");
            omega[i] = omega[p] + qdot[k];
            let r = sub2(kin.origins[i], kin.origins[p]);
            let w2 = omega[p] * omega[p];
            acc_origin[i] = sub2(acc_origin[p], scale2(r, w2));
        }
        let rc = sub2(kin.coms[i], kin.origins[i]);
        let w2 = omega[i] * omega[i];
        acc_com[i] = sub2(acc_origin[i], scale2(rc, w2));
    }

    // Backward pass: forces and moments about each joint.
    let mut force: Vec<Vec2<T>> = (0..nl).map(|i| scale2(acc_com[i], eff.mass[i])).collect();
    let mut moment: Vec<T> = (0..nl)
        .map(|i| cross2(sub2(kin.coms[i], kin.origins[i]), force[i]))
        .collect();
    let mut tau = vec![T::zero(); model.n_joints()];
    for i in (1..nl).rev() {
        let k = model.link_joint(i).expect("non-root");
        tau[k] = moment[i];
        let p = model.links()[i].parent.expect("non-root");
        let r = sub2(kin.origins[i], kin.origins[p]);
        let f = force[i];
        let extra = moment[i] + cross2(r, f);
        force[p] = [force[p][0] + f[0], force[p][1] + f[1]];
        moment[p] += extra;
    }
    tau
}

/// Joint accelerations for the given total torque.
pub(crate) fn accelerations<T: Scalar>(
    eff: &EffectiveModel<'_, T>,
    q: &[T],
    qdot: &[T],
    tau: &[T],
) -> Option<Vec<T>> {
    let kin = kinematics_unchecked(eff, q);
    let m = mass_matrix_from(eff, &kin);
    let bias = bias_from(eff, &kin, qdot);
    let rhs: Vec<T> = tau.iter().zip(bias.iter()).map(|(&t, &b)| t - b).collect();
    T::solve_spd(&m, &rhs, q.len())
}

/// Advances `(q, qdot)` by one control step (`substeps` inner steps).
/// Returns the mean torque applied over the step.
pub(crate) fn step_in_place<T: Scalar>(
    eff: &EffectiveModel<'_, T>,
    q: &mut [T],
    qdot: &mut [T],
    u: &ControlInput,
) -> std::result::Result<Vec<T>, String> {
    let model = eff.model;
    let h = model.dt_sim();
    let substeps = model.substeps();
    let mut mean_tau = vec![T::zero(); q.len()];
    for _ in 0..substeps {
        let mut tau = torque_unchecked(eff, q, qdot, u);
        limit_torque(model, q, &mut tau);
        let qdd = accelerations(eff, q, qdot, &tau)
            .ok_or_else(|| "mass matrix lost positive definiteness".to_string())?;
        for k in 0..q.len() {
            qdot[k] += qdd[k] * h;
            q[k] += qdot[k] * h;
            mean_tau[k] += tau[k];
        }
        for k in 0..q.len() {
            let (a, b) = (q[k].value(), qdot[k].value());
            if !(a.abs() <= DIVERGENCE_BOUND && b.abs() <= DIVERGENCE_BOUND) || !q[k].is_finite() || !qdot[k].is_finite() {
                return Err(format!("joint {k}: q = {a}, qdot = {b}"));
            }
        }
    }
    let inv = 1.0 / substeps as f64;
    Ok(mean_tau.into_iter().map(|t| t * inv).collect())
}

/// One control step from `state` under `u`.
pub fn step(eff: &EffectiveModel<'_, f64>, state: &State, u: &ControlInput) -> Result<State> {
    state.check(eff.model.n_joints())?;
    if u.q_target.len() != eff.model.n_joints() {
        return Err(Error::dim("control input", eff.model.n_joints(), u.q_target.len()));
    }
    let mut q = state.q.clone();
    let mut qdot = state.qdot.clone();
    step_in_place(eff, &mut q, &mut qdot, u).map_err(|detail| Error::Divergence { step: 0, detail })?;
    Ok(State { q, qdot })
}

/// Replays `actions[..horizon]` from `initial`.
pub fn rollout(
    eff: &EffectiveModel<'_, f64>,
    initial: &State,
    actions: &[ControlInput],
    config: &RolloutConfig,
) -> Result<RolloutResult> {
    let model = eff.model;
    initial.check(model.n_joints())?;
    if config.horizon == 0 {
        return Err(Error::Value("rollout horizon must be at least 1".into()));
    }
    if actions.len() < config.horizon {
        return Err(Error::dim("actions", config.horizon, actions.len()));
    }
    if let Some(a) = actions.iter().find(|a| a.q_target.len() != model.n_joints()) {
        return Err(Error::dim("control input", model.n_joints(), a.q_target.len()));
    }
    let mut q = initial.q.clone();
    let mut qdot = initial.qdot.clone();
    let mut states = Vec::with_capacity(config.horizon + 1);
    let mut bodies = Vec::new();
    let mut torques = Vec::with_capacity(config.horizon);
    states.push(initial.clone());
    if config.record_bodies {
        bodies.push(body_positions(eff, &q));
    }
    for (t, u) in actions[..config.horizon].iter().enumerate() {
        let tau = step_in_place(eff, &mut q, &mut qdot, u)
            .map_err(|detail| Error::Divergence { step: t, detail })?;
        torques.push(tau);
        states.push(State {
            q: q.clone(),
            qdot: qdot.clone(),
        });
        if config.record_bodies {
            bodies.push(body_positions(eff, &q));
        }
    }
    Ok(RolloutResult {
        states,
        body_positions: bodies,
        applied_torques: torques,
    })
}

/// World CoM of every link at configuration `q`.
pub fn body_positions(eff: &EffectiveModel<'_, f64>, q: &[f64]) -> Vec<[f64; 2]> {
    kinematics_unchecked(eff, q).coms
}

/// Simulates `horizon` steps from a constant initial state and returns the
/// body CoM trajectory for steps `1..=horizon`, in any scalar.
pub(crate) fn simulate_bodies<T: Scalar>(
    eff: &EffectiveModel<'_, T>,
    initial: &State,
    actions: &[ControlInput],
) -> Result<Vec<Vec<Vec2<T>>>> {
    let mut q: Vec<T> = initial.q.iter().map(|&v| T::constant(v)).collect();
    let mut qdot: Vec<T> = initial.qdot.iter().map(|&v| T::constant(v)).collect();
    let mut out = Vec::with_capacity(actions.len());
    for (t, u) in actions.iter().enumerate() {
        step_in_place(eff, &mut q, &mut qdot, u).map_err(|detail| Error::Divergence { step: t, detail })?;
        out.push(kinematics_unchecked(eff, &q).coms);
    }
    Ok(out)
}

/// Kinetic energy `0.5 qd^T M qd`.
pub fn kinetic_energy(eff: &EffectiveModel<'_, f64>, state: &State) -> f64 {
    let m = mass_matrix(eff, &state.q).expect("dimensions checked by caller");
    let n = state.q.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            e += state.qdot[i] * m[i * n + j] * state.qdot[j];
        }
    }
    0.5 * e
}
