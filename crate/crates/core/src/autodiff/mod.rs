//! Exact parameter gradients of the rollout loss by forward-mode sensitivity
//! propagation, plus a central-difference oracle.
//!
//! Each active flat parameter is seeded with a unit partial; every quantity
//! derived from it (effective model, torques, accelerations, states, body
//! positions, loss) then carries its derivative along. Masked parameters are
//! never seeded, so their gradient entries are exactly zero.

mod dual;

pub use dual::Dual;

use serde::{Deserialize, Serialize};

use crate::dynamics::simulate_bodies;
use crate::error::{Error, Result};
use crate::identify::Fragment;
use crate::model::{ModelParams, ParamClass, RobotModel};
use crate::objective::{fragment_sums, regularization_generic, total_generic, upper_mask, LossBreakdown, LossSpec};
use crate::scalar::{Scalar, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientResult {
    pub loss_value: f64,
    pub gradient: Vec<f64>,
    pub breakdown: LossBreakdown,
}

/// Parameter values in a differentiable representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedParams<T> {
    pub mass_delta: Vec<T>,
    pub com_delta: Vec<Vec2<T>>,
    pub damping_scale: Vec<T>,
    pub friction_scale: Vec<T>,
}

impl<T: Scalar> LiftedParams<T> {
    fn from_flat(params: &ModelParams, flat: Vec<T>) -> Self {
        let l = params.layout.n_links();
        let j = params.layout.n_joints();
        LiftedParams {
            mass_delta: flat[..l].to_vec(),
            com_delta: flat[l..3 * l].chunks(2).map(|c| [c[0], c[1]]).collect(),
            damping_scale: flat[3 * l..3 * l + j].to_vec(),
            friction_scale: flat[3 * l + j..].to_vec(),
        }
    }

    /// Flat ordering, same as [`ModelParams::flatten`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = self.mass_delta.clone();
        for c in &self.com_delta {
            out.extend_from_slice(c);
        }
        out.extend_from_slice(&self.damping_scale);
        out.extend_from_slice(&self.friction_scale);
        out
    }
}

/// Plain (non-differentiated) values.
pub fn plain_params(params: &ModelParams) -> LiftedParams<f64> {
    LiftedParams::from_flat(params, params.flatten())
}

/// Seeds flat entry `active[s]` with unit partial in slot `s`; every other
/// entry is a constant.
pub fn lift_params<const K: usize>(params: &ModelParams, active: &[usize]) -> Result<LiftedParams<Dual<K>>> {
    if active.len() > K {
        return Err(Error::dim("dual width", active.len(), K));
    }
    let d = params.dim();
    if let Some(&bad) = active.iter().find(|&&i| i >= d) {
        return Err(Error::Value(format!("active index {bad} out of range (d = {d})")));
    }
    let mut flat: Vec<Dual<K>> = params.flatten().into_iter().map(Dual::constant).collect();
    for (slot, &i) in active.iter().enumerate() {
        flat[i] = Dual::variable(flat[i].value, slot);
    }
    Ok(LiftedParams::from_flat(params, flat))
}

/// Total loss over `fragments` for parameters of any scalar type.
fn loss_generic<T: Scalar>(
    model: &RobotModel,
    params: &ModelParams,
    lifted: &LiftedParams<T>,
    fragments: &[Fragment],
    spec: &LossSpec,
) -> Result<(T, [T; 6])> {
    let eff = model.apply_values(
        &params.layout,
        &lifted.mass_delta,
        &lifted.com_delta,
        &lifted.damping_scale,
        &lifted.friction_scale,
    )?;
    let mask = upper_mask(model.n_links(), &model.upper_body());
    let mut all = T::zero();
    let mut upper = T::zero();
    for frag in fragments {
        frag.check(model)?;
        let bodies = simulate_bodies(&eff, &frag.initial, &frag.actions)?;
        let (a, u) = fragment_sums(&bodies, &frag.reference, &mask);
        all += a;
        upper += u;
    }
    if !fragments.is_empty() {
        let b = fragments.len() as f64;
        all = all / b;
        upper = upper / b;
    }
    let regs = regularization_generic(
        &lifted.mass_delta,
        &lifted.com_delta,
        &lifted.damping_scale,
        &lifted.friction_scale,
        spec,
    );
    let total = total_generic(all, upper, regs, spec);
    Ok((total, [all, upper, regs[0], regs[1], regs[2], regs[3]]))
}

fn breakdown_of<T: Scalar>(total: T, parts: &[T; 6], spec: &LossSpec) -> LossBreakdown {
    let reg = |x: T| if spec.regularization_enabled { x.value() } else { 0.0 };
    LossBreakdown {
        track_all: parts[0].value(),
        track_upper: parts[1].value(),
        reg_com: reg(parts[2]),
        reg_mass: reg(parts[3]),
        reg_damp: reg(parts[4]),
        reg_fric: reg(parts[5]),
        total: total.value(),
    }
}

/// Loss of `params` on `fragments` using plain rollouts.
pub fn evaluate_loss(
    model: &RobotModel,
    params: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
) -> Result<LossBreakdown> {
    let lifted = plain_params(params);
    let (total, parts) = loss_generic(model, params, &lifted, fragments, spec)?;
    Ok(breakdown_of(total, &parts, spec))
}

fn grad_fixed<const K: usize>(
    model: &RobotModel,
    params: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
    active: &[usize],
) -> Result<GradientResult> {
    let lifted = lift_params::<K>(params, active)?;
    let (total, parts) = loss_generic(model, params, &lifted, fragments, spec)?;
    let mut gradient = vec![0.0; params.dim()];
    for (slot, &i) in active.iter().enumerate() {
        gradient[i] = total.partials[slot];
    }
    Ok(GradientResult {
        loss_value: total.value,
        gradient,
        breakdown: breakdown_of(total, &parts, spec),
    })
}

/// Dual widths compiled in; the smallest one holding the active set is used.
const WIDTHS: [usize; 14] = [1, 2, 3, 4, 6, 8, 9, 12, 16, 24, 32, 36, 48, 80];

/// Loss and its exact gradient with respect to the flat parameters listed in
/// `active`; all other gradient entries are zero.
pub fn grad_rollout_loss(
    model: &RobotModel,
    params: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
    active: &[usize],
) -> Result<GradientResult> {
    let k = active.len();
    let width = WIDTHS
        .iter()
        .copied()
        .find(|&w| w >= k)
        .ok_or_else(|| Error::Value(format!("{k} active parameters exceed the supported maximum")))?;
    macro_rules! run {
        ($($w:literal),*) => {
            match width {
                $($w => grad_fixed::<$w>(model, params, fragments, spec, active),)*
                _ => unreachable!(),
            }
        };
    }
    run!(1, 2, 3, 4, 6, 8, 9, 12, 16, 24, 32, 36, 48, 80)
}

/// Gradient over every flat parameter.
pub fn grad_all(
    model: &RobotModel,
    params: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
) -> Result<GradientResult> {
    let active: Vec<usize> = (0..params.dim()).collect();
    grad_rollout_loss(model, params, fragments, spec, &active)
}

/// Central-difference step for flat index `i`: absolute for offsets,
/// relative for scales.
pub fn fd_step(params: &ModelParams, i: usize, h: f64) -> f64 {
    match params.layout.class(i) {
        ParamClass::Mass | ParamClass::Com => h,
        ParamClass::DampingScale | ParamClass::FrictionScale => h * params.flatten()[i].abs().max(1.0),
    }
}

/// Central differences of an arbitrary scalar function, one coordinate at a time.
pub fn central_differences<F>(theta: &[f64], steps: &[f64], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if steps.len() != theta.len() {
        return Err(Error::dim("finite-difference steps", theta.len(), steps.len()));
    }
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = steps[i];
        if !(h > 0.0) {
            return Err(Error::Value("finite-difference step must be positive".into()));
        }
        x[i] = theta[i] + h;
        let fp = f(&x)?;
        x[i] = theta[i] - h;
        let fm = f(&x)?;
        x[i] = theta[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Central-difference gradient of the total loss.
pub fn fd_gradient(
    model: &RobotModel,
    params: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
    h: f64,
) -> Result<Vec<f64>> {
    let theta = params.flatten();
    let steps: Vec<f64> = (0..theta.len()).map(|i| fd_step(params, i, h)).collect();
    central_differences(&theta, &steps, |x| {
        let p = ModelParams::unflatten(params.layout.clone(), x)?;
        Ok(evaluate_loss(model, &p, fragments, spec)?.total)
    })
}

/// Largest relative disagreement between two gradients. Coordinates whose
/// reference magnitude is at most `floor` are compared absolutely: they
/// contribute zero if within `floor` and infinity otherwise.
pub fn max_relative_error(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(&a, &r)| {
            if r.abs() > floor {
                (a - r).abs() / r.abs()
            } else if (a - r).abs() <= floor {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}
