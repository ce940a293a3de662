//! Trajectory-matching loss: body-position tracking over all bodies plus an
//! extra upper-body term, four regularizers, and their weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalar::{Scalar, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSpec {
    pub alpha_upper: f64,
    pub lambda_com: f64,
    pub lambda_mass: f64,
    pub lambda_damp: f64,
    pub lambda_fric: f64,
    pub box_low: f64,
    pub box_high: f64,
    pub regularization_enabled: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            alpha_upper: 1.0,
            lambda_com: 10.0,
            lambda_mass: 0.01,
            lambda_damp: 0.1,
            lambda_fric: 0.1,
            box_low: 0.8,
            box_high: 1.2,
            regularization_enabled: true,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.alpha_upper,
            self.lambda_com,
            self.lambda_mass,
            self.lambda_damp,
            self.lambda_fric,
        ];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Value("loss weights must be finite and non-negative".into()));
        }
        if !(self.box_low < self.box_high) {
            return Err(Error::Value("box_low must be below box_high".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub track_all: f64,
    pub track_upper: f64,
    pub reg_com: f64,
    pub reg_mass: f64,
    pub reg_damp: f64,
    pub reg_fric: f64,
    pub total: f64,
}

/// Un-normalized squared-error sums of one fragment: `(all bodies, upper bodies)`.
/// Both position sequences are indexed `[t][body]`.
pub(crate) fn fragment_sums<T: Scalar>(
    sim: &[Vec<Vec2<T>>],
    reference: &[Vec<[f64; 2]>],
    upper_mask: &[bool],
) -> (T, T) {
    let mut all = T::zero();
    let mut upper = T::zero();
    for (frame, ref_frame) in sim.iter().zip(reference) {
        for (j, (p, r)) in frame.iter().zip(ref_frame).enumerate() {
            let dx = p[0] - r[0];
            let dy = p[1] - r[1];
            let d = dx * dx + dy * dy;
            all += d;
            if upper_mask[j] {
                upper += d;
            }
        }
    }
    (all, upper)
}

pub(crate) fn upper_mask(n_bodies: usize, upper: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n_bodies];
    for &j in upper {
        if j < n_bodies {
            mask[j] = true;
        }
    }
    mask
}

/// Batch tracking losses `(L_all, L_upper)`. Tensors are indexed
/// `[fragment][t][body]`; the sum runs over every frame supplied and is
/// divided by the number of fragments only.
pub fn tracking_loss(
    sim: &[Vec<Vec<[f64; 2]>>],
    reference: &[Vec<Vec<[f64; 2]>>],
    upper: &[usize],
) -> Result<(f64, f64)> {
    if sim.len() != reference.len() {
        return Err(Error::Shape(format!(
            "batch sizes differ: {} vs {}",
            sim.len(),
            reference.len()
        )));
    }
    let mut n_bodies = None;
    for (b, (s, r)) in sim.iter().zip(reference).enumerate() {
        if s.len() != r.len() {
            return Err(Error::Shape(format!(
                "fragment {b}: horizons differ ({} vs {})",
                s.len(),
                r.len()
            )));
        }
        for (t, (fs, fr)) in s.iter().zip(r).enumerate() {
            let nb = *n_bodies.get_or_insert(fs.len());
            if fs.len() != nb || fr.len() != nb {
                return Err(Error::Shape(format!(
                    "fragment {b}, step {t}: body counts differ ({} vs {})",
                    fs.len(),
                    fr.len()
                )));
            }
        }
    }
    if sim.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mask = upper_mask(n_bodies.unwrap_or(0), upper);
    let mut all = 0.0;
    let mut up = 0.0;
    for (s, r) in sim.iter().zip(reference) {
        let (a, u) = fragment_sums(s, r, &mask);
        all += a;
        up += u;
    }
    let b = sim.len() as f64;
    Ok((all / b, up / b))
}

/// Zero inside `[low, high]`, quadratic outside.
pub fn box_penalty(alpha: f64, low: f64, high: f64) -> f64 {
    box_penalty_generic(alpha, low, high)
}

pub(crate) fn box_penalty_generic<T: Scalar>(alpha: T, low: f64, high: f64) -> T {
    let below = (-alpha + low).positive_part();
    let above = (alpha - high).positive_part();
    below * below + above * above
}

/// Regularizer values `(com, mass, damp, fric)` for raw parameter values.
pub(crate) fn regularization_generic<T: Scalar>(
    mass_delta: &[T],
    com_delta: &[Vec2<T>],
    damping_scale: &[T],
    friction_scale: &[T],
    spec: &LossSpec,
) -> [T; 4] {
    let mut com = T::zero();
    for c in com_delta {
        com += c[0] * c[0] + c[1] * c[1];
    }
    let mut mass = T::zero();
    for &m in mass_delta {
        mass += m * m;
    }
    let mut damp = T::zero();
    for &a in damping_scale {
        damp += box_penalty_generic(a, spec.box_low, spec.box_high);
    }
    let mut fric = T::zero();
    for &a in friction_scale {
        fric += box_penalty_generic(a, spec.box_low, spec.box_high);
    }
    [com, mass, damp, fric]
}

/// `(reg_com, reg_mass, reg_damp, reg_fric)` for the given parameters.
/// Offsets are measured from nominal, so they are exactly the parameter
/// fields.
pub fn regularization(params: &ModelParams, spec: &LossSpec) -> (f64, f64, f64, f64) {
    let [c, m, d, f] = regularization_generic(
        &params.mass_delta,
        &params.com_delta,
        &params.damping_scale,
        &params.friction_scale,
        spec,
    );
    (c, m, d, f)
}

/// Weighted total in any scalar; regularizers are dropped when disabled.
pub(crate) fn total_generic<T: Scalar>(track_all: T, track_upper: T, regs: [T; 4], spec: &LossSpec) -> T {
    let mut total = track_all + track_upper * spec.alpha_upper;
    if spec.regularization_enabled {
        total += regs[0] * spec.lambda_com
            + regs[1] * spec.lambda_mass
            + regs[2] * spec.lambda_damp
            + regs[3] * spec.lambda_fric;
    }
    total
}

/// Assembles the breakdown; regularizer entries are exactly zero when
/// regularization is disabled.
pub fn total_loss(
    track_all: f64,
    track_upper: f64,
    regs: (f64, f64, f64, f64),
    spec: &LossSpec,
) -> LossBreakdown {
    let regs = if spec.regularization_enabled {
        [regs.0, regs.1, regs.2, regs.3]
    } else {
        [0.0; 4]
    };
    LossBreakdown {
        track_all,
        track_upper,
        reg_com: regs[0],
        reg_mass: regs[1],
        reg_damp: regs[2],
        reg_fric: regs[3],
        total: total_generic(track_all, track_upper, regs, spec),
    }
}
