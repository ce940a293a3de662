use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::{StanceSchedule, Trajectory};
use crate::dynamics::{body_positions, rollout, ControlInput, RolloutConfig};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamKey, ParamLayout, RobotModel, State};

/// Off-nominal values of parameters that are not part of the payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseMismatch {
    /// Every movable link mass is multiplied by this.
    pub mass_scale: f64,
    pub damping_scale: f64,
    pub friction_scale: f64,
}

impl Default for BaseMismatch {
    fn default() -> Self {
        BaseMismatch {
            mass_scale: 1.0,
            damping_scale: 1.0,
            friction_scale: 1.0,
        }
    }
}

/// Payload carried by the torso and both hands, plus an optional mismatch of
/// the unloaded robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSetting {
    pub torso_mass_delta: f64,
    pub left_hand_mass_delta: f64,
    pub right_hand_mass_delta: f64,
    /// Torso CoM shift in the link frame: (horizontal, along the trunk).
    pub torso_com_delta: [f64; 2],
    #[serde(default)]
    pub base_mismatch: Option<BaseMismatch>,
}

pub const TORSO: &str = "torso";
pub const LEFT_HAND: &str = "left_hand";
pub const RIGHT_HAND: &str = "right_hand";

impl PerturbationSetting {
    /// Preset payloads 1 to 3 (kg, m).
    pub fn preset(n: u32) -> Result<Self> {
        let (m, l, r, c) = match n {
            1 => (6.0, 2.4, 2.0, [0.01, 0.05]),
            2 => (9.0, 3.2, 2.8, [0.02, 0.07]),
            3 => (12.0, 3.5, 3.0, [0.02, 0.07]),
            _ => return Err(Error::Value(format!("no perturbation preset {n}"))),
        };
        Ok(PerturbationSetting {
            torso_mass_delta: m,
            left_hand_mass_delta: l,
            right_hand_mass_delta: r,
            torso_com_delta: c,
            base_mismatch: None,
        })
    }

    fn link(model: &RobotModel, name: &str) -> Result<usize> {
        model
            .link_index(name)
            .ok_or_else(|| Error::Value(format!("model has no link named '{name}'")))
    }

    /// Ground-truth parameters over every movable link and joint. The payload
    /// is included only when `loaded`.
    pub fn truth(&self, model: &RobotModel, loaded: bool) -> Result<ModelParams> {
        let layout = ParamLayout::full(model);
        let mut p = ModelParams::nominal(layout.clone());
        if let Some(b) = &self.base_mismatch {
            for (slot, &link) in layout.links.iter().enumerate() {
                p.mass_delta[slot] = (b.mass_scale - 1.0) * model.links()[link].nominal_mass;
            }
            p.damping_scale.iter_mut().for_each(|a| *a = b.damping_scale);
            p.friction_scale.iter_mut().for_each(|a| *a = b.friction_scale);
        }
        if loaded {
            let slot = |name: &str| -> Result<usize> {
                let link = Self::link(model, name)?;
                layout
                    .link_slot(link)
                    .ok_or_else(|| Error::Value(format!("link '{name}' is not movable")))
            };
            let torso = slot(TORSO)?;
            for (name, dm) in [
                (TORSO, self.torso_mass_delta),
                (LEFT_HAND, self.left_hand_mass_delta),
                (RIGHT_HAND, self.right_hand_mass_delta),
            ] {
                let key = ParamKey::Mass(slot(name)?);
                p.set(key, p.get(key) + dm);
            }
            for axis in 0..2 {
                let key = if axis == 0 { ParamKey::ComX(torso) } else { ParamKey::ComY(torso) };
                p.set(key, p.get(key) + self.torso_com_delta[axis]);
            }
        }
        Ok(p)
    }
}

/// Encoder corruption applied to the simulated joint angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of white angle noise, rad.
    pub encoder_std: f64,
    /// Each joint gets a constant bias drawn uniformly from `[-r, r]`.
    pub encoder_bias: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            encoder_std: 0.0,
            encoder_bias: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn is_noiseless(&self) -> bool {
        self.encoder_std == 0.0 && self.encoder_bias == 0.0
    }
}

/// Central-difference velocities (one-sided at the ends).
pub fn finite_difference_velocities(q: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = q.len();
    (0..n)
        .map(|t| velocity_at(q, t, dt))
        .collect()
}

pub(crate) fn velocity_at(q: &[Vec<f64>], t: usize, dt: f64) -> Vec<f64> {
    let n = q.len();
    if n < 2 {
        return vec![0.0; q.first().map_or(0, |v| v.len())];
    }
    let (a, b, span) = if t == 0 {
        (0, 1, dt)
    } else if t == n - 1 {
        (n - 2, n - 1, dt)
    } else {
        (t - 1, t + 1, 2.0 * dt)
    };
    q[b].iter().zip(&q[a]).map(|(x, y)| (x - y) / span).collect()
}

/// Simulates the ground-truth robot and records what its sensors report.
///
/// Body positions are reconstructed from the measured angles with the
/// ground-truth model. Without noise the measured state is the simulated one.
pub fn generate_real(
    model: &RobotModel,
    truth: &ModelParams,
    initial: &State,
    actions: &[ControlInput],
    noise: &NoiseSpec,
    loaded: bool,
) -> Result<Trajectory> {
    if !(noise.encoder_std >= 0.0 && noise.encoder_bias >= 0.0) {
        return Err(Error::Value("noise magnitudes must be non-negative".into()));
    }
    let eff = model.apply_params(truth)?;
    let res = rollout(&eff, initial, actions, &RolloutConfig::new(actions.len()))?;
    let dt = model.control_dt();

    let (states, bodies) = if noise.is_noiseless() {
        (res.states, res.body_positions)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let n = model.n_joints();
        let bias: Vec<f64> = (0..n)
            .map(|_| {
                if noise.encoder_bias > 0.0 {
                    rng.gen_range(-noise.encoder_bias..=noise.encoder_bias)
                } else {
                    0.0
                }
            })
            .collect();
        let q: Vec<Vec<f64>> = res
            .states
            .iter()
            .map(|s| {
                s.q.iter()
                    .zip(&bias)
                    .map(|(&v, &b)| {
                        let e: f64 = rng.sample(StandardNormal);
                        v + b + noise.encoder_std * e
                    })
                    .collect()
            })
            .collect();
        let qdot = finite_difference_velocities(&q, dt);
        let bodies = q.iter().map(|qt| body_positions(&eff, qt)).collect();
        let states = q.into_iter().zip(qdot).map(|(q, qdot)| State { q, qdot }).collect();
        (states, bodies)
    };

    let mut meta = BTreeMap::new();
    meta.insert("noise_std".into(), noise.encoder_std.to_string());
    meta.insert("noise_bias".into(), noise.encoder_bias.to_string());
    meta.insert("noise_seed".into(), noise.seed.to_string());
    meta.insert(
        "ground_truth".into(),
        serde_json::to_string(truth).map_err(|e| Error::Format(e.to_string()))?,
    );
    let n_states = actions.len() + 1;
    Ok(Trajectory {
        dt,
        states,
        actions: actions.to_vec(),
        body_positions: bodies,
        loaded,
        meta,
        stance: StanceSchedule::all_swing(n_states),
    })
}

/// Ground-truth parameters stored by [`generate_real`], if present.
pub fn ground_truth(traj: &Trajectory) -> Result<Option<ModelParams>> {
    match traj.meta.get("ground_truth") {
        None => Ok(None),
        Some(text) => serde_json::from_str(text)
            .map(Some)
            .map_err(|e| Error::Format(format!("ground_truth metadata: {e}"))),
    }
}
