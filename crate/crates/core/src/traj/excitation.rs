use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationProfile {
    /// Sum of incommensurate sines on every joint.
    MultiSine,
    /// Home posture, then a slow torso lean.
    HoldAndLean,
    /// Coordinated ankle/knee/hip squatting.
    SquatWave,
}

/// Open-loop target generator around the model's home posture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub profile: ExcitationProfile,
    /// Seconds of motion.
    pub duration: f64,
    /// Scales every amplitude.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Selects the sine phases of the multi-sine profile.
    #[serde(default)]
    pub variant: u64,
    /// Per-joint multi-sine amplitudes (rad), overriding the gain-based defaults.
    #[serde(default)]
    pub joint_amplitudes: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

const FREQUENCIES: [f64; 7] = [0.23, 0.37, 0.61, 0.83, 1.07, 1.31, 1.53];
const RAMP: f64 = 1.0;
const LEAN: f64 = 0.2;

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Per-joint sine amplitude (rad) from the joint's role: larger for light,
/// weakly actuated joints.
fn joint_amplitude(model: &RobotModel, joint: usize) -> f64 {
    let kp = model.joints()[joint].kp;
    if kp >= 500.0 {
        0.08
    } else if kp >= 250.0 {
        0.15
    } else if kp >= 100.0 {
        0.3
    } else {
        0.6
    }
}

impl Excitation {
    pub fn new(profile: ExcitationProfile, duration: f64) -> Self {
        Excitation {
            profile,
            duration,
            amplitude: 1.0,
            variant: 0,
            joint_amplitudes: None,
        }
    }

    pub fn steps(&self, model: &RobotModel) -> usize {
        (self.duration / model.control_dt()).round() as usize
    }

    /// Joint targets for every control step; each target is clamped into the
    /// joint limits.
    pub fn actions(&self, model: &RobotModel) -> Result<Vec<ControlInput>> {
        if !(self.duration > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Value("excitation needs a positive duration and finite amplitude".into()));
        }
        let n = model.n_joints();
        if let Some(a) = &self.joint_amplitudes {
            if a.len() != n {
                return Err(Error::dim("joint amplitudes", n, a.len()));
            }
        }
        let home = model.home();
        let dt = model.control_dt();
        let steps = self.steps(model);

        let mut rng = ChaCha8Rng::seed_from_u64(self.variant);
        let phases: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0..2.0 * PI)).collect())
            .collect();
        let hip = model.joints().iter().position(|j| j.name == "hip");
        let squat: Vec<f64> = model
            .joints()
            .iter()
            .map(|j| match j.name.as_str() {
                "ankle" => 0.25,
                "knee" => -0.5,
                "hip" => 0.3,
                _ => 0.0,
            })
            .collect();

        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let time = (t + 1) as f64 * dt;
            let mut target = home.clone();
            match self.profile {
                ExcitationProfile::MultiSine => {
                    let ramp = smoothstep(time / RAMP);
                    for k in 0..n {
                        let base = match &self.joint_amplitudes {
                            Some(a) => a[k],
                            None => joint_amplitude(model, k),
                        };
                        let a = self.amplitude * base / 3.0;
                        let mut s = 0.0;
                        for (i, &phi) in phases[k].iter().enumerate() {
                            let f = FREQUENCIES[(k + 2 * i) % FREQUENCIES.len()];
                            s += (2.0 * PI * f * time + phi).sin() - phi.sin();
                        }
                        target[k] += ramp * a * s;
                    }
                }
                ExcitationProfile::HoldAndLean => {
                    let hold = 0.5 * self.duration.min(2.0);
                    if let Some(h) = hip {
                        target[h] += self.amplitude * LEAN * smoothstep(time - hold);
                    }
                }
                ExcitationProfile::SquatWave => {
                    let s = 0.5 * (1.0 - (2.0 * PI * 0.4 * time).cos());
                    for k in 0..n {
                        target[k] += self.amplitude * squat[k] * s;
                    }
                }
            }
            for (k, j) in model.joints().iter().enumerate() {
                target[k] = target[k].clamp(j.angle_limits[0], j.angle_limits[1]);
            }
            out.push(ControlInput::new(target));
        }
        Ok(out)
    }
}
