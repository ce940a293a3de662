#![allow(dead_code)]

use rand::Rng;
use sysid_core::model::{JointSpec, LinkSpec, LinkTag, ModelDocument, RobotModel};

/// Serial chain hanging from a fixed base at the origin. Link `k` has length
/// `lengths[k]`, its CoM at `(0, com_y[k])` and joints have no actuation gain
/// to speak of.
pub struct Chain {
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub com_y: Vec<f64>,
    pub inertias: Vec<f64>,
    pub gravity: f64,
    pub damping: f64,
    pub friction: f64,
    pub kp: f64,
    pub kd: f64,
    pub dt_sim: f64,
}

impl Chain {
    pub fn uniform(n: usize) -> Self {
        Chain {
            lengths: vec![1.0; n],
            masses: vec![1.0; n],
            com_y: vec![0.5; n],
            inertias: vec![1.0 / 12.0; n],
            gravity: 9.81,
            damping: 0.0,
            friction: 0.0,
            kp: 1e-9,
            kd: 0.0,
            dt_sim: 0.0005,
        }
    }

    pub fn build(&self) -> RobotModel {
        let n = self.lengths.len();
        let mut links = vec![LinkSpec {
            name: "base".into(),
            parent: None,
            joint_anchor: [0.0, 0.0],
            length: 0.0,
            nominal_mass: 1.0,
            nominal_com: [0.0, 0.0],
            nominal_inertia: 1.0,
            tag: LinkTag::FixedFoot,
        }];
        let mut joints = Vec::new();
        for k in 0..n {
            links.push(LinkSpec {
                name: format!("link{k}"),
                parent: Some(k),
                joint_anchor: [0.0, if k == 0 { 0.0 } else { self.lengths[k - 1] }],
                length: self.lengths[k],
                nominal_mass: self.masses[k],
                nominal_com: [0.0, self.com_y[k]],
                nominal_inertia: self.inertias[k],
                tag: if k + 1 == n && n > 1 { LinkTag::FreeFoot } else { LinkTag::UpperBody },
            });
            joints.push(JointSpec {
                name: format!("joint{k}"),
                child_link: k + 1,
                nominal_damping: self.damping,
                nominal_friction: self.friction,
                kp: self.kp,
                kd: self.kd,
                torque_limit: 1000.0,
                angle_limits: [-100.0, 100.0],
            });
        }
        RobotModel::build(ModelDocument {
            links,
            joints,
            gravity: [0.0, -self.gravity],
            dt_sim: self.dt_sim,
            substeps: 10,
            friction_velocity: 0.05,
            home: None,
        })
        .expect("chain document is valid")
    }
}

/// Configuration drawn uniformly inside the joint limits, capped at ±π.
pub fn random_q<R: Rng>(model: &RobotModel, rng: &mut R) -> Vec<f64> {
    model
        .joints()
        .iter()
        .map(|j| {
            let lo = j.angle_limits[0].max(-std::f64::consts::PI);
            let hi = j.angle_limits[1].min(std::f64::consts::PI);
            rng.gen_range(lo..hi)
        })
        .collect()
}

pub fn random_qdot<R: Rng>(model: &RobotModel, rng: &mut R, scale: f64) -> Vec<f64> {
    (0..model.n_joints()).map(|_| rng.gen_range(-scale..scale)).collect()
}
