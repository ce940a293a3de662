mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sysid_core::model::forward_kinematics;
use sysid_core::traj::{foot_height, foot_height_qp, process_trajectory, Excitation, ExcitationProfile};
use sysid_core::{rollout, EffectiveModel, RobotModel, RolloutConfig, StanceSchedule, State, Trajectory};

use common::Chain;

const L1: f64 = 0.45;
const L2: f64 = 0.4;

/// Two-link leg hanging from a fixed hip: `h(q) = L1 cos q1 + L2 cos(q1 + q2)`.
fn leg() -> RobotModel {
    Chain {
        lengths: vec![L1, L2],
        masses: vec![4.0, 3.0],
        com_y: vec![0.2, 0.18],
        inertias: vec![0.05, 0.04],
        ..Chain::uniform(2)
    }
    .build()
}

fn analytic_height(q: &[f64]) -> f64 {
    L1 * q[0].cos() + L2 * (q[0] + q[1]).cos()
}

fn analytic_jacobian(q: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 2, &[-L1 * q[0].sin() - L2 * (q[0] + q[1]).sin(), -L2 * (q[0] + q[1]).sin()])
}

/// Smallest correction on the constraint curve found by sweeping `dq1` and
/// solving for `q2` in closed form, then refining by golden-section search.
fn brute_force_min_norm(q: &[f64], target: f64) -> f64 {
    let norm_at = |d1: f64| -> f64 {
        let q1 = q[0] + d1;
        let c = (target - L1 * q1.cos()) / L2;
        if c.abs() > 1.0 {
            return f64::INFINITY;
        }
        let s = c.acos();
        [s - q1, -s - q1]
            .iter()
            .flat_map(|&q2| (-2..=2).map(move |w| q2 + w as f64 * std::f64::consts::TAU))
            .map(|q2| (d1 * d1 + (q2 - q[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let grid = 20_000;
    let (mut best, mut best_d) = (f64::INFINITY, 0.0);
    for i in 0..=grid {
        let d = -1.0 + 2.0 * i as f64 / grid as f64;
        let v = norm_at(d);
        if v < best {
            best = v;
            best_d = d;
        }
    }
    let (mut a, mut b) = (best_d - 2e-4, best_d + 2e-4);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if norm_at(c) < norm_at(d) {
            b = d;
        } else {
            a = c;
        }
    }
    norm_at(0.5 * (a + b)).min(best)
}

#[test]
fn foot_height_matches_closed_form() {
    let model = leg();
    let eff = model.nominal_effective();
    for q in [[0.3, 0.5], [-0.4, 1.1], [2.0, -0.7]] {
        assert!((foot_height(&eff, &q).unwrap() - analytic_height(&q)).abs() < 1e-14);
    }
}

#[test]
fn small_correction_matches_pseudo_inverse() {
    let model = leg();
    let eff = model.nominal_effective();
    let q = [2.6, 0.4];
    let h = analytic_height(&q);
    for offset in [1e-4, -2e-4, 5e-5] {
        let c = foot_height_qp(&eff, &q, &[0, 1], h + offset).unwrap();
        let j = analytic_jacobian(&q);
        let expected = j.clone().pseudo_inverse(1e-14).unwrap() * DVector::from_element(1, offset);
        for k in 0..2 {
            assert!((c.delta[k] - expected[k]).abs() < 1e-6, "joint {k}: {} vs {}", c.delta[k], expected[k]);
        }
    }
}

#[test]
fn correction_is_minimal_on_the_constraint() {
    let model = leg();
    let eff = model.nominal_effective();
    let q = [2.6, 0.4];
    for offset in [0.01, -0.01, 0.05] {
        let target = analytic_height(&q) + offset;
        let c = foot_height_qp(&eff, &q, &[0, 1], target).unwrap();
        assert!((analytic_height(&c.q) - target).abs() < 1e-9);
        assert!(c.stationarity(&[0, 1]) < 1e-8);
        let dq = DVector::from_column_slice(&c.delta);
        let j = analytic_jacobian(&c.q);
        let projected = j.clone().pseudo_inverse(1e-14).unwrap() * (&j * &dq);
        assert!((&dq - projected).norm() < 1e-6);
        let oracle = brute_force_min_norm(&q, target);
        assert!((dq.norm() - oracle).abs() < 1e-6, "QP norm {}, oracle {oracle}", dq.norm());
    }
}

/// Humanoid trajectory with the swing foot lifted, marked stance over its middle.
fn stance_trajectory(model: &RobotModel) -> (Trajectory, Vec<bool>) {
    let eff = model.nominal_effective();
    let mut home = model.home();
    let knee = model.joint_index("swing_knee").unwrap();
    home[knee] += 0.4;
    let mut acts = Excitation::new(ExcitationProfile::HoldAndLean, 1.0).actions(model).unwrap();
    for a in &mut acts {
        a.q_target[knee] += 0.4;
    }
    let res = rollout(&eff, &State::at_rest(home), &acts, &RolloutConfig { record_bodies: true, ..RolloutConfig::new(acts.len()) })
        .unwrap();
    let stance: Vec<bool> = (0..res.states.len()).map(|t| (10..30).contains(&t)).collect();
    let traj = Trajectory {
        dt: model.control_dt(),
        states: res.states,
        actions: acts,
        body_positions: res.body_positions,
        loaded: false,
        meta: Default::default(),
        stance: StanceSchedule(stance.clone()),
    };
    (traj, stance)
}

fn eff_of(model: &RobotModel) -> EffectiveModel<'_, f64> {
    model.nominal_effective()
}

#[test]
fn processing_grounds_stance_frames_only() {
    let model = RobotModel::default_humanoid();
    let eff = eff_of(&model);
    let active = model.foot_chain_joints();
    let (raw, stance) = stance_trajectory(&model);
    let target = 0.0;
    let out = process_trajectory(&eff, &raw, &active, target).unwrap();
    for (t, &s) in stance.iter().enumerate() {
        if s {
            assert!(foot_height(&eff, &out.states[t].q).unwrap().abs() < 1e-9);
            let c = foot_height_qp(&eff, &raw.states[t].q, &active, target).unwrap();
            assert!(c.stationarity(&active) < 1e-8);
            let kin = forward_kinematics(&eff, &out.states[t].q).unwrap();
            assert_eq!(out.body_positions[t], kin.coms);
        } else {
            assert_eq!(out.states[t].q, raw.states[t].q);
        }
        if t + 1 < stance.len() && t > 0 && !stance[t - 1] && !s && !stance[t + 1] {
            assert_eq!(out.states[t], raw.states[t]);
            assert_eq!(out.body_positions[t], raw.body_positions[t]);
        }
    }
    for t in 0..raw.states.len() {
        for k in 0..model.n_joints() {
            if !active.contains(&k) {
                assert_eq!(out.states[t].q[k], raw.states[t].q[k]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qp_solution_satisfies_kkt(q1 in 2.3..2.9f64, q2 in 0.4..1.2f64, offset in -0.01..0.01f64) {
        let model = leg();
        let eff = model.nominal_effective();
        let q = [q1, q2];
        let target = analytic_height(&q) + offset;
        let c = foot_height_qp(&eff, &q, &[0, 1], target).unwrap();
        prop_assert!((analytic_height(&c.q) - target).abs() < 1e-9);
        prop_assert!(c.stationarity(&[0, 1]) < 1e-8);
    }
}
