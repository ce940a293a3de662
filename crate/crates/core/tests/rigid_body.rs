mod common;

use std::f64::consts::PI;

use nalgebra::{DMatrix, Isometry2, Point2, Vector2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sysid_core::dynamics::{bias_forces, kinetic_energy, mass_matrix};
use sysid_core::model::forward_kinematics;
use sysid_core::traj::{Excitation, ExcitationProfile};
use sysid_core::{rollout, step, ControlInput, EffectiveModel, RobotModel, RolloutConfig, State};

use common::{random_q, random_qdot, Chain};

fn humanoid() -> RobotModel {
    RobotModel::default_humanoid()
}

/// Link poses from an explicit transform chain.
fn pose_chain(model: &RobotModel, q: &[f64]) -> Vec<Isometry2<f64>> {
    let mut poses: Vec<Isometry2<f64>> = Vec::with_capacity(model.n_links());
    for (i, link) in model.links().iter().enumerate() {
        let parent = link.parent.map_or_else(Isometry2::identity, |p| poses[p]);
        let angle = model.link_joint(i).map_or(0.0, |k| q[k]);
        let local = Isometry2::new(Vector2::new(link.joint_anchor[0], link.joint_anchor[1]), angle);
        poses.push(parent * local);
    }
    poses
}

fn potential(eff: &EffectiveModel<'_, f64>, q: &[f64]) -> f64 {
    let g = eff.model.gravity();
    let kin = forward_kinematics(eff, q).unwrap();
    kin.coms
        .iter()
        .zip(&eff.mass)
        .map(|(c, m)| -m * (g[0] * c[0] + g[1] * c[1]))
        .sum()
}

/// Mass matrix assembled from per-link CoM and angular Jacobians.
fn jacobian_mass_matrix(eff: &EffectiveModel<'_, f64>, q: &[f64]) -> DMatrix<f64> {
    let model = eff.model;
    let n = model.n_joints();
    let kin = forward_kinematics(eff, q).unwrap();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..model.n_links() {
        let path = model.joint_path(i);
        if path.is_empty() {
            continue;
        }
        let mut jv = DMatrix::zeros(2, n);
        let mut jw = DMatrix::zeros(1, n);
        for &k in &path {
            let o = kin.origins[model.joints()[k].child_link];
            let r = [kin.coms[i][0] - o[0], kin.coms[i][1] - o[1]];
            jv[(0, k)] = -r[1];
            jv[(1, k)] = r[0];
            jw[(0, k)] = 1.0;
        }
        m += jv.transpose() * &jv * eff.mass[i] + jw.transpose() * &jw * eff.inertia[i];
    }
    m
}

fn to_matrix(flat: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, flat)
}

#[test]
fn forward_kinematics_matches_transform_chain() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let q = random_q(&model, &mut rng);
        let kin = forward_kinematics(&eff, &q).unwrap();
        let poses = pose_chain(&model, &q);
        for (i, link) in model.links().iter().enumerate() {
            let o = poses[i].translation.vector;
            let c = poses[i] * Point2::new(link.nominal_com[0], link.nominal_com[1]);
            let d = poses[i] * Point2::new(0.0, link.length);
            let distal = kin.distal(&model, i);
            assert!((kin.origins[i][0] - o.x).abs() < 1e-12 && (kin.origins[i][1] - o.y).abs() < 1e-12);
            assert!((kin.coms[i][0] - c.x).abs() < 1e-12 && (kin.coms[i][1] - c.y).abs() < 1e-12);
            assert!((distal[0] - d.x).abs() < 1e-12 && (distal[1] - d.y).abs() < 1e-12);
        }
    }
}

#[test]
fn mass_matrix_matches_jacobian_assembly() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let n = model.n_joints();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let q = random_q(&model, &mut rng);
        let m = to_matrix(&mass_matrix(&eff, &q).unwrap(), n);
        let oracle = jacobian_mass_matrix(&eff, &q);
        let err = (&m - &oracle).abs().max();
        assert!(err < 1e-10 * oracle.abs().max(), "max deviation {err:e}");
    }
}

#[test]
fn mass_matrix_symmetric_positive_definite() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let n = model.n_joints();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let q = random_q(&model, &mut rng);
        let m = to_matrix(&mass_matrix(&eff, &q).unwrap(), n);
        assert!((&m - m.transpose()).abs().max() < 1e-12);
        assert!(m.clone().cholesky().is_some());
    }
}

#[test]
fn bias_forces_match_lagrangian_differences() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let n = model.n_joints();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-6;
    let mm = |q: &[f64]| to_matrix(&mass_matrix(&eff, q).unwrap(), n);
    for _ in 0..20 {
        let q = random_q(&model, &mut rng);
        let qd = random_qdot(&model, &mut rng, 2.0);
        let qdv = nalgebra::DVector::from_column_slice(&qd);
        let shifted = |dir: &[f64], s: f64| -> Vec<f64> { q.iter().zip(dir).map(|(a, d)| a + s * d).collect() };
        let mdot = (mm(&shifted(&qd, h)) - mm(&shifted(&qd, -h))) / (2.0 * h);
        let mut oracle = &mdot * &qdv;
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let dm = (mm(&shifted(&e, h)) - mm(&shifted(&e, -h))) / (2.0 * h);
            let dt = 0.5 * qdv.dot(&(&dm * &qdv));
            let dv = (potential(&eff, &shifted(&e, h)) - potential(&eff, &shifted(&e, -h))) / (2.0 * h);
            oracle[i] += dv - dt;
        }
        let c = bias_forces(&eff, &q, &qd).unwrap();
        for i in 0..n {
            let scale = oracle[i].abs().max(1.0);
            assert!((c[i] - oracle[i]).abs() < 1e-6 * scale, "coordinate {i}: {} vs {}", c[i], oracle[i]);
        }
    }
}

fn hanging_actions(model: &RobotModel, steps: usize) -> Vec<ControlInput> {
    vec![ControlInput::new(vec![0.0; model.n_joints()]); steps]
}

#[test]
fn pendulum_small_oscillation_frequency() {
    let (m, lc, ic, g) = (2.0, 0.7, 0.05, 9.81);
    let model = Chain {
        masses: vec![m],
        com_y: vec![-lc],
        inertias: vec![ic],
        gravity: g,
        ..Chain::uniform(1)
    }
    .build();
    let eff = model.nominal_effective();
    let expected = (m * g * lc / (ic + m * lc * lc)).sqrt() / (2.0 * PI);
    let steps = 4000;
    let init = State::at_rest(vec![0.05]);
    let res = rollout(&eff, &init, &hanging_actions(&model, steps), &RolloutConfig::new(steps)).unwrap();
    let dt = model.control_dt();
    let mut crossings = Vec::new();
    for t in 1..res.states.len() {
        let (a, b) = (res.states[t - 1].q[0], res.states[t].q[0]);
        if a > 0.0 && b <= 0.0 {
            crossings.push((t as f64 - 1.0 + a / (a - b)) * dt);
        }
    }
    assert!(crossings.len() >= 5);
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let measured = 1.0 / period;
    let rel = (measured - expected).abs() / expected;
    assert!(rel < 0.01, "measured {measured} Hz, expected {expected} Hz");
}

fn total_energy(eff: &EffectiveModel<'_, f64>, s: &State, floor: f64) -> f64 {
    kinetic_energy(eff, s) + potential(eff, &s.q) - floor
}

#[test]
fn conservative_chain_energy_drift() {
    let model = Chain::uniform(2).build();
    let eff = model.nominal_effective();
    let floor = potential(&eff, &[PI, 0.0]);
    let init = State::at_rest(vec![2.2, 0.4]);
    // 100 control steps of 10 substeps each.
    let steps = 100;
    let res = rollout(&eff, &init, &hanging_actions(&model, steps), &RolloutConfig::new(steps)).unwrap();
    let e0 = total_energy(&eff, &init, floor);
    let worst = res
        .states
        .iter()
        .map(|s| (total_energy(&eff, s, floor) - e0).abs() / e0)
        .fold(0.0, f64::max);
    assert!(worst < 0.005, "relative drift {worst}");
}

#[test]
fn damping_and_friction_dissipate_energy() {
    let model = Chain {
        damping: 2.0,
        friction: 0.5,
        ..Chain::uniform(2)
    }
    .build();
    let eff = model.nominal_effective();
    let floor = potential(&eff, &[PI, 0.0]);
    let init = State::at_rest(vec![2.2, 0.4]);
    let steps = 400;
    let res = rollout(&eff, &init, &hanging_actions(&model, steps), &RolloutConfig::new(steps)).unwrap();
    let e: Vec<f64> = res.states.iter().map(|s| total_energy(&eff, s, floor)).collect();
    assert!(e[steps] < 0.5 * e[0]);
    for w in e.windows(2) {
        assert!(w[1] <= w[0] + 1e-3 * e[0], "energy rose from {} to {}", w[0], w[1]);
    }
}

fn excitation(model: &RobotModel, seconds: f64) -> Vec<ControlInput> {
    Excitation::new(ExcitationProfile::MultiSine, seconds).actions(model).unwrap()
}

#[test]
fn rollouts_compose() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let acts = excitation(&model, 2.0);
    let init = State::at_rest(model.home());
    let whole = rollout(&eff, &init, &acts[..60], &RolloutConfig::new(60)).unwrap();
    let first = rollout(&eff, &init, &acts[..25], &RolloutConfig::new(25)).unwrap();
    let second = rollout(&eff, &first.states[25], &acts[25..60], &RolloutConfig::new(35)).unwrap();
    assert_eq!(whole.states[..=25], first.states[..]);
    assert_eq!(whole.states[25..], second.states[..]);
}

#[test]
fn horizon_one_is_a_step() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let acts = excitation(&model, 1.0);
    let init = State::at_rest(model.home());
    let r = rollout(&eff, &init, &acts[7..8], &RolloutConfig::new(1)).unwrap();
    assert_eq!(r.states[1], step(&eff, &init, &acts[7]).unwrap());
}

#[test]
fn rollout_is_deterministic() {
    let model = humanoid();
    let eff = model.nominal_effective();
    let acts = excitation(&model, 2.0);
    let init = State::at_rest(model.home());
    let cfg = RolloutConfig::new(acts.len());
    assert_eq!(rollout(&eff, &init, &acts, &cfg).unwrap(), rollout(&eff, &init, &acts, &cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_matrix_is_spd_anywhere(q in proptest::collection::vec(-PI..PI, 7)) {
        let model = humanoid();
        let eff = model.nominal_effective();
        let m = to_matrix(&mass_matrix(&eff, &q).unwrap(), 7);
        prop_assert!((&m - m.transpose()).abs().max() < 1e-12);
        prop_assert!(m.cholesky().is_some());
    }

    #[test]
    fn com_stays_rigidly_attached(q in proptest::collection::vec(-PI..PI, 7)) {
        let model = humanoid();
        let eff = model.nominal_effective();
        let kin = forward_kinematics(&eff, &q).unwrap();
        for (i, link) in model.links().iter().enumerate() {
            let d = ((kin.coms[i][0] - kin.origins[i][0]).powi(2) + (kin.coms[i][1] - kin.origins[i][1]).powi(2)).sqrt();
            let r = (link.nominal_com[0].powi(2) + link.nominal_com[1].powi(2)).sqrt();
            prop_assert!((d - r).abs() < 1e-12);
        }
    }

    #[test]
    fn kinetic_energy_is_nonnegative(
        q in proptest::collection::vec(-PI..PI, 7),
        qd in proptest::collection::vec(-5.0..5.0f64, 7),
    ) {
        let model = humanoid();
        let eff = model.nominal_effective();
        let s = State { q, qdot: qd };
        prop_assert!(kinetic_energy(&eff, &s) >= 0.0);
    }
}
