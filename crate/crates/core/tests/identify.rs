mod common;

use sysid_core::identify::{
    cma_identify, gd_identify, one_stage_identify, payload_mask, sample_fragments, two_stage_identify, CmaConfig,
    GdConfig, GdSettings, IdentificationReport, LearningRates, StageLabel,
};
use sysid_core::traj::{generate_real, Excitation, ExcitationProfile, NoiseSpec, PerturbationSetting};
use sysid_core::{ControlInput, Fragment, LossSpec, ModelParams, ParamKey, ParamLayout, RobotModel, State, Trajectory};

use common::Chain;

fn no_reg() -> LossSpec {
    LossSpec {
        regularization_enabled: false,
        ..LossSpec::default()
    }
}

fn short(iterations: usize) -> GdSettings {
    GdSettings {
        iterations,
        ..GdSettings::default()
    }
}

fn recorded(model: &RobotModel, truth: &ModelParams, seconds: f64, variant: u64, loaded: bool) -> Trajectory {
    let acts = Excitation {
        variant,
        ..Excitation::new(ExcitationProfile::MultiSine, seconds)
    }
    .actions(model)
    .unwrap();
    generate_real(model, truth, &State::at_rest(model.home()), &acts, &NoiseSpec::default(), loaded).unwrap()
}

fn setting(model: &RobotModel, preset: u32, loaded: bool) -> ModelParams {
    PerturbationSetting::preset(preset).unwrap().truth(model, loaded).unwrap()
}

fn frags(traj: &Trajectory, count: usize, horizon: usize) -> Vec<Fragment> {
    sample_fragments(&[traj], count, horizon).unwrap()
}

/// Report with the wall-clock time cleared.
fn timeless(mut r: IdentificationReport) -> IdentificationReport {
    r.wall_time = 0.0;
    r
}

#[test]
fn gd_reduces_loss_and_respects_mask() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let truth = setting(&model, 1, true);
    let f = frags(&recorded(&model, &truth, 3.0, 0, true), 2, 30);
    let active = payload_mask(&layout, &[model.link_index("torso").unwrap()]).unwrap();
    let init = ModelParams::nominal(layout.clone());
    let r = gd_identify(&model, &init, &f, &no_reg(), &GdConfig::new(short(40), active.clone()), StageLabel::Stage2)
        .unwrap();
    assert!(r.final_loss < r.initial_loss);
    let (a, b) = (init.flatten(), r.final_params.flatten());
    for i in 0..layout.dim() {
        if !active.contains(&i) {
            assert_eq!(a[i].to_bits(), b[i].to_bits());
        }
    }
    assert_eq!(r.history.last().unwrap().iteration, r.iterations_run);
}

#[test]
fn gd_is_deterministic() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let truth = setting(&model, 3, true);
    let f = frags(&recorded(&model, &truth, 2.0, 1, true), 2, 20);
    let active = payload_mask(&layout, &[3, 4, 5]).unwrap();
    let run = || {
        let init = ModelParams::nominal(layout.clone());
        timeless(
            gd_identify(&model, &init, &f, &no_reg(), &GdConfig::new(short(15), active.clone()), StageLabel::Stage2)
                .unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn truth_initialisation_is_stationary() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let truth = setting(&model, 2, true);
    let f = frags(&recorded(&model, &truth, 2.0, 0, true), 3, 20);
    let init = truth.to_layout(&layout);
    let all: Vec<usize> = (0..layout.dim()).collect();
    let r = gd_identify(&model, &init, &f, &no_reg(), &GdConfig::new(short(25), all), StageLabel::OneStage).unwrap();
    assert_eq!(r.final_params, init);
    assert_eq!(r.final_loss, 0.0);
    assert!(r.converged);
}

#[test]
fn mass_floor_is_enforced() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let truth = setting(&model, 1, true);
    let f = frags(&recorded(&model, &truth, 2.0, 0, true), 1, 20);
    let hand = layout.link_slot(model.link_index("left_hand").unwrap()).unwrap();
    let idx = layout.index(ParamKey::Mass(hand));
    let settings = GdSettings {
        learning_rates: LearningRates {
            mass: 50.0,
            ..LearningRates::default()
        },
        ..short(5)
    };
    let mut init = ModelParams::nominal(layout.clone());
    init.mass_delta[hand] = -0.2;
    let r = gd_identify(&model, &init, &f, &no_reg(), &GdConfig::new(settings, vec![idx]), StageLabel::Stage2).unwrap();
    let nominal = model.links()[model.link_index("left_hand").unwrap()].nominal_mass;
    assert!(nominal + r.final_params.flatten()[idx] >= sysid_core::identify::MIN_MASS - 1e-15);
}

#[test]
fn two_stage_freezes_non_payload_and_is_nominal_without_perturbation() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let nominal = ModelParams::nominal(ParamLayout::full(&model));
    let unloaded = frags(&recorded(&model, &nominal, 2.0, 0, false), 2, 20);
    let loaded = frags(&recorded(&model, &nominal, 2.0, 1, true), 2, 20);
    let payload = [3, 4, 5];
    let r = two_stage_identify(&model, &layout, &unloaded, &loaded, &no_reg(), &short(10), &short(10), &payload)
        .unwrap();
    let zero = ModelParams::nominal(layout.clone());
    assert_eq!(r.stage1.final_params, zero);
    assert_eq!(r.stage2.final_params, zero);

    let truth = setting(&model, 1, true);
    let loaded = frags(&recorded(&model, &truth, 2.0, 1, true), 2, 20);
    let r = two_stage_identify(&model, &layout, &unloaded, &loaded, &no_reg(), &short(3), &short(10), &payload)
        .unwrap();
    let mask = payload_mask(&layout, &payload).unwrap();
    let (a, b) = (r.stage1.final_params.flatten(), r.stage2.final_params.flatten());
    for i in 0..layout.dim() {
        if !mask.contains(&i) {
            assert_eq!(a[i].to_bits(), b[i].to_bits(), "{}", layout.name(i));
        }
    }
    assert_eq!(r.stage2.initial_params, r.stage1.final_params);
    assert!(r.stage2.final_loss < r.stage2.initial_loss);
}

#[test]
fn one_stage_moves_from_nominal() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let truth = setting(&model, 1, true);
    let loaded = frags(&recorded(&model, &truth, 2.0, 1, true), 2, 20);
    let r = one_stage_identify(&model, &layout, &loaded, &no_reg(), &short(10)).unwrap();
    assert_eq!(r.stage_label, StageLabel::OneStage);
    assert_eq!(r.initial_params, ModelParams::nominal(layout));
    assert!(r.final_loss < r.initial_loss);
}

#[test]
fn cma_same_seed_same_report() {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let truth = setting(&model, 1, true);
    let f = frags(&recorded(&model, &truth, 2.0, 0, true), 1, 20);
    let mask = payload_mask(&layout, &[3]).unwrap();
    let init = ModelParams::nominal(layout);
    let cfg = CmaConfig {
        iterations: 15,
        seed: 4,
        ..CmaConfig::default()
    };
    let a = cma_identify(&model, &init, &f, &no_reg(), &cfg, &mask).unwrap();
    let b = cma_identify(&model, &init, &f, &no_reg(), &cfg, &mask).unwrap();
    assert_eq!(timeless(a.clone()), timeless(b));
    assert!(a.final_loss <= a.initial_loss);
    let c = cma_identify(&model, &init, &f, &no_reg(), &CmaConfig { seed: 5, ..cfg }, &mask).unwrap();
    assert_ne!(a.final_params, c.final_params);
}

/// Two-link arm under PD control with a payload on both links.
fn arm() -> RobotModel {
    Chain {
        lengths: vec![0.5, 0.4],
        masses: vec![2.0, 1.0],
        com_y: vec![0.25, 0.2],
        inertias: vec![0.04, 0.02],
        kp: 40.0,
        kd: 1.0,
        dt_sim: 0.001,
        ..Chain::uniform(2)
    }
    .build()
}

fn arm_data(model: &RobotModel, truth: &ModelParams) -> Trajectory {
    let steps = 300;
    let dt = model.control_dt();
    let acts: Vec<ControlInput> = (0..steps)
        .map(|t| {
            let s = t as f64 * dt;
            ControlInput::new(vec![
                2.4 + 0.5 * (2.1 * s).sin() + 0.3 * (4.7 * s).sin(),
                0.4 + 0.6 * (3.3 * s).sin() + 0.2 * (1.3 * s).cos(),
            ])
        })
        .collect();
    generate_real(model, truth, &State::at_rest(vec![2.4, 0.6]), &acts, &NoiseSpec::default(), true).unwrap()
}

#[test]
fn doubling_the_batch_keeps_the_estimate() {
    let model = arm();
    let layout = ParamLayout::new(&model, vec![1, 2], vec![]).unwrap();
    let mut truth = ModelParams::nominal(ParamLayout::full(&model));
    truth.mass_delta = vec![0.6, 0.4];
    truth.com_delta = vec![[0.01, 0.02], [-0.01, 0.03]];
    let data = arm_data(&model, &truth);
    let all: Vec<usize> = (0..layout.dim()).collect();
    let settings = GdSettings {
        learning_rates: LearningRates {
            mass: 0.25,
            com: 0.005,
            ..LearningRates::default()
        },
        ..short(2500)
    };
    let fit = |b: usize| {
        let f = frags(&data, b, 40);
        gd_identify(&model, &ModelParams::nominal(layout.clone()), &f, &no_reg(), &GdConfig::new(settings, all.clone()), StageLabel::OneStage)
            .unwrap()
    };
    let (one, two) = (fit(3), fit(6));
    assert!(one.final_loss < 1e-6 * one.initial_loss, "{} vs {}", one.final_loss, one.initial_loss);
    assert!(two.final_loss < 1e-6 * two.initial_loss);
    for (a, b) in one.final_params.flatten().iter().zip(two.final_params.flatten()) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}
