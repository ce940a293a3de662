//! Shared fixtures for the benchmarks.

use sysid_core::identify::{sample_fragments, Fragment};
use sysid_core::model::{ParamLayout, RobotModel, State};
use sysid_core::traj::{generate_real, Excitation, ExcitationProfile, NoiseSpec, PerturbationSetting};
use sysid_core::ControlInput;

pub fn model() -> RobotModel {
    RobotModel::default_humanoid()
}

pub fn actions(model: &RobotModel, seconds: f64) -> Vec<ControlInput> {
    Excitation::new(ExcitationProfile::MultiSine, seconds)
        .actions(model)
        .expect("default excitation is valid")
}

/// `count` fragments of `horizon` steps from loaded setting-1 data.
pub fn fragments(model: &RobotModel, count: usize, horizon: usize) -> Vec<Fragment> {
    let truth = PerturbationSetting::preset(1)
        .and_then(|p| p.truth(model, true))
        .expect("preset exists");
    let acts = actions(model, 6.0);
    let traj = generate_real(model, &truth, &State::at_rest(model.home()), &acts, &NoiseSpec::default(), true)
        .expect("nominal rollout is stable");
    sample_fragments(&[&traj], count, horizon).expect("trajectory is long enough")
}

pub fn layouts(model: &RobotModel) -> [(&'static str, ParamLayout); 2] {
    [("default", ParamLayout::default_for(model)), ("full", ParamLayout::full(model))]
}
