use super::gd::{gd_identify, GdConfig, GdSettings};
use super::report::{IdentificationReport, StageLabel};
use super::sampler::Fragment;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamLayout, RobotModel};
use crate::objective::LossSpec;

/// Flat indices of the mass and CoM entries of `payload_links`.
pub fn payload_mask(layout: &ParamLayout, payload_links: &[usize]) -> Result<Vec<usize>> {
    if let Some(&l) = payload_links.iter().find(|&&l| layout.link_slot(l).is_none()) {
        return Err(Error::Value(format!("payload link {l} is not in the parameter layout")));
    }
    Ok(layout.mass_com_indices(payload_links))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageResult {
    pub stage1: IdentificationReport,
    pub stage2: IdentificationReport,
}

/// Base-model calibration on unloaded data over every parameter, followed by
/// payload-only fitting on loaded data starting from the calibrated model.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_identify(
    model: &RobotModel,
    layout: &ParamLayout,
    unloaded: &[Fragment],
    loaded: &[Fragment],
    spec: &LossSpec,
    stage1: &GdSettings,
    stage2: &GdSettings,
    payload_links: &[usize],
) -> Result<TwoStageResult> {
    if unloaded.is_empty() || loaded.is_empty() {
        return Err(Error::Value("two-stage identification needs unloaded and loaded fragments".into()));
    }
    let nominal = ModelParams::nominal(layout.clone());
    let all: Vec<usize> = (0..layout.dim()).collect();
    let r1 = gd_identify(model, &nominal, unloaded, spec, &GdConfig::new(*stage1, all), StageLabel::Stage1)?;
    let mask = payload_mask(layout, payload_links)?;
    let r2 = gd_identify(
        model,
        &r1.final_params,
        loaded,
        spec,
        &GdConfig::new(*stage2, mask),
        StageLabel::Stage2,
    )?;
    Ok(TwoStageResult { stage1: r1, stage2: r2 })
}

/// Every parameter fitted at once, from nominal, on loaded data only.
pub fn one_stage_identify(
    model: &RobotModel,
    layout: &ParamLayout,
    loaded: &[Fragment],
    spec: &LossSpec,
    settings: &GdSettings,
) -> Result<IdentificationReport> {
    if loaded.is_empty() {
        return Err(Error::Value("one-stage identification needs loaded fragments".into()));
    }
    let nominal = ModelParams::nominal(layout.clone());
    let all: Vec<usize> = (0..layout.dim()).collect();
    gd_identify(model, &nominal, loaded, spec, &GdConfig::new(*settings, all), StageLabel::OneStage)
}
