use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{loss_converged, IdentificationReport, IterationRecord, StageLabel};
use super::sampler::Fragment;
use crate::autodiff::{evaluate_loss, grad_rollout_loss};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamClass, ParamKey, RobotModel};
use crate::objective::LossSpec;

/// Lower bound kept on every effective link mass, kg.
pub const MIN_MASS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub mass: f64,
    pub com: f64,
    pub damping_scale: f64,
    pub friction_scale: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            mass: 0.03,
            com: 0.0002,
            damping_scale: 0.01,
            friction_scale: 0.01,
        }
    }
}

impl LearningRates {
    pub fn for_class(&self, class: ParamClass) -> f64 {
        match class {
            ParamClass::Mass => self.mass,
            ParamClass::Com => self.com,
            ParamClass::DampingScale => self.damping_scale,
            ParamClass::FrictionScale => self.friction_scale,
        }
    }
}

/// Optimizer settings shared by every GD stage; the active set is chosen
/// per stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdSettings {
    pub learning_rates: LearningRates,
    pub iterations: usize,
    pub clip_norm: Option<f64>,
    /// Parameter snapshot period in the history.
    pub snapshot_interval: usize,
}

impl Default for GdSettings {
    fn default() -> Self {
        GdSettings {
            learning_rates: LearningRates::default(),
            iterations: 2000,
            clip_norm: None,
            snapshot_interval: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub settings: GdSettings,
    pub active_mask: Vec<usize>,
}

impl GdConfig {
    pub fn new(settings: GdSettings, active_mask: Vec<usize>) -> Self {
        GdConfig { settings, active_mask }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let s = &self.settings;
        let lr = s.learning_rates;
        if [lr.mass, lr.com, lr.damping_scale, lr.friction_scale]
            .iter()
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::Value("learning rates must be positive".into()));
        }
        if s.iterations == 0 {
            return Err(Error::Value("iterations must be at least 1".into()));
        }
        if s.snapshot_interval == 0 {
            return Err(Error::Value("snapshot interval must be at least 1".into()));
        }
        if let Some(c) = s.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Value("clip_norm must be positive".into()));
            }
        }
        if self.active_mask.is_empty() {
            return Err(Error::Value("active mask is empty".into()));
        }
        if let Some(&bad) = self.active_mask.iter().find(|&&i| i >= dim) {
            return Err(Error::Value(format!("active index {bad} out of range (d = {dim})")));
        }
        let mut sorted = self.active_mask.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.active_mask.len() {
            return Err(Error::Value("active mask has duplicate indices".into()));
        }
        Ok(())
    }
}

/// Plain gradient descent on the fragment loss with per-class step sizes.
///
/// Stops early once the active gradient is exactly zero, since every later
/// iterate would be identical.
pub fn gd_identify(
    model: &RobotModel,
    init: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
    config: &GdConfig,
    stage: StageLabel,
) -> Result<IdentificationReport> {
    let started = Instant::now();
    init.validate(model)?;
    spec.validate()?;
    config.validate(init.dim())?;
    let settings = &config.settings;
    let layout = &init.layout;
    let active = &config.active_mask;
    let rates: Vec<f64> = active
        .iter()
        .map(|&i| settings.learning_rates.for_class(layout.class(i)))
        .collect();
    let mass_floor: Vec<Option<f64>> = active
        .iter()
        .map(|&i| match layout.key(i) {
            ParamKey::Mass(s) => Some(MIN_MASS - model.links()[layout.links[s]].nominal_mass),
            _ => None,
        })
        .collect();

    let mut theta = init.flatten();
    let mut history = Vec::with_capacity(settings.iterations + 1);
    let mut losses = Vec::with_capacity(settings.iterations + 1);
    let mut stationary = false;
    let mut iterations_run = 0;
    for it in 0..settings.iterations {
        let params = ModelParams::unflatten(layout.clone(), &theta)?;
        let g = grad_rollout_loss(model, &params, fragments, spec, active).map_err(|e| Error::AtIteration {
            iteration: it,
            source: Box::new(e),
        })?;
        if !g.loss_value.is_finite() || active.iter().any(|&i| !g.gradient[i].is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: it });
        }
        losses.push(g.loss_value);
        history.push(IterationRecord {
            iteration: it,
            loss: g.loss_value,
            theta: (it % settings.snapshot_interval == 0).then(|| theta.clone()),
        });
        if active.iter().all(|&i| g.gradient[i] == 0.0) {
            stationary = true;
            break;
        }
        let scale = match settings.clip_norm {
            Some(c) => {
                let norm = active.iter().map(|&i| g.gradient[i] * g.gradient[i]).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        for (s, &i) in active.iter().enumerate() {
            theta[i] -= rates[s] * scale * g.gradient[i];
            if let Some(floor) = mass_floor[s] {
                if theta[i] < floor {
                    theta[i] = floor;
                }
            }
        }
        iterations_run = it + 1;
    }

    let final_params = ModelParams::unflatten(layout.clone(), &theta)?;
    let final_breakdown = evaluate_loss(model, &final_params, fragments, spec).map_err(|e| Error::AtIteration {
        iteration: iterations_run,
        source: Box::new(e),
    })?;
    if !stationary {
        losses.push(final_breakdown.total);
        history.push(IterationRecord {
            iteration: iterations_run,
            loss: final_breakdown.total,
            theta: Some(theta.clone()),
        });
    } else if let Some(last) = history.last_mut() {
        last.theta = Some(theta.clone());
    }
    let converged = stationary || loss_converged(&losses);
    Ok(IdentificationReport {
        stage_label: stage,
        parameter_names: layout.names(),
        initial_params: init.clone(),
        final_params,
        initial_loss: losses[0],
        final_loss: final_breakdown.total,
        final_breakdown,
        iterations_run,
        converged,
        seed: None,
        wall_time: started.elapsed().as_secs_f64(),
        history,
    })
}
