use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::objective::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageLabel {
    Stage1,
    Stage2,
    OneStage,
    CmaEs,
}

impl StageLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StageLabel::Stage1 => "stage1",
            StageLabel::Stage2 => "stage2",
            StageLabel::OneStage => "one-stage",
            StageLabel::CmaEs => "cma-es",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub stage_label: StageLabel,
    pub parameter_names: Vec<String>,
    pub initial_params: ModelParams,
    pub final_params: ModelParams,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_breakdown: LossBreakdown,
    pub iterations_run: usize,
    pub converged: bool,
    /// Seed of stochastic optimizers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub wall_time: f64,
    pub history: Vec<IterationRecord>,
}

/// Relative loss change below `CONVERGENCE_RTOL` over the trailing
/// `CONVERGENCE_WINDOW` iterations.
pub const CONVERGENCE_WINDOW: usize = 50;
pub const CONVERGENCE_RTOL: f64 = 1e-8;

pub(crate) fn loss_converged(losses: &[f64]) -> bool {
    let Some(&last) = losses.last() else {
        return false;
    };
    if last == 0.0 {
        return true;
    }
    if losses.len() <= CONVERGENCE_WINDOW {
        return false;
    }
    let earlier = losses[losses.len() - 1 - CONVERGENCE_WINDOW];
    (earlier - last).abs() <= CONVERGENCE_RTOL * earlier.abs()
}

impl IdentificationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// One row per history record; parameter cells are empty between snapshots.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_string(), "loss".to_string()];
        header.extend(self.parameter_names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for rec in &self.history {
            let mut row = vec![rec.iteration.to_string(), format!("{:.16e}", rec.loss)];
            match &rec.theta {
                Some(t) => row.extend(t.iter().map(|v| format!("{v:.16e}"))),
                None => row.extend(std::iter::repeat(String::new()).take(self.parameter_names.len())),
            }
            w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
