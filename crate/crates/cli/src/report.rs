//! Consolidated result tables across identification runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sysid_core::identify::{IdentificationReport, StageLabel};

use crate::commands::{collect_reports, mean_std, Mode, RunManifest};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub mode: Mode,
    pub runs: usize,
    pub final_loss: (f64, f64),
    /// Mean and standard deviation of each payload delta.
    pub values: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedReport {
    pub scenario: String,
    pub parameters: Vec<String>,
    pub truth: Vec<f64>,
    pub rows: Vec<ModeRow>,
    /// `(run label, iteration, loss)` over every included report.
    pub convergence: Vec<(String, usize, f64)>,
}

fn mode_of(label: StageLabel) -> Option<Mode> {
    match label {
        StageLabel::Stage1 => None,
        StageLabel::Stage2 => Some(Mode::TwoStage),
        StageLabel::OneStage => Some(Mode::OneStage),
        StageLabel::CmaEs => Some(Mode::CmaEs),
    }
}

/// Groups final estimates by mode. Stage-1 reports only contribute
/// convergence curves.
pub fn consolidate(
    manifest: &RunManifest,
    reports: &[(String, IdentificationReport)],
) -> CliResult<ConsolidatedReport> {
    let mut groups: BTreeMap<usize, (Mode, Vec<&IdentificationReport>)> = BTreeMap::new();
    let mut convergence = Vec::new();
    for (label, r) in reports {
        convergence.extend(r.history.iter().map(|h| (label.clone(), h.iteration, h.loss)));
        if let Some(m) = mode_of(r.stage_label) {
            groups.entry(m as usize).or_insert_with(|| (m, Vec::new())).1.push(r);
        }
    }
    let mut rows = Vec::new();
    for (_, (mode, runs)) in groups {
        let mut values = Vec::with_capacity(manifest.payload_parameters.len());
        for name in &manifest.payload_parameters {
            let mut vals = Vec::with_capacity(runs.len());
            for r in &runs {
                let i = r.parameter_names.iter().position(|n| n == name).ok_or_else(|| {
                    CliError::Config(format!("report for {} lacks parameter {name}", mode.as_str()))
                })?;
                vals.push(r.final_params.flatten()[i]);
            }
            values.push(mean_std(&vals));
        }
        let losses: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
        rows.push(ModeRow {
            mode,
            runs: runs.len(),
            final_loss: mean_std(&losses),
            values,
        });
    }
    Ok(ConsolidatedReport {
        scenario: manifest.scenario.clone(),
        parameters: manifest.payload_parameters.clone(),
        truth: manifest.truth.clone(),
        rows,
        convergence,
    })
}

/// Reads every run directory and consolidates them. All runs must share one
/// scenario manifest.
pub fn consolidate_dirs(run_dirs: &[&Path]) -> CliResult<ConsolidatedReport> {
    let mut manifest: Option<RunManifest> = None;
    let mut all = Vec::new();
    for dir in run_dirs {
        let (m, reports) = collect_reports(dir)?;
        let m = m.ok_or_else(|| CliError::Config(format!("{} has no reports/manifest.json", dir.display())))?;
        match &manifest {
            Some(prev) if prev.payload_parameters != m.payload_parameters => {
                return Err(CliError::Config(format!(
                    "{} was identified over different parameters",
                    dir.display()
                )))
            }
            Some(_) => {}
            None => manifest = Some(m),
        }
        let prefix = if run_dirs.len() > 1 { format!("{}/", dir.display()) } else { String::new() };
        all.extend(reports.into_iter().map(|(k, r)| (format!("{prefix}{k}"), r)));
    }
    let manifest = manifest.ok_or_else(|| CliError::Config("no run directories given".into()))?;
    consolidate(&manifest, &all)
}

impl ConsolidatedReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "scenario: {}", self.scenario).unwrap();
        writeln!(out, "estimated deltas from nominal (mean ± std over runs)").unwrap();
        write!(out, "{:<10} {:>4} {:>24}", "mode", "runs", "final loss").unwrap();
        for p in &self.parameters {
            write!(out, " {p:>24}").unwrap();
        }
        out.push('\n');
        write!(out, "{:<10} {:>4} {:>24}", "truth", "-", "-").unwrap();
        for t in &self.truth {
            write!(out, " {:>24}", format!("{t:+.6}")).unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            let loss = format!("{:.3e} ± {:.1e}", row.final_loss.0, row.final_loss.1);
            write!(out, "{:<10} {:>4} {:>24}", row.mode.as_str(), row.runs, loss).unwrap();
            for (m, s) in &row.values {
                write!(out, " {:>24}", format!("{m:+.6} ± {s:.6}")).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,runs,final_loss_mean,final_loss_std");
        for p in &self.parameters {
            write!(out, ",{p}_mean,{p}_std").unwrap();
        }
        out.push('\n');
        write!(out, "truth,,,").unwrap();
        for t in &self.truth {
            write!(out, ",{t:e},0").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(
                out,
                "{},{},{:e},{:e}",
                row.mode.as_str(),
                row.runs,
                row.final_loss.0,
                row.final_loss.1
            )
            .unwrap();
            for (m, s) in &row.values {
                write!(out, ",{m:e},{s:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("run,iteration,loss\n");
        for (run, it, loss) in &self.convergence {
            writeln!(out, "{run},{it},{loss:e}").unwrap();
        }
        out
    }

    /// Writes `report.txt`, `report.csv` and `convergence.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, text) in [
            ("report.txt", self.to_text()),
            ("report.csv", self.to_csv()),
            ("convergence.csv", self.convergence_csv()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}
