use std::path::Path;

use sysid_cli::commands::RunManifest;
use sysid_cli::report::{consolidate, consolidate_dirs};
use sysid_core::identify::{IdentificationReport, IterationRecord, StageLabel};
use sysid_core::{LossBreakdown, ModelParams, ParamLayout, RobotModel};

fn manifest(layout: &ParamLayout) -> RunManifest {
    let names = vec![layout.name(0), layout.name(1)];
    RunManifest {
        scenario: "golden".into(),
        payload_parameters: names,
        truth: vec![6.0, 2.4],
    }
}

fn report(layout: &ParamLayout, stage: StageLabel, values: [f64; 2], loss: f64, seed: Option<u64>) -> IdentificationReport {
    let mut p = ModelParams::nominal(layout.clone());
    p.mass_delta[0] = values[0];
    p.mass_delta[1] = values[1];
    IdentificationReport {
        stage_label: stage,
        parameter_names: layout.names(),
        initial_params: ModelParams::nominal(layout.clone()),
        final_params: p,
        initial_loss: 10.0,
        final_loss: loss,
        final_breakdown: LossBreakdown {
            track_all: loss,
            track_upper: 0.0,
            reg_com: 0.0,
            reg_mass: 0.0,
            reg_damp: 0.0,
            reg_fric: 0.0,
            total: loss,
        },
        iterations_run: 2,
        converged: false,
        seed,
        wall_time: 1.5,
        history: vec![
            IterationRecord { iteration: 0, loss: 10.0, theta: None },
            IterationRecord { iteration: 2, loss, theta: None },
        ],
    }
}

fn fixture() -> (RunManifest, Vec<(String, IdentificationReport)>) {
    let model = RobotModel::default_humanoid();
    let layout = ParamLayout::default_for(&model);
    let reports = vec![
        ("two-stage_stage1".to_string(), report(&layout, StageLabel::Stage1, [0.0, 0.0], 0.0, None)),
        ("two-stage_stage2".to_string(), report(&layout, StageLabel::Stage2, [5.99, 2.401], 1e-6, None)),
        ("one-stage".to_string(), report(&layout, StageLabel::OneStage, [5.5, 2.6], 2e-3, None)),
        ("cma-es_seed1".to_string(), report(&layout, StageLabel::CmaEs, [6.1, 2.3], 1e-4, Some(1))),
        ("cma-es_seed2".to_string(), report(&layout, StageLabel::CmaEs, [5.9, 2.5], 3e-4, Some(2))),
    ];
    (manifest(&layout), reports)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn mixed_modes_match_golden_tables() {
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        let (m, reports) = fixture();
        let r = consolidate(&m, &reports).unwrap();
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
        std::fs::write(dir.join("report.txt"), r.to_text()).unwrap();
        std::fs::write(dir.join("report.csv"), r.to_csv()).unwrap();
    }
    let (m, reports) = fixture();
    let r = consolidate(&m, &reports).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.to_text(), golden("report.txt"));
    assert_eq!(r.to_csv(), golden("report.csv"));
}

#[test]
fn single_gradient_run_has_zero_spread() {
    let (m, reports) = fixture();
    let r = consolidate(&m, &reports[..2]).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.rows[0].values.iter().all(|&(_, s)| s == 0.0));
    let csv = r.to_csv();
    let row = csv.lines().nth(2).unwrap();
    for (i, cell) in row.split(',').enumerate().skip(4) {
        if i % 2 == 1 {
            assert_eq!(cell, "0e0");
        }
    }
}

#[test]
fn cma_rows_report_mean_and_std() {
    let (m, reports) = fixture();
    let r = consolidate(&m, &reports[3..]).unwrap();
    let (mean, std) = r.rows[0].values[0];
    assert!((mean - 6.0).abs() < 1e-12);
    assert!((std - 0.1).abs() < 1e-12);
}

#[test]
fn reads_run_directories() {
    let (m, reports) = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("reports");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();
    for (name, r) in &reports {
        r.write_json(&dir.join(format!("{name}.json"))).unwrap();
        r.write_csv(&dir.join(format!("{name}.csv"))).unwrap();
    }
    let r = consolidate_dirs(&[tmp.path()]).unwrap();
    assert_eq!(r.to_text(), golden("report.txt"));
    r.write(tmp.path()).unwrap();
    assert!(tmp.path().join("convergence.csv").is_file());
}
