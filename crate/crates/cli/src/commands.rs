//! Subcommand implementations. Each returns the text it wants printed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sysid_core::autodiff::{fd_gradient, grad_all, max_relative_error};
use sysid_core::identify::{
    cma_identify, one_stage_identify, payload_mask, sample_fragments, two_stage_identify, CmaConfig, Fragment,
    IdentificationReport,
};
use sysid_core::model::{ModelParams, ParamLayout, RobotModel, State};
use sysid_core::traj::{
    generate_real, ground_truth, load_trajectory, process_trajectory, save_trajectory, NoiseSpec,
    PerturbationSetting, Trajectory,
};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TwoStage,
    OneStage,
    CmaEs,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TwoStage => "two-stage",
            Mode::OneStage => "one-stage",
            Mode::CmaEs => "cma-es",
        }
    }
}

/// Ground-truth parameters of a generated scenario, over every movable link
/// and joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub setting: PerturbationSetting,
    pub unloaded: ModelParams,
    pub loaded: ModelParams,
}

/// Written next to the reports so `report` can build tables without the
/// scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub payload_parameters: Vec<String>,
    /// Ground-truth value of each payload parameter.
    pub truth: Vec<f64>,
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

fn trajectory_name(loaded: bool, index: usize) -> String {
    format!("{}_{index}.csv", if loaded { "loaded" } else { "unloaded" })
}

/// Derived per-trajectory noise seed so every file gets independent noise.
fn noise_for(base: &NoiseSpec, loaded: bool, index: usize) -> NoiseSpec {
    NoiseSpec {
        seed: base.seed.wrapping_mul(1000).wrapping_add(2 * index as u64 + u64::from(loaded)),
        ..*base
    }
}

pub fn generate(cfg: &ScenarioConfig) -> CliResult<String> {
    let model = cfg.model()?;
    let setting = cfg.perturbation.resolve()?;
    let truth = GroundTruth {
        unloaded: setting.truth(&model, false)?,
        loaded: setting.truth(&model, true)?,
        setting,
    };
    let raw = cfg.raw_dir();
    std::fs::create_dir_all(&raw).map_err(|e| CliError::io(&raw, e))?;
    let init = State::at_rest(model.home());
    let mut out = String::new();
    for (i, ex) in cfg.excitations.iter().enumerate() {
        let actions = ex.actions(&model)?;
        for loaded in [false, true] {
            let params = if loaded { &truth.loaded } else { &truth.unloaded };
            let mut traj = generate_real(&model, params, &init, &actions, &noise_for(&cfg.noise, loaded, i), loaded)?;
            traj.meta.insert("scenario".into(), cfg.name.clone());
            traj.meta.insert("excitation".into(), i.to_string());
            let path = raw.join(trajectory_name(loaded, i));
            save_trajectory(&traj, &path)?;
            writeln!(out, "wrote {} ({} steps)", path.display(), traj.len()).unwrap();
        }
    }
    let gt = cfg.ground_truth_path();
    write_text(&gt, &to_json(&truth))?;
    writeln!(out, "wrote {}", gt.display()).unwrap();
    Ok(out)
}

fn list_trajectories(dir: &Path, loaded: bool) -> CliResult<Vec<PathBuf>> {
    let prefix = if loaded { "loaded_" } else { "unloaded_" };
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(idx) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|r| r.parse::<usize>().ok())
        {
            found.push((idx, entry.path()));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

pub fn process(cfg: &ScenarioConfig) -> CliResult<String> {
    let model = cfg.model()?;
    let active = cfg.foot_joints(&model)?;
    let raw = cfg.raw_dir();
    let dest = cfg.processed_dir();
    std::fs::create_dir_all(&dest).map_err(|e| CliError::io(&dest, e))?;
    let mut out = String::new();
    for loaded in [false, true] {
        let files = list_trajectories(&raw, loaded)?;
        if files.is_empty() {
            return Err(CliError::Config(format!(
                "no {} trajectories in {}; run `generate` first",
                if loaded { "loaded" } else { "unloaded" },
                raw.display()
            )));
        }
        for path in files {
            let traj = load_trajectory(&path)?;
            let params = ground_truth(&traj)?.unwrap_or_else(|| ModelParams::nominal(ParamLayout::full(&model)));
            let eff = model.apply_params(&params)?;
            let mut done = process_trajectory(&eff, &traj, &active, cfg.foot.target_height)?;
            done.meta.insert("processed".into(), "true".into());
            let stance = traj.stance.0.iter().filter(|&&s| s).count();
            let target = dest.join(path.file_name().expect("listed files have names"));
            save_trajectory(&done, &target)?;
            writeln!(out, "wrote {} ({stance} stance steps corrected)", target.display()).unwrap();
        }
    }
    Ok(out)
}

/// Processed trajectories when present, raw ones otherwise.
pub fn load_sources(cfg: &ScenarioConfig, loaded: bool) -> CliResult<Vec<Trajectory>> {
    let processed = cfg.processed_dir();
    let dir = if processed.is_dir() { processed } else { cfg.raw_dir() };
    if !dir.is_dir() {
        return Err(CliError::Config(format!(
            "no trajectories found under {}; run `generate` first",
            cfg.output_dir.display()
        )));
    }
    let files = list_trajectories(&dir, loaded)?;
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no {} trajectories in {}",
            if loaded { "loaded" } else { "unloaded" },
            dir.display()
        )));
    }
    files.iter().map(|p| load_trajectory(p).map_err(CliError::from)).collect()
}

fn fragments(cfg: &ScenarioConfig, loaded: bool) -> CliResult<Vec<Fragment>> {
    let sources = load_sources(cfg, loaded)?;
    let refs: Vec<&Trajectory> = sources.iter().collect();
    Ok(sample_fragments(&refs, cfg.sampler.fragment_count, cfg.sampler.horizon)?)
}

pub fn load_ground_truth(cfg: &ScenarioConfig) -> CliResult<GroundTruth> {
    let path = cfg.ground_truth_path();
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Estimated vs. ground-truth payload parameters.
pub fn payload_table(report: &IdentificationReport, manifest: &RunManifest) -> String {
    let names = report.final_params.layout.names();
    let theta = report.final_params.flatten();
    let mut out = String::new();
    writeln!(out, "{:<22} {:>12} {:>12} {:>12}", "parameter", "estimate", "truth", "abs error").unwrap();
    for (name, &truth) in manifest.payload_parameters.iter().zip(&manifest.truth) {
        let Some(i) = names.iter().position(|n| n == name) else {
            continue;
        };
        writeln!(
            out,
            "{:<22} {:>+12.6} {:>+12.6} {:>12.6}",
            name,
            theta[i],
            truth,
            (theta[i] - truth).abs()
        )
        .unwrap();
    }
    out
}

fn save_report(dir: &Path, stem: &str, report: &IdentificationReport) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    report.write_json(&dir.join(format!("{stem}.json")))?;
    report.write_csv(&dir.join(format!("{stem}.csv")))?;
    Ok(())
}

pub fn manifest(cfg: &ScenarioConfig, model: &RobotModel, layout: &ParamLayout) -> CliResult<RunManifest> {
    let truth = load_ground_truth(cfg)?;
    let mask = payload_mask(layout, &cfg.payload_link_indices(model)?)?;
    let loaded = truth.loaded.to_layout(layout).flatten();
    Ok(RunManifest {
        scenario: cfg.name.clone(),
        payload_parameters: mask.iter().map(|&i| layout.name(i)).collect(),
        truth: mask.iter().map(|&i| loaded[i]).collect(),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn spread_summary(mode: Mode, man: &RunManifest, runs: &[(u64, IdentificationReport)]) -> (String, String) {
    let mut text = String::new();
    let mut csv = String::from("parameter,mean,std,truth\n");
    writeln!(text, "{} over {} seeds", mode.as_str(), runs.len()).unwrap();
    writeln!(text, "{:<22} {:>12} {:>10} {:>12}", "parameter", "mean", "std", "truth").unwrap();
    for (name, truth) in man.payload_parameters.iter().zip(&man.truth) {
        let vals: Vec<f64> = runs
            .iter()
            .filter_map(|(_, r)| {
                let i = r.parameter_names.iter().position(|n| n == name)?;
                Some(r.final_params.flatten()[i])
            })
            .collect();
        let (m, s) = mean_std(&vals);
        writeln!(text, "{name:<22} {m:>+12.6} {s:>10.6} {truth:>+12.6}").unwrap();
        writeln!(csv, "{name},{m:e},{s:e},{truth:e}").unwrap();
    }
    (text, csv)
}

/// Runs one identification mode. With `seeds` every seed gets its own report
/// (`<mode>_seed<n>`) and a mean ± std summary is written; the seed drives
/// CMA-ES sampling, while gradient descent is deterministic.
pub fn identify(cfg: &ScenarioConfig, mode: Mode, seeds: &[u64]) -> CliResult<String> {
    let model = cfg.model()?;
    let layout = cfg.layout(&model);
    let payload = cfg.payload_link_indices(&model)?;
    let man = manifest(cfg, &model, &layout)?;
    let reports = cfg.reports_dir();
    write_text(&reports.join("manifest.json"), &to_json(&man))?;
    let loaded = fragments(cfg, true)?;
    let unloaded = if mode == Mode::TwoStage { fragments(cfg, false)? } else { Vec::new() };
    let nominal = ModelParams::nominal(layout.clone());
    let mask = payload_mask(&layout, &payload)?;
    let per_seed = !seeds.is_empty();
    let run_seeds: Vec<u64> = if per_seed { seeds.to_vec() } else { vec![cfg.cma.seed] };

    let mut out = String::new();
    let mut finals = Vec::new();
    for &seed in &run_seeds {
        let suffix = if per_seed { format!("_seed{seed}") } else { String::new() };
        let tag = if per_seed { format!(" seed {seed}") } else { String::new() };
        let result = match mode {
            Mode::TwoStage => {
                let r = two_stage_identify(
                    &model,
                    &layout,
                    &unloaded,
                    &loaded,
                    &cfg.loss,
                    &cfg.stage1_settings(),
                    &cfg.gd,
                    &payload,
                )?;
                let mut s1 = r.stage1;
                let mut s2 = r.stage2;
                if per_seed {
                    s1.seed = Some(seed);
                    s2.seed = Some(seed);
                }
                save_report(&reports, &format!("two-stage_stage1{suffix}"), &s1)?;
                save_report(&reports, &format!("two-stage_stage2{suffix}"), &s2)?;
                writeln!(
                    out,
                    "two-stage{tag}: stage 1 loss {:.6e} after {} iterations, stage 2 loss {:.6e} after {} iterations",
                    s1.final_loss, s1.iterations_run, s2.final_loss, s2.iterations_run
                )
                .unwrap();
                s2
            }
            Mode::OneStage => {
                let mut r = one_stage_identify(&model, &layout, &loaded, &cfg.loss, &cfg.gd)?;
                if per_seed {
                    r.seed = Some(seed);
                }
                save_report(&reports, &format!("one-stage{suffix}"), &r)?;
                writeln!(out, "one-stage{tag}: loss {:.6e} after {} iterations", r.final_loss, r.iterations_run)
                    .unwrap();
                r
            }
            Mode::CmaEs => {
                let config = CmaConfig { seed, ..cfg.cma };
                let r = cma_identify(&model, &nominal, &loaded, &cfg.loss, &config, &mask)?;
                let stem = if per_seed { format!("cma-es_seed{seed}") } else { "cma-es".to_string() };
                save_report(&reports, &stem, &r)?;
                writeln!(out, "cma-es seed {seed}: loss {:.6e} after {} generations", r.final_loss, r.iterations_run)
                    .unwrap();
                r
            }
        };
        out.push_str(&payload_table(&result, &man));
        finals.push((seed, result));
    }
    if per_seed {
        let (text, csv) = spread_summary(mode, &man, &finals);
        write_text(&reports.join(format!("{}_spread.txt", mode.as_str())), &text)?;
        write_text(&reports.join(format!("{}_spread.csv", mode.as_str())), &csv)?;
        out.push_str(&text);
    }
    Ok(out)
}

/// Outcome of [`verify_grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub pairs: usize,
    pub max_relative_error: f64,
    pub worst: Option<(usize, String)>,
}

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_FLOOR: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-5;

/// Random parameters around nominal: masses within ±50 %, CoMs within 1 cm,
/// scales within 10 %.
pub fn random_params(model: &RobotModel, layout: &ParamLayout, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut p = ModelParams::nominal(layout.clone());
    for (s, m) in p.mass_delta.iter_mut().enumerate() {
        *m = model.links()[layout.links[s]].nominal_mass * rng.gen_range(-0.5..0.5);
    }
    for c in &mut p.com_delta {
        *c = [rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01)];
    }
    for a in p.damping_scale.iter_mut().chain(p.friction_scale.iter_mut()) {
        *a = rng.gen_range(0.9..1.1);
    }
    p
}

/// Single fragment of `horizon` steps from a random source and start.
pub fn random_fragment(sources: &[Trajectory], horizon: usize, rng: &mut ChaCha8Rng) -> CliResult<Fragment> {
    let usable: Vec<usize> = (0..sources.len()).filter(|&i| sources[i].len() >= horizon).collect();
    if horizon == 0 || usable.is_empty() {
        return Err(CliError::Config(format!("no source holds a fragment of {horizon} steps")));
    }
    let src = usable[rng.gen_range(0..usable.len())];
    let t = &sources[src];
    let start = rng.gen_range(0..=t.len() - horizon);
    Ok(Fragment {
        source: src,
        start,
        initial: t.states[start].clone(),
        actions: t.actions[start..start + horizon].to_vec(),
        reference: t.body_positions[start + 1..=start + horizon].to_vec(),
    })
}

/// Forward-mode gradients against central differences on random
/// (parameters, fragment) pairs.
pub fn check_gradients(
    model: &RobotModel,
    layout: &ParamLayout,
    sources: &[Trajectory],
    loss: &sysid_core::LossSpec,
    pairs: usize,
    horizon: usize,
    seed: u64,
) -> CliResult<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = layout.names();
    let mut worst = 0.0f64;
    let mut worst_at = None;
    for pair in 0..pairs {
        let params = random_params(model, layout, &mut rng);
        let frag = random_fragment(sources, horizon, &mut rng)?;
        let g = grad_all(model, &params, std::slice::from_ref(&frag), loss)?;
        let fd = fd_gradient(model, &params, std::slice::from_ref(&frag), loss, FD_STEP)?;
        for i in 0..g.gradient.len() {
            let e = max_relative_error(&g.gradient[i..=i], &fd[i..=i], GRAD_FLOOR);
            if e > worst || (e.is_nan() && !worst.is_nan()) {
                worst = e;
                worst_at = Some((pair, names[i].clone()));
            }
        }
    }
    Ok(GradCheck {
        pairs,
        max_relative_error: worst,
        worst: worst_at,
    })
}

pub fn verify_grad(cfg: &ScenarioConfig, pairs: usize, horizon: usize, seed: u64) -> CliResult<(String, GradCheck)> {
    let model = cfg.model()?;
    let layout = cfg.layout(&model);
    let mut sources = load_sources(cfg, false)?;
    sources.extend(load_sources(cfg, true)?);
    let check = check_gradients(&model, &layout, &sources, &cfg.loss, pairs, horizon, seed)?;
    let mut out = String::new();
    let verdict = if check.max_relative_error < GRAD_TOLERANCE { "PASS" } else { "FAIL" };
    write!(
        out,
        "{verdict}: {} pairs, horizon {horizon}, max relative error {:.3e}",
        check.pairs, check.max_relative_error
    )
    .unwrap();
    if let Some((pair, name)) = &check.worst {
        write!(out, " (pair {pair}, {name})").unwrap();
    }
    out.push('\n');
    if check.max_relative_error < GRAD_TOLERANCE {
        Ok((out, check))
    } else {
        Err(CliError::GradientMismatch(check.max_relative_error))
    }
}

/// Reports found in `dir/reports`, keyed by file stem, in name order.
pub fn collect_reports(run_dir: &Path) -> CliResult<(Option<RunManifest>, BTreeMap<String, IdentificationReport>)> {
    let dir = run_dir.join("reports");
    let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut manifest = None;
    let mut reports = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if stem == "manifest" {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            manifest = Some(
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            );
        } else {
            reports.insert(stem, IdentificationReport::load_json(&path)?);
        }
    }
    Ok((manifest, reports))
}
