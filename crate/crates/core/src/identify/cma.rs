use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::report::{loss_converged, IdentificationReport, IterationRecord, StageLabel};
use super::sampler::Fragment;
use crate::autodiff::evaluate_loss;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamClass, RobotModel};
use crate::objective::LossSpec;

/// Loss assigned to candidates whose rollout fails.
pub const REJECTED_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSigma {
    pub mass: f64,
    pub com: f64,
    pub damping_scale: f64,
    pub friction_scale: f64,
}

impl Default for InitialSigma {
    fn default() -> Self {
        InitialSigma {
            mass: 1.0,
            com: 0.02,
            damping_scale: 0.1,
            friction_scale: 0.1,
        }
    }
}

impl InitialSigma {
    pub fn for_class(&self, class: ParamClass) -> f64 {
        match class {
            ParamClass::Mass => self.mass,
            ParamClass::Com => self.com,
            ParamClass::DampingScale => self.damping_scale,
            ParamClass::FrictionScale => self.friction_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaConfig {
    pub population_size: usize,
    pub iterations: usize,
    pub initial_sigma: InitialSigma,
    pub seed: u64,
    /// Stops once every search-distribution axis is shorter than this, in
    /// units of the initial sigma.
    pub tol_x: f64,
    pub snapshot_interval: usize,
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig {
            population_size: 10,
            iterations: 2000,
            initial_sigma: InitialSigma::default(),
            seed: 0,
            tol_x: 1e-11,
            snapshot_interval: 10,
        }
    }
}

impl CmaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::Value("population size must be at least 4".into()));
        }
        if self.iterations == 0 || self.snapshot_interval == 0 {
            return Err(Error::Value("iterations and snapshot interval must be at least 1".into()));
        }
        let s = self.initial_sigma;
        if [s.mass, s.com, s.damping_scale, s.friction_scale]
            .iter()
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::Value("initial sigma must be positive".into()));
        }
        if !(self.tol_x >= 0.0) {
            return Err(Error::Value("tol_x must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaOutcome {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Best-so-far value after each generation.
    pub best_history: Vec<f64>,
    /// `(generation, best-so-far x)` every `snapshot_interval` generations.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub generations: usize,
    pub evaluations: usize,
}

/// (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
/// rank-one plus rank-mu covariance updates, minimizing `f` from `x0`.
///
/// The search runs in coordinates normalized by `scales`, starting from an
/// isotropic unit step size.
pub fn cma_minimize<F>(x0: &[f64], scales: &[f64], config: &CmaConfig, mut f: F) -> Result<CmaOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::Value("nothing to optimize".into()));
    }
    if scales.len() != n {
        return Err(Error::dim("CMA-ES scales", n, scales.len()));
    }
    if scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Value("CMA-ES scales must be positive".into()));
    }
    let nf = n as f64;
    let lambda = config.population_size;
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let to_world = |y: &DVector<f64>| -> Vec<f64> { (0..n).map(|i| x0[i] + scales[i] * y[i]).collect() };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mean = DVector::<f64>::zeros(n);
    let mut sigma = 1.0;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut pc = DVector::<f64>::zeros(n);
    let mut ps = DVector::<f64>::zeros(n);

    let mut best_y = mean.clone();
    let mut best_value = f(&to_world(&mean));
    let mut evaluations = 1;
    let mut best_history = Vec::with_capacity(config.iterations);
    let mut snapshots = Vec::new();
    let mut generations = 0;

    for gen in 0..config.iterations {
        let eig = SymmetricEigen::new(c.clone());
        let b = eig.eigenvectors;
        let d: DVector<f64> = eig.eigenvalues.map(|v| v.max(0.0).sqrt());

        let mut pop: Vec<(f64, DVector<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let y = &b * d.component_mul(&z);
            let x = &mean + sigma * &y;
            let mut v = f(&to_world(&x));
            evaluations += 1;
            if v.is_nan() {
                v = REJECTED_LOSS;
            }
            pop.push((v, y));
        }
        pop.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pop[0].0 < best_value {
            best_value = pop[0].0;
            best_y = &mean + sigma * &pop[0].1;
        }

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, (_, y)) in weights.iter().zip(&pop) {
            y_w += *w * y;
        }
        mean += sigma * &y_w;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_d = d.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 });
        let c_inv_half_yw = &b * (b.transpose() * &y_w).component_mul(&inv_d);
        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mueff).sqrt() * c_inv_half_yw;
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * (gen as i32 + 1))).sqrt() / chi_n < 1.4 + 2.0 / (nf + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hs * (cc * (2.0 - cc) * mueff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, (_, y)) in weights.iter().zip(&pop) {
            rank_mu += *w * y * y.transpose();
        }
        c = (1.0 - c1 - cmu + (1.0 - hs) * c1 * cc * (2.0 - cc)) * &c + c1 * &pc * pc.transpose() + cmu * rank_mu;
        c = 0.5 * (&c + c.transpose());
        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();

        generations = gen + 1;
        best_history.push(best_value);
        if gen % config.snapshot_interval == 0 {
            snapshots.push((gen, to_world(&best_y)));
        }
        let max_axis = sigma * c.diagonal().iter().fold(0.0f64, |a, &v| a.max(v)).sqrt();
        if max_axis < config.tol_x || !sigma.is_finite() {
            break;
        }
    }
    Ok(CmaOutcome {
        best_x: to_world(&best_y),
        best_value,
        best_history,
        snapshots,
        generations,
        evaluations,
    })
}

/// CMA-ES on the fragment loss over the active parameters, starting from
/// `init`. Candidates whose rollout fails score [`REJECTED_LOSS`].
pub fn cma_identify(
    model: &RobotModel,
    init: &ModelParams,
    fragments: &[Fragment],
    spec: &LossSpec,
    config: &CmaConfig,
    active: &[usize],
) -> Result<IdentificationReport> {
    let started = Instant::now();
    init.validate(model)?;
    spec.validate()?;
    config.validate()?;
    let layout = &init.layout;
    if active.is_empty() {
        return Err(Error::Value("active mask is empty".into()));
    }
    if let Some(&bad) = active.iter().find(|&&i| i >= init.dim()) {
        return Err(Error::Value(format!("active index {bad} out of range (d = {})", init.dim())));
    }
    let base = init.flatten();
    let x0: Vec<f64> = active.iter().map(|&i| base[i]).collect();
    let scales: Vec<f64> = active
        .iter()
        .map(|&i| config.initial_sigma.for_class(layout.class(i)))
        .collect();
    let embed = |x: &[f64]| -> Vec<f64> {
        let mut theta = base.clone();
        for (s, &i) in active.iter().enumerate() {
            theta[i] = x[s];
        }
        theta
    };
    let objective = |x: &[f64]| -> f64 {
        let theta = embed(x);
        ModelParams::unflatten(layout.clone(), &theta)
            .and_then(|p| evaluate_loss(model, &p, fragments, spec))
            .map(|b| if b.total.is_finite() { b.total } else { REJECTED_LOSS })
            .unwrap_or(REJECTED_LOSS)
    };
    let initial_loss = objective(&x0);
    let outcome = cma_minimize(&x0, &scales, config, objective)?;

    let mut snapshots = outcome.snapshots.iter().peekable();
    let history: Vec<IterationRecord> = outcome
        .best_history
        .iter()
        .enumerate()
        .map(|(gen, &loss)| {
            let theta = match snapshots.peek() {
                Some((g, x)) if *g == gen => {
                    let t = embed(x);
                    snapshots.next();
                    Some(t)
                }
                _ => None,
            };
            IterationRecord {
                iteration: gen,
                loss,
                theta,
            }
        })
        .collect();
    let mut history = history;
    let final_theta = embed(&outcome.best_x);
    let final_params = ModelParams::unflatten(layout.clone(), &final_theta)?;
    let final_breakdown = evaluate_loss(model, &final_params, fragments, spec)?;
    history.push(IterationRecord {
        iteration: outcome.generations,
        loss: final_breakdown.total,
        theta: Some(final_theta),
    });
    let converged = loss_converged(&outcome.best_history);
    Ok(IdentificationReport {
        stage_label: StageLabel::CmaEs,
        parameter_names: layout.names(),
        initial_params: init.clone(),
        final_params,
        initial_loss,
        final_loss: final_breakdown.total,
        final_breakdown,
        iterations_run: outcome.generations,
        converged,
        seed: Some(config.seed),
        wall_time: started.elapsed().as_secs_f64(),
        history,
    })
}
