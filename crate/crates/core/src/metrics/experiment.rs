use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{MetricsSection, RunConfig};
use crate::error::{Error, Result};
use crate::fluorophore::Fluorophore;
use crate::inverse::{
    initialize, ForwardModel, InitStrategy, ObjectiveRecord, OptimConfig, OptimState, Reconstruction,
    FISTA_VARIANT,
};
use crate::phantom::generate_phantom;
use crate::sensor::{estimate_background, synthesize_background, FrameStack};
use crate::simulate::simulate_frames;
use crate::volume::ScatteringVolume;

use super::matching::match_and_rmse;
use super::render::RenderScale;
use super::ssim::ssim_volume;

/// A simulated acquisition with its ground truth.
pub struct Dataset {
    pub model: ForwardModel,
    pub truth: ScatteringVolume,
    /// True emitter of each frame.
    pub molecules: Vec<Fluorophore>,
    /// Frames with the true backgrounds attached.
    pub stack: FrameStack,
}

impl Dataset {
    pub fn true_backgrounds(&self) -> Vec<Vec<f64>> {
        self.stack.frames().iter().map(|f| f.background.clone()).collect()
    }
}

pub fn build_model(config: &RunConfig) -> Result<ForwardModel> {
    ForwardModel::new(
        &config.grid()?,
        &config.optical_constants()?,
        &config.biplane()?,
        config.model,
    )
}

/// Phantom, emitters, backgrounds and noisy frames for `config`.
pub fn prepare_dataset(config: &RunConfig) -> Result<Dataset> {
    config.validate()?;
    let model = build_model(config)?;
    let grid = *model.grid();
    let (truth, molecules) = generate_phantom(
        &grid,
        model.constants(),
        &config.phantom,
        &config.molecules(),
        config.seed,
    )?;
    let frames = config.acquisition.frames;
    let backgrounds = synthesize_background(model.camera().config(), frames, &config.background, config.seed)?;
    let per_frame: Vec<Vec<Fluorophore>> = molecules.iter().map(|m| vec![*m]).collect();
    let stack = simulate_frames(&model, &truth, &per_frame, &backgrounds, config.seed, true)?;
    Ok(Dataset {
        model,
        truth,
        molecules: molecules.as_slice().to_vec(),
        stack,
    })
}

/// The stack the reconstruction sees: estimated backgrounds replace the stored ones when enabled.
pub fn reconstruction_stack(config: &RunConfig, stack: &FrameStack) -> Result<(FrameStack, Vec<String>)> {
    let est = &config.background_estimation;
    if !est.enabled {
        return Ok((stack.clone(), Vec::new()));
    }
    let estimate = estimate_background(
        stack,
        est.spatial_sigma_um,
        est.temporal_window_frames,
        est.shot_noise_correction,
    )?;
    let mut out = stack.clone();
    out.set_backgrounds(estimate.backgrounds)?;
    Ok((out, estimate.warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub ssim: Option<f64>,
    pub rmse_3d_um: Option<f64>,
    pub matched: usize,
    pub unmatched_truth: usize,
    pub unmatched_estimates: usize,
    pub objective_trace: Vec<ObjectiveRecord>,
    /// Objective never increased between consecutive blocks.
    pub monotone: bool,
    /// Feasible at every checkpoint and at the end.
    pub feasible: bool,
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    pub runtime_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config: RunConfig,
    pub initial_ssim: f64,
    pub initial_rmse_3d_um: Option<f64>,
    pub dropped_frames: Vec<usize>,
    pub arms: Vec<ArmReport>,
    pub render_scale: RenderScale,
    pub fista_variant: String,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub runtime_s: f64,
}

impl ExperimentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn all_arms_completed(&self) -> bool {
        self.arms.iter().all(|a| a.error.is_none())
    }
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub dataset: Dataset,
    pub initial: OptimState,
    /// Final state per arm, `None` where the arm failed.
    pub states: Vec<(String, Option<OptimState>)>,
}

/// Volume and emitter metrics of one reconstruction against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ssim: f64,
    pub rmse_3d_um: Option<f64>,
    pub matched: usize,
    pub unmatched_truth: usize,
    pub unmatched_estimates: usize,
}

/// SSIM with the truth's dynamic range and assignment-based 3D RMSE.
pub fn evaluate(
    truth: &ScatteringVolume,
    truth_molecules: &[Fluorophore],
    volume: &ScatteringVolume,
    molecules: &[Fluorophore],
    metrics: &MetricsSection,
) -> Result<Evaluation> {
    let range = truth.max() - truth.min();
    let ssim = ssim_volume(truth, volume, metrics.ssim_window_sigma_vox, (range > 0.0).then_some(range))?;
    let est: Vec<_> = molecules.iter().map(|m| m.position).collect();
    let tru: Vec<_> = truth_molecules.iter().map(|m| m.position).collect();
    let m = match_and_rmse(&est, &tru, metrics.match_radius_um)?;
    Ok(Evaluation {
        ssim,
        rmse_3d_um: m.rmse_3d_um,
        matched: m.pairs.len(),
        unmatched_truth: m.unmatched_truth,
        unmatched_estimates: m.unmatched_estimates,
    })
}

fn evaluate_state(
    name: &str,
    state: &OptimState,
    truth: &ScatteringVolume,
    truth_molecules: &[Fluorophore],
    config: &RunConfig,
) -> Result<ArmReport> {
    let e = evaluate(truth, truth_molecules, &state.volume, &state.molecules, &config.metrics)?;
    let monotone = state.history.windows(2).all(|w| w[1].objective <= w[0].objective);
    Ok(ArmReport {
        name: name.to_string(),
        ssim: Some(e.ssim),
        rmse_3d_um: e.rmse_3d_um,
        matched: e.matched,
        unmatched_truth: e.unmatched_truth,
        unmatched_estimates: e.unmatched_estimates,
        objective_trace: state.history.clone(),
        monotone,
        feasible: state.is_feasible(),
        diagnostics: state.diagnostics.iter().map(|d| d.message.clone()).collect(),
        runtime_s: 0.0,
        error: None,
    })
}

/// Runs one arm to completion from `init`. The flag is false if any checkpoint was infeasible.
pub fn run_arm(
    model: &ForwardModel,
    stack: &FrameStack,
    optimizer: &OptimConfig,
    init: OptimState,
) -> Result<(OptimState, bool)> {
    let mut rec = Reconstruction::new(model, stack, optimizer.clone(), init)?;
    let mut feasible = true;
    rec.run(|s| {
        feasible &= s.is_feasible();
        Ok(())
    })?;
    Ok((rec.into_state(), feasible))
}

fn arm_setup(name: &str, config: &RunConfig, initial: &OptimState, truth: &[Fluorophore]) -> (OptimConfig, OptimState) {
    match name {
        "joint" => (config.optimizer.clone(), initial.clone()),
        "init-only" => (config.optimizer.clone().volume_only(), initial.clone()),
        _ => {
            let mut state = initial.clone();
            state.molecules = truth.to_vec();
            state.frames = (0..truth.len()).collect();
            (config.optimizer.clone().volume_only(), state)
        }
    }
}

/// Simulates one dataset and runs every configured arm from the same initialization.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let dataset = prepare_dataset(config)?;
    let (stack, mut warnings) = reconstruction_stack(config, &dataset.stack)?;
    warnings.extend(dataset.model.camera().warnings().iter().cloned());
    let init = initialize(&stack, &dataset.model, &InitStrategy::Localizer, &config.localizer)?;
    let initial_report = evaluate_state("initial", &init.state, &dataset.truth, &dataset.molecules, config)?;

    let mut arms = Vec::new();
    let mut states = Vec::new();
    for name in &config.bench.arms {
        let t = Instant::now();
        let (opt, state) = arm_setup(name, config, &init.state, &dataset.molecules);
        log::info!("running arm {name}");
        let result = run_arm(&dataset.model, &stack, &opt, state).and_then(|(s, feasible)| {
            evaluate_state(name, &s, &dataset.truth, &dataset.molecules, config).map(|r| (r, s, feasible))
        });
        match result {
            Ok((mut report, s, feasible)) => {
                report.feasible &= feasible;
                report.runtime_s = t.elapsed().as_secs_f64();
                arms.push(report);
                states.push((name.clone(), Some(s)));
            }
            Err(e) => {
                log::error!("arm {name} failed: {e}");
                arms.push(ArmReport {
                    name: name.clone(),
                    ssim: None,
                    rmse_3d_um: None,
                    matched: 0,
                    unmatched_truth: dataset.molecules.len(),
                    unmatched_estimates: 0,
                    objective_trace: Vec::new(),
                    monotone: true,
                    feasible: true,
                    diagnostics: Vec::new(),
                    runtime_s: t.elapsed().as_secs_f64(),
                    error: Some(e.to_string()),
                });
                states.push((name.clone(), None));
            }
        }
    }
    let peak = dataset.truth.max();
    let report = ExperimentReport {
        seed: config.seed,
        config: config.clone(),
        initial_ssim: initial_report.ssim.unwrap_or(f64::NAN),
        initial_rmse_3d_um: initial_report.rmse_3d_um,
        dropped_frames: init.dropped.clone(),
        arms,
        render_scale: RenderScale {
            max_value: if peak > 0.0 { peak } else { 1.0 },
        },
        fista_variant: FISTA_VARIANT.to_string(),
        warnings,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    if report.arms.is_empty() {
        return Err(Error::invalid("no arms were run"));
    }
    Ok(ExperimentOutcome {
        report,
        dataset,
        initial: init.state,
        states,
    })
}
