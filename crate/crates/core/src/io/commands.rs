//! Batch commands behind the command-line tool. Each validates everything it
//! can before creating output files and removes its outputs if it fails early.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::{FrameDtype, RunConfig};
use crate::error::{Error, Result};
use crate::fluorophore::Fluorophore;
use crate::inverse::{initialize, InitStrategy, OptimState, Reconstruction};
use crate::metrics::{
    build_model, evaluate, prepare_dataset, reconstruction_stack, render_projections, run_experiment, Evaluation,
    ExperimentReport, RenderScale,
};
use crate::sensor::FrameStack;
use crate::volume::ScatteringVolume;

use super::checkpoint::write_checkpoint;
use super::frames::{attach_backgrounds, decode_frames, encode_backgrounds, encode_frames};
use super::manifest::{now_unix_s, CommandSpec, FileHash, OutputDir, RunManifest};
use super::tables::{decode_fluorophores, encode_fluorophores, encode_trace};
use super::volume::{decode_volume, encode_volume};

pub const VOLUME_FILE: &str = "volume.bin";
pub const FLUOROPHORES_FILE: &str = "fluorophores.csv";
pub const FRAMES_FILE: &str = "frames.bin";
pub const BACKGROUNDS_FILE: &str = "backgrounds.bin";
pub const TRACE_FILE: &str = "objective_trace.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const REPORT_FILE: &str = "report.json";

/// Process exit status for an error: 2 validation, 3 I/O or decoding, 4 solver failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Domain(_) | Error::Config(_) | Error::PlacementFailure { .. } => 2,
        Error::Io { .. } | Error::Decode { .. } | Error::Csv(_) | Error::Json(_) => 3,
        Error::SolverFailure { .. } | Error::SingularEvaluation(_) => 4,
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| Error::io(path, e))
}

/// Runs `body` against a fresh output directory, removing everything on error.
fn with_output<T>(out: &Path, body: impl FnOnce(&mut OutputDir) -> Result<T>) -> Result<T> {
    let mut dir = OutputDir::create(out)?;
    match body(&mut dir) {
        Ok(v) => Ok(v),
        Err(e) => {
            dir.discard();
            Err(e)
        }
    }
}

fn manifest(
    command: CommandSpec,
    config: &RunConfig,
    inputs: Vec<FileHash>,
    dir: &OutputDir,
    started: f64,
    error: Option<&Error>,
) -> RunManifest {
    RunManifest {
        command,
        config: config.clone(),
        seed: config.seed,
        inputs,
        artifacts: dir.artifacts(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started,
        finished_unix_s: now_unix_s(),
        exit_code: error.map_or(0, exit_code),
        error: error.map(|e| e.to_string()),
    }
}

fn emitter_rows(stack: &FrameStack, state: &OptimState) -> Vec<(usize, Fluorophore)> {
    state
        .frames
        .iter()
        .zip(&state.molecules)
        .map(|(&f, m)| (stack.order()[f], *m))
        .collect()
}

fn write_volume_and_emitters(
    dir: &mut OutputDir,
    prefix: &str,
    volume: &ScatteringVolume,
    rows: &[(usize, Fluorophore)],
) -> Result<()> {
    dir.write(&format!("{prefix}{VOLUME_FILE}"), &encode_volume(volume))?;
    dir.write(&format!("{prefix}{FLUOROPHORES_FILE}"), &encode_fluorophores(rows)?)?;
    Ok(())
}

/// Phantom, emitters, frames and backgrounds for `config`.
pub fn cmd_simulate(config: &RunConfig, frame_dtype: Option<FrameDtype>, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    let started = now_unix_s();
    let dtype = frame_dtype.unwrap_or(config.output.frame_dtype);
    let data = prepare_dataset(config)?;
    let frames = encode_frames(&data.stack, dtype)?;
    let backgrounds = encode_backgrounds(&data.stack)?;
    let rows: Vec<_> = data.molecules.iter().copied().enumerate().collect();
    with_output(out, |dir| {
        write_volume_and_emitters(dir, "", &data.truth, &rows)?;
        dir.write(FRAMES_FILE, &frames)?;
        dir.write(BACKGROUNDS_FILE, &backgrounds)?;
        let m = manifest(CommandSpec::Simulate { frame_dtype: dtype }, config, Vec::new(), dir, started, None);
        dir.write_manifest(&m)?;
        Ok(m)
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconstructInputs {
    pub frames: PathBuf,
    /// Per-frame backgrounds; when absent they are estimated from the frames.
    pub backgrounds: Option<PathBuf>,
    /// Emitter table used instead of the localizer, one row per frame keyed by acquisition index.
    pub positions: Option<PathBuf>,
    /// Keep emitters fixed and optimize the volume only.
    pub frozen_positions: bool,
}

fn provided_emitters(stack: &FrameStack, rows: Vec<(usize, Fluorophore)>) -> Result<Vec<Fluorophore>> {
    stack
        .order()
        .iter()
        .map(|acq| {
            let hits: Vec<_> = rows.iter().filter(|r| r.0 == *acq).collect();
            match hits.as_slice() {
                [one] => Ok(one.1),
                [] => Err(Error::invalid(format!("positions file has no row for frame {acq}"))),
                _ => Err(Error::invalid(format!("positions file has several rows for frame {acq}"))),
            }
        })
        .collect()
}

/// Joint reconstruction from a frame file.
pub fn cmd_reconstruct(config: &RunConfig, inputs: &ReconstructInputs, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    if inputs.frozen_positions && inputs.positions.is_none() {
        return Err(Error::Config("--frozen-positions needs a positions file".into()));
    }
    let started = now_unix_s();
    let model = build_model(config)?;
    let frames_path = absolute(&inputs.frames)?;
    let mut hashes = vec![FileHash::of_file(&frames_path)?];
    let (mut stack, _) = decode_frames(&read(&frames_path)?)?;
    if stack.config() != model.camera().config() {
        return Err(Error::Config(
            "frame file camera configuration differs from the configured camera".into(),
        ));
    }
    let backgrounds = inputs.backgrounds.as_deref().map(absolute).transpose()?;
    let stack = match &backgrounds {
        Some(p) => {
            hashes.push(FileHash::of_file(p)?);
            attach_backgrounds(&mut stack, &read(p)?)?;
            stack
        }
        None => {
            if !config.background_estimation.enabled {
                return Err(Error::Config(
                    "no backgrounds file given and background estimation is disabled".into(),
                ));
            }
            reconstruction_stack(config, &stack)?.0
        }
    };
    let positions = inputs.positions.as_deref().map(absolute).transpose()?;
    let strategy = match &positions {
        Some(p) => {
            hashes.push(FileHash::of_file(p)?);
            InitStrategy::Provided(provided_emitters(&stack, decode_fluorophores(&read(p)?)?)?)
        }
        None => InitStrategy::Localizer,
    };
    let optimizer = if inputs.frozen_positions {
        config.optimizer.clone().volume_only()
    } else {
        config.optimizer.clone()
    };
    let init = initialize(&stack, &model, &strategy, &config.localizer)?;
    let command = CommandSpec::Reconstruct {
        frames: frames_path,
        backgrounds,
        positions,
        frozen_positions: inputs.frozen_positions,
    };
    let mut rec = Reconstruction::new(&model, &stack, optimizer, init.state)?;
    with_output(out, |dir| {
        let every = config.output.checkpoint_every;
        let t0 = now_unix_s();
        let run = rec.run(|state| {
            dir.progress(&json!({
                "event": "outer_iteration",
                "outer": state.outer_iteration,
                "objective": state.objective(),
                "elapsed_s": now_unix_s() - t0,
            }))?;
            if every > 0 && state.outer_iteration % every == 0 {
                write_checkpoint(dir, &format!("checkpoints/iter_{:04}", state.outer_iteration), state)?;
            }
            Ok(())
        });
        let failure = match run {
            Ok(()) => None,
            Err(e) if exit_code(&e) == 4 => {
                log::error!("reconstruction stopped: {e}");
                Some(e)
            }
            Err(e) => return Err(e),
        };
        let state = rec.state();
        write_volume_and_emitters(dir, "", &state.volume, &emitter_rows(&stack, state))?;
        dir.write(TRACE_FILE, &encode_trace(&state.history)?)?;
        dir.write(DIAGNOSTICS_FILE, &serde_json::to_vec_pretty(&state.diagnostics)?)?;
        let m = manifest(command, config, hashes, dir, started, failure.as_ref());
        dir.write_manifest(&m)?;
        Ok(m)
    })
}

fn load_result(dir: &Path) -> Result<(ScatteringVolume, Vec<Fluorophore>)> {
    let volume = decode_volume(&read(&dir.join(VOLUME_FILE))?)?;
    let rows = decode_fluorophores(&read(&dir.join(FLUOROPHORES_FILE))?)?;
    Ok((volume, rows.into_iter().map(|r| r.1).collect()))
}

/// Metrics of the reconstruction in `recon_dir` against the truth in `truth_dir`, written as JSON.
pub fn cmd_evaluate(config: &RunConfig, truth_dir: &Path, recon_dir: &Path, out: &Path) -> Result<Evaluation> {
    config.validate()?;
    let (truth, truth_m) = load_result(truth_dir)?;
    let (volume, est) = load_result(recon_dir)?;
    if truth.grid() != volume.grid() {
        return Err(Error::invalid("truth and reconstruction grids differ"));
    }
    let e = evaluate(&truth, &truth_m, &volume, &est, &config.metrics)?;
    let bytes = serde_json::to_vec_pretty(&e)?;
    let tmp = out.with_extension("partial");
    std::fs::write(&tmp, &bytes).map_err(|err| Error::io(&tmp, err))?;
    std::fs::rename(&tmp, out).map_err(|err| Error::io(out, err))?;
    Ok(e)
}

fn write_renders(dir: &mut OutputDir, name: &str, v: &ScatteringVolume, scale: RenderScale) -> Result<()> {
    let [xy, xz] = render_projections(v, scale)?;
    dir.write(&format!("renders/{name}_xy.png"), &xy)?;
    dir.write(&format!("renders/{name}_xz.png"), &xz)?;
    Ok(())
}

/// The three-arm comparison; exit code 0 only when every arm completed.
pub fn cmd_bench(config: &RunConfig, out: &Path) -> Result<(ExperimentReport, RunManifest)> {
    config.validate()?;
    let started = now_unix_s();
    let outcome = run_experiment(config)?;
    let report = outcome.report;
    let scale = report.render_scale;
    with_output(out, |dir| {
        dir.write(REPORT_FILE, &serde_json::to_vec_pretty(&report)?)?;
        let truth_rows: Vec<_> = outcome.dataset.molecules.iter().copied().enumerate().collect();
        write_volume_and_emitters(dir, "truth/", &outcome.dataset.truth, &truth_rows)?;
        write_renders(dir, "truth", &outcome.dataset.truth, scale)?;
        write_renders(dir, "initial", &outcome.initial.volume, scale)?;
        for (name, state) in &outcome.states {
            if let Some(state) = state {
                let rows = emitter_rows(&outcome.dataset.stack, state);
                write_volume_and_emitters(dir, &format!("arms/{name}/"), &state.volume, &rows)?;
                dir.write(&format!("arms/{name}/{TRACE_FILE}"), &encode_trace(&state.history)?)?;
                write_renders(dir, name, &state.volume, scale)?;
            }
        }
        for arm in &report.arms {
            dir.progress(&json!({"event": "arm", "name": arm.name, "runtime_s": arm.runtime_s}))?;
        }
        let failed = report.arms.iter().find_map(|a| {
            a.error
                .as_ref()
                .map(|e| Error::SingularEvaluation(format!("arm {} failed: {e}", a.name)))
        });
        let m = manifest(CommandSpec::Bench, config, Vec::new(), dir, started, failed.as_ref());
        dir.write_manifest(&m)?;
        Ok((report.clone(), m))
    })
}

/// Runs the command recorded in `manifest` again, writing to `out`.
pub fn rerun(manifest: &RunManifest, out: &Path) -> Result<RunManifest> {
    manifest.verify_inputs()?;
    let mut config = manifest.config.clone();
    config.seed = manifest.seed;
    match &manifest.command {
        CommandSpec::Simulate { frame_dtype } => cmd_simulate(&config, Some(*frame_dtype), out),
        CommandSpec::Reconstruct {
            frames,
            backgrounds,
            positions,
            frozen_positions,
        } => cmd_reconstruct(
            &config,
            &ReconstructInputs {
                frames: frames.clone(),
                backgrounds: backgrounds.clone(),
                positions: positions.clone(),
                frozen_positions: *frozen_positions,
            },
            out,
        ),
        CommandSpec::Bench => cmd_bench(&config, out).map(|r| r.1),
    }
}
