//! Optimizer checkpoints: a directory holding the volume container, the emitter
//! table and the remaining state as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::{Diagnostic, ObjectiveRecord, OptimState};

use super::manifest::OutputDir;
use super::tables::{decode_fluorophores, encode_fluorophores};
use super::volume::{decode_volume, encode_volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateMeta {
    frames: Vec<usize>,
    outer_iteration: usize,
    volume_step: f64,
    history: Vec<ObjectiveRecord>,
    diagnostics: Vec<Diagnostic>,
}

/// Writes `state` under `dir` (relative to the output root). Emitter ids are stack indices.
pub fn write_checkpoint(out: &mut OutputDir, dir: &str, state: &OptimState) -> Result<()> {
    out.write(&format!("{dir}/volume.bin"), &encode_volume(&state.volume))?;
    let rows: Vec<_> = state.frames.iter().copied().zip(state.molecules.iter().copied()).collect();
    out.write(&format!("{dir}/fluorophores.csv"), &encode_fluorophores(&rows)?)?;
    let meta = StateMeta {
        frames: state.frames.clone(),
        outer_iteration: state.outer_iteration,
        volume_step: state.volume_step,
        history: state.history.clone(),
        diagnostics: state.diagnostics.clone(),
    };
    out.write(&format!("{dir}/state.json"), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<OptimState> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::io(p, e))
    };
    let volume = decode_volume(&read("volume.bin")?)?;
    let rows = decode_fluorophores(&read("fluorophores.csv")?)?;
    let meta: StateMeta = serde_json::from_slice(&read("state.json")?)?;
    if rows.iter().map(|r| r.0).ne(meta.frames.iter().copied()) {
        return Err(Error::invalid("checkpoint emitter ids disagree with its frame list"));
    }
    let mut state = OptimState::new(volume, rows.into_iter().map(|r| r.1).collect(), meta.frames)?;
    state.outer_iteration = meta.outer_iteration;
    state.volume_step = meta.volume_step;
    state.history = meta.history;
    state.diagnostics = meta.diagnostics;
    Ok(state)
}
