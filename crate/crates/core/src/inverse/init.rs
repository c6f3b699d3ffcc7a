//! Starting point for the joint optimization: a widefield volume and one
//! emitter estimate per frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluorophore::Fluorophore;
use crate::grid::Vec3;
use crate::sensor::{gaussian_blur_2d, FrameStack};
use crate::volume::ScatteringVolume;

use super::model::ForwardModel;
use super::optimizer::{Block, Diagnostic, OptimState, AMPLITUDE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerSettings {
    /// Peak value of the initial potential.
    pub peak_potential: f64,
    /// Gaussian matched-filter width, camera pixels.
    pub filter_sigma_px: f64,
    /// Half width of the window summed for the biplane ratio, camera pixels.
    pub window_radius_px: usize,
    /// Detection threshold in robust standard deviations of the filtered frame.
    pub detection_threshold: f64,
    /// Axial sampling of the free-space calibration curve, µm.
    pub calibration_step_um: f64,
}

impl Default for LocalizerSettings {
    fn default() -> Self {
        Self {
            peak_potential: 12.0,
            filter_sigma_px: 1.5,
            window_radius_px: 4,
            detection_threshold: 6.0,
            calibration_step_um: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Built-in single-emitter localizer on every frame.
    Localizer,
    /// One emitter per frame, in stack order, used verbatim.
    Provided(Vec<Fluorophore>),
}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub state: OptimState,
    /// Acquisition indices of frames without a detectable emitter.
    pub dropped: Vec<usize>,
}

/// Background-subtracted mean frame, planes averaged, as an `Mx x My` image.
fn widefield_image(stack: &FrameStack) -> Vec<f64> {
    let per_plane = stack.config().pixels_per_plane();
    let mut sum = vec![0.0; per_plane];
    for frame in stack.frames() {
        for (m, (y, b)) in frame.values.iter().zip(&frame.background).enumerate() {
            sum[m % per_plane] += (y - b).max(0.0);
        }
    }
    let scale = 1.0 / (2 * stack.len()) as f64;
    sum.iter().map(|v| v * scale).collect()
}

/// Widefield image resampled (nearest camera pixel) onto the grid, replicated along z,
/// and scaled so its maximum equals `peak`.
pub fn widefield_volume(stack: &FrameStack, model: &ForwardModel, peak: f64) -> Result<ScatteringVolume> {
    if !(peak >= 0.0) {
        return Err(Error::invalid("peak potential must be >= 0"));
    }
    let grid = model.grid();
    let config = stack.config();
    let image = widefield_image(stack);
    let max = image.iter().copied().fold(0.0, f64::max);
    let [nx, ny, nz] = grid.counts();
    let [mx, my] = config.camera_counts;
    let c = grid.center();
    let nearest = |axis: usize, x: f64, m: usize| {
        let off = (x - c[axis]) / config.pixel_pitch_um + (m as f64 - 1.0) / 2.0;
        off.round().clamp(0.0, (m - 1) as f64) as usize
    };
    let mut slice = vec![0.0; nx * ny];
    if max > 0.0 {
        for j in 0..ny {
            let pj = nearest(1, grid.axis_center(1, j), my);
            for i in 0..nx {
                let pi = nearest(0, grid.axis_center(0, i), mx);
                slice[i + nx * j] = peak * image[pi + mx * pj] / max;
            }
        }
    }
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..nz {
        values.extend_from_slice(&slice);
    }
    ScatteringVolume::new(*grid, values)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Vertex offset of the parabola through three equally spaced samples, in samples.
fn parabola_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom < 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// `(W0 - W1) / (W0 + W1)` over a square window of the two planes.
fn biplane_ratio(signal: &[f64], counts: [usize; 2], center: [usize; 2], radius: usize) -> f64 {
    let [mx, my] = counts;
    let per_plane = mx * my;
    let mut w = [0.0; 2];
    for j in center[1].saturating_sub(radius)..(center[1] + radius + 1).min(my) {
        for i in center[0].saturating_sub(radius)..(center[0] + radius + 1).min(mx) {
            for (plane, acc) in w.iter_mut().enumerate() {
                *acc += signal[plane * per_plane + i + mx * j];
            }
        }
    }
    let total = w[0] + w[1];
    if total > 0.0 {
        (w[0] - w[1]) / total
    } else {
        0.0
    }
}

struct Detection {
    lateral: [f64; 2],
    pixel: [usize; 2],
    ratio: f64,
}

fn detect(signal: &[f64], model: &ForwardModel, settings: &LocalizerSettings) -> Option<Detection> {
    let config = model.camera().config();
    let [mx, my] = config.camera_counts;
    let per_plane = mx * my;
    let summed: Vec<f64> = (0..per_plane).map(|m| signal[m] + signal[m + per_plane]).collect();
    let filtered = gaussian_blur_2d(&summed, mx, my, settings.filter_sigma_px);
    let (peak_idx, &peak) = filtered
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let med = median(filtered.clone());
    let mad = median(filtered.iter().map(|v| (v - med).abs()).collect());
    let noise = 1.4826 * mad;
    if !(peak > med) || peak - med <= settings.detection_threshold * noise {
        return None;
    }
    let (pi, pj) = (peak_idx % mx, peak_idx / mx);
    let at = |i: usize, j: usize| filtered[i + mx * j];
    let dx = if pi > 0 && pi + 1 < mx {
        parabola_offset(at(pi - 1, pj), at(pi, pj), at(pi + 1, pj))
    } else {
        0.0
    };
    let dy = if pj > 0 && pj + 1 < my {
        parabola_offset(at(pi, pj - 1), at(pi, pj), at(pi, pj + 1))
    } else {
        0.0
    };
    let c = model.grid().center();
    let xs = config.pixel_centers(0, c[0]);
    let ys = config.pixel_centers(1, c[1]);
    let pitch = config.pixel_pitch_um;
    Some(Detection {
        lateral: [xs[pi] + dx * pitch, ys[pj] + dy * pitch],
        pixel: [pi, pj],
        ratio: biplane_ratio(signal, config.camera_counts, [pi, pj], settings.window_radius_px),
    })
}

/// Free-space biplane ratio over the grid's depth range at lateral position `xy`.
fn calibration_curve(
    model: &ForwardModel,
    xy: [f64; 2],
    pixel: [usize; 2],
    settings: &LocalizerSettings,
) -> Result<Vec<(f64, f64)>> {
    let grid = model.grid();
    let lo = grid.origin()[2];
    let hi = grid.upper()[2];
    let steps = ((hi - lo) / settings.calibration_step_um).ceil().max(1.0) as usize;
    let counts = model.camera().config().camera_counts;
    (0..=steps)
        .map(|s| {
            let z = lo + (hi - lo) * s as f64 / steps as f64;
            let image = model.free_space_image([xy[0], xy[1], z])?;
            Ok((z, biplane_ratio(&image, counts, pixel, settings.window_radius_px)))
        })
        .collect()
}

/// Depth whose calibrated ratio is closest to `ratio`, linearly interpolated between samples.
fn axial_from_ratio(curve: &[(f64, f64)], ratio: f64) -> f64 {
    let mut best = (f64::INFINITY, curve[0].0);
    for w in curve.windows(2) {
        let ((z0, r0), (z1, r1)) = (w[0], w[1]);
        let (lo, hi) = if r0 <= r1 { (r0, r1) } else { (r1, r0) };
        if ratio >= lo && ratio <= hi && r1 != r0 {
            let z = z0 + (ratio - r0) / (r1 - r0) * (z1 - z0);
            return z;
        }
        for &(z, r) in &[w[0], w[1]] {
            if (r - ratio).abs() < best.0 {
                best = ((r - ratio).abs(), z);
            }
        }
    }
    best.1
}

/// Least-squares amplitude of the free-space image against the background-subtracted frame.
fn fit_amplitude(model: &ForwardModel, p: Vec3, signal: &[f64]) -> Result<f64> {
    let h = model.free_space_image(p)?;
    let hh: f64 = h.iter().map(|v| v * v).sum();
    let hy: f64 = h.iter().zip(signal).map(|(a, b)| a * b).sum();
    let s = if hh > 0.0 { hy / hh } else { 0.0 };
    Ok(s.max(AMPLITUDE_FLOOR * AMPLITUDE_FLOOR).sqrt())
}

/// Single-emitter estimate for one frame, or `None` if no emitter stands out of the noise.
pub fn localize_frame(
    values: &[f64],
    background: &[f64],
    model: &ForwardModel,
    settings: &LocalizerSettings,
) -> Result<Option<Fluorophore>> {
    let signal: Vec<f64> = values.iter().zip(background).map(|(y, b)| (y - b).max(0.0)).collect();
    let Some(det) = detect(&signal, model, settings) else {
        return Ok(None);
    };
    let curve = calibration_curve(model, det.lateral, det.pixel, settings)?;
    let z = axial_from_ratio(&curve, det.ratio);
    let p = model.grid().clamp([det.lateral[0], det.lateral[1], z]);
    let a = fit_amplitude(model, p, &signal)?;
    Ok(Some(Fluorophore::new(p, a)?))
}

/// Builds the starting volume and emitters; frames without a detection are dropped and logged.
pub fn initialize(
    stack: &FrameStack,
    model: &ForwardModel,
    strategy: &InitStrategy,
    settings: &LocalizerSettings,
) -> Result<Initialization> {
    if stack.is_empty() {
        return Err(Error::invalid("cannot initialize from an empty stack"));
    }
    if stack.config() != model.camera().config() {
        return Err(Error::invalid("stack and model camera configurations differ"));
    }
    let volume = widefield_volume(stack, model, settings.peak_potential)?;
    let estimates: Vec<Option<Fluorophore>> = match strategy {
        InitStrategy::Provided(list) => {
            if list.len() != stack.len() {
                return Err(Error::invalid(format!(
                    "{} provided emitters for {} frames",
                    list.len(),
                    stack.len()
                )));
            }
            list.iter().copied().map(Some).collect()
        }
        InitStrategy::Localizer => stack
            .frames()
            .par_iter()
            .map(|f| localize_frame(&f.values, &f.background, model, settings))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut molecules = Vec::new();
    let mut frames = Vec::new();
    let mut dropped = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, est) in estimates.into_iter().enumerate() {
        match est {
            Some(m) => {
                molecules.push(m);
                frames.push(idx);
            }
            None => {
                let acquisition = stack.order()[idx];
                log::warn!("no emitter detected in frame {acquisition}; frame dropped");
                diagnostics.push(Diagnostic {
                    outer: 0,
                    block: Block::Initial,
                    frame: Some(acquisition),
                    message: "no emitter detected; frame dropped".into(),
                });
                dropped.push(acquisition);
            }
        }
    }
    if molecules.is_empty() {
        return Err(Error::invalid("no frame contains a detectable emitter"));
    }
    let mut state = OptimState::new(volume, molecules, frames)?;
    state.diagnostics = diagnostics;
    Ok(Initialization { state, dropped })
}
