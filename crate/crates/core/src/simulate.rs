//! Synthetic acquisitions: mean frames from known emitters plus background, and Poisson draws.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluorophore::Fluorophore;
use crate::inverse::ForwardModel;
use crate::rng::streams;
use crate::sensor::{add_poisson_noise, Frame, FrameStack};
use crate::volume::ScatteringVolume;

/// Mean intensities of several mutually incoherent emitters in one frame.
pub fn render_mean(model: &ForwardModel, volume: &ScatteringVolume, emitters: &[Fluorophore]) -> Result<Vec<f64>> {
    let mut total = vec![0.0; model.measurement_count()];
    for e in emitters {
        let img = model.forward(volume, e.position, e.amplitude)?;
        for (t, v) in total.iter_mut().zip(img) {
            *t += v;
        }
    }
    Ok(total)
}

/// One frame per entry of `per_frame`; counts are Poisson draws when `noise` is set,
/// otherwise the exact means.
pub fn simulate_frames(
    model: &ForwardModel,
    volume: &ScatteringVolume,
    per_frame: &[Vec<Fluorophore>],
    backgrounds: &[Vec<f64>],
    seed: u64,
    noise: bool,
) -> Result<FrameStack> {
    if per_frame.is_empty() {
        return Err(Error::invalid("at least one frame is required"));
    }
    if backgrounds.len() != per_frame.len() {
        return Err(Error::invalid("one background per frame is required"));
    }
    let frames = per_frame
        .par_iter()
        .zip(backgrounds)
        .enumerate()
        .map(|(l, (emitters, b))| {
            let mut mean = render_mean(model, volume, emitters)?;
            if b.len() != mean.len() {
                return Err(Error::invalid("background length differs from the measurement count"));
            }
            for (m, bg) in mean.iter_mut().zip(b) {
                *m += bg;
            }
            let values = if noise {
                add_poisson_noise(&mean, seed, streams::FRAME_NOISE_BASE + l as u64)?
            } else {
                mean
            };
            let mut frame = Frame::new(values, b.clone())?;
            frame.molecule_count = emitters.len();
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameStack::new(model.camera().config().clone(), frames)
}
