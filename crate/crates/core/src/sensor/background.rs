//! Background synthesis (smoothed noise with keyframe interpolation in time)
//! and its estimation from the frames (temporal running minimum then spatial
//! Gaussian smoothing).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream_rng, streams};

use super::{gaussian_blur_2d, BiplaneConfig, FrameStack};

/// Relative modulation depth of synthesized backgrounds around `level`.
pub const BACKGROUND_MODULATION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub level: f64,
    pub spatial_scale_um: f64,
    pub temporal_scale_frames: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            level: 100.0,
            spatial_scale_um: 1.0,
            temporal_scale_frames: 10.0,
        }
    }
}

/// Generates `frames` background vectors (length `M` each).
pub fn synthesize_background(
    config: &BiplaneConfig,
    frames: usize,
    spec: &BackgroundSpec,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(spec.spatial_scale_um > 0.0) || !(spec.temporal_scale_frames > 0.0) {
        return Err(Error::invalid("background scales must be > 0"));
    }
    if !(spec.level >= 0.0) {
        return Err(Error::invalid("background level must be >= 0"));
    }
    let m = config.measurement_count();
    if spec.level == 0.0 {
        return Ok(vec![vec![0.0; m]; frames]);
    }
    let [mx, my] = config.camera_counts;
    let sigma_px = spec.spatial_scale_um / config.pixel_pitch_um;
    let keyframes = ((frames.saturating_sub(1)) as f64 / spec.temporal_scale_frames).ceil() as usize + 1;
    let mut rng = stream_rng(seed, streams::BACKGROUND);
    let patterns: Vec<Vec<f64>> = (0..keyframes)
        .map(|_| {
            let white: Vec<f64> = (0..mx * my).map(|_| standard_normal(&mut rng)).collect();
            let smooth = gaussian_blur_2d(&white, mx, my, sigma_px);
            let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
            let var = smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / smooth.len() as f64;
            let sd = var.sqrt().max(f64::MIN_POSITIVE);
            smooth.iter().map(|v| (v - mean) / sd).collect()
        })
        .collect();
    Ok((0..frames)
        .map(|l| {
            let t = l as f64 / spec.temporal_scale_frames;
            let k0 = (t.floor() as usize).min(keyframes - 1);
            let k1 = (k0 + 1).min(keyframes - 1);
            let w = t - k0 as f64;
            let plane: Vec<f64> = patterns[k0]
                .iter()
                .zip(&patterns[k1])
                .map(|(a, b)| {
                    let n = (1.0 - w) * a + w * b;
                    spec.level * (1.0 + BACKGROUND_MODULATION * n).max(0.0)
                })
                .collect();
            let mut both = plane.clone();
            both.extend_from_slice(&plane);
            both
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundEstimate {
    pub backgrounds: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Expected maximum of `n` standard normals (Blom's approximation).
fn expected_normal_max(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf((n as f64 - 0.375) / (n as f64 + 0.25))
}

/// Estimates per-frame backgrounds.
///
/// For each frame the minimum over a temporal window of `temporal_window`
/// frames is taken per measurement and then smoothed with a Gaussian of
/// `spatial_sigma_um`. With `shot_noise_correction`, the minimum of `n`
/// Poisson counts is lifted by its expected order-statistic offset
/// (`b = m + e_n sqrt(b)`) before smoothing.
pub fn estimate_background(
    stack: &FrameStack,
    spatial_sigma_um: f64,
    temporal_window: usize,
    shot_noise_correction: bool,
) -> Result<BackgroundEstimate> {
    if stack.is_empty() {
        return Err(Error::invalid("cannot estimate backgrounds of an empty stack"));
    }
    if temporal_window == 0 {
        return Err(Error::invalid("temporal window must be >= 1"));
    }
    let l = stack.len();
    let mut warnings = Vec::new();
    let window = if temporal_window > l {
        let msg = format!("temporal window {temporal_window} exceeds {l} frames; clamped");
        log::warn!("{msg}");
        warnings.push(msg);
        l
    } else {
        temporal_window
    };
    let config = stack.config();
    let [mx, my] = config.camera_counts;
    let per_plane = mx * my;
    let sigma_px = spatial_sigma_um / config.pixel_pitch_um;
    let e_n = expected_normal_max(window);
    let frames = stack.frames();
    let m = config.measurement_count();

    let backgrounds = (0..l)
        .map(|t| {
            let start = t.saturating_sub(window / 2).min(l - window);
            let mut minimum = vec![f64::INFINITY; m];
            for f in &frames[start..start + window] {
                for (mn, v) in minimum.iter_mut().zip(&f.values) {
                    *mn = mn.min(*v);
                }
            }
            if shot_noise_correction {
                for v in &mut minimum {
                    let root = 0.5 * (e_n + (e_n * e_n + 4.0 * v.max(0.0)).sqrt());
                    *v = root * root;
                }
            }
            let mut out = Vec::with_capacity(m);
            for plane in minimum.chunks(per_plane) {
                out.extend(gaussian_blur_2d(plane, mx, my, sigma_px).into_iter().map(|v| v.max(0.0)));
            }
            out
        })
        .collect();
    Ok(BackgroundEstimate {
        backgrounds,
        warnings,
    })
}
