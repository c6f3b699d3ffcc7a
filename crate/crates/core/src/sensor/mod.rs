//! Biplane camera model: pupil-limited angular-spectrum propagation from the
//! exit face of the volume to two defocused planes, intensity formation, shot
//! noise, and slowly varying fluorescent backgrounds.

mod background;
mod camera;
mod frames;
mod noise;

pub use background::{estimate_background, synthesize_background, BackgroundEstimate, BackgroundSpec};
pub use camera::{field_to_exit_plane, intensity, BiplaneConfig, Camera};
pub use frames::{Frame, FrameStack};
pub use noise::add_poisson_noise;

/// Separable Gaussian smoothing of an `nx * ny` plane (x fastest), replicate boundary.
pub(crate) fn gaussian_blur_2d(data: &[f64], nx: usize, ny: usize, sigma_px: f64) -> Vec<f64> {
    if !(sigma_px > 0.0) {
        return data.to_vec();
    }
    let radius = (4.0 * sigma_px).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma_px * sigma_px)).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / wsum).collect();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; data.len()];
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for (w, d) in weights.iter().zip(-radius..=radius) {
                acc += w * data[j * nx + clampi(i as isize + d, nx)];
            }
            tmp[j * nx + i] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for (w, d) in weights.iter().zip(-radius..=radius) {
                acc += w * tmp[clampi(j as isize + d, ny) * nx + i];
            }
            out[j * nx + i] = acc;
        }
    }
    out
}
