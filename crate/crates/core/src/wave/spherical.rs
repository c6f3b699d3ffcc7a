use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::grid::{Grid3, OpticalConstants, Vec3};

use super::ComplexField;

/// Smoothed spherical wave `a exp(j k r) / (4 pi r)` with `r = sqrt(|x - p|^2 + eps)`.
#[inline]
pub fn spherical_wave_at(x: Vec3, p: Vec3, amplitude: f64, eps: f64, k: f64) -> C64 {
    let d2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2) + (x[2] - p[2]).powi(2);
    let r = (d2 + eps).sqrt();
    C64::from_polar(amplitude / (4.0 * PI * r), k * r)
}

fn check_args(amplitude: f64, eps: f64) -> Result<()> {
    if !(amplitude > 0.0) {
        return Err(Error::invalid(format!("amplitude must be > 0, got {amplitude}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("smoothing must be >= 0, got {eps}")));
    }
    Ok(())
}

/// Evaluates the incident wave of an emitter at `p` on arbitrary points.
pub fn spherical_wave(
    points: &[Vec3],
    p: Vec3,
    amplitude: f64,
    eps: f64,
    constants: &OpticalConstants,
) -> Result<Vec<C64>> {
    check_args(amplitude, eps)?;
    let k = constants.wavenumber();
    points
        .iter()
        .map(|&x| {
            if eps == 0.0 && x == p {
                Err(Error::SingularEvaluation(format!(
                    "spherical wave evaluated at its source {p:?} without smoothing"
                )))
            } else {
                Ok(spherical_wave_at(x, p, amplitude, eps, k))
            }
        })
        .collect()
}

impl ComplexField {
    /// Incident wave of an emitter sampled on every voxel center.
    pub fn spherical_wave(
        grid: &Grid3,
        p: Vec3,
        amplitude: f64,
        eps: f64,
        constants: &OpticalConstants,
    ) -> Result<Self> {
        check_args(amplitude, eps)?;
        let k = constants.wavenumber();
        let [nx, ny, nz] = grid.counts();
        let mut values = Vec::with_capacity(grid.len());
        for kz in 0..nz {
            let z = grid.axis_center(2, kz);
            for j in 0..ny {
                let y = grid.axis_center(1, j);
                for i in 0..nx {
                    let x = [grid.axis_center(0, i), y, z];
                    if eps == 0.0 && x == p {
                        return Err(Error::SingularEvaluation(format!(
                            "emitter {p:?} sits on a voxel center and smoothing is zero"
                        )));
                    }
                    values.push(spherical_wave_at(x, p, amplitude, eps, k));
                }
            }
        }
        ComplexField::new(*grid, values)
    }
}

/// Derivatives of the smoothed spherical wave with respect to the source position.
pub fn spherical_wave_position_gradient(
    points: &[Vec3],
    p: Vec3,
    amplitude: f64,
    eps: f64,
    constants: &OpticalConstants,
) -> Result<[Vec<C64>; 3]> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "position gradient needs strictly positive smoothing, got {eps}"
        )));
    }
    check_args(amplitude, eps)?;
    let k = constants.wavenumber();
    let mut out = [
        Vec::with_capacity(points.len()),
        Vec::with_capacity(points.len()),
        Vec::with_capacity(points.len()),
    ];
    for &x in points {
        let d = [x[0] - p[0], x[1] - p[1], x[2] - p[2]];
        let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + eps).sqrt();
        // du/dr * dr/dp, with dr/dp = -(x - p) / r
        let du_dr = C64::from_polar(amplitude / (4.0 * PI * r * r), k * r) * C64::new(-1.0, k * r);
        let s = -du_dr / r;
        for a in 0..3 {
            out[a].push(s * d[a]);
        }
    }
    Ok(out)
}
