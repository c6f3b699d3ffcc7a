//! Sampled scattering potential `f = k_b^2 (eta^2 / eta_b^2 - 1)` and its refractive-index view.

use crate::error::{Error, Result};
use crate::grid::{Grid3, OpticalConstants};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScatteringVolume {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScatteringVolume {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "volume has {} values but the grid has {} voxels",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("volume values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Refractive-index map `eta = eta_b * sqrt(f / k_b^2 + 1)`.
    pub fn to_ri(&self, constants: &OpticalConstants) -> Result<Vec<f64>> {
        potential_to_ri(&self.values, constants)
    }
}

/// Converts a per-voxel refractive-index map into a scattering potential.
///
/// Contrast must be non-negative (`eta >= eta_b`), since the reconstruction
/// constrains `f >= 0`.
pub fn ri_to_potential(
    grid: Grid3,
    ri: &[f64],
    constants: &OpticalConstants,
) -> Result<ScatteringVolume> {
    if ri.len() != grid.len() {
        return Err(Error::invalid("refractive-index map does not match grid"));
    }
    let eta_b = constants.background_ri();
    let kb2 = constants.wavenumber().powi(2);
    let mut values = Vec::with_capacity(ri.len());
    for (idx, &eta) in ri.iter().enumerate() {
        if !(eta >= eta_b) {
            return Err(Error::Domain(format!(
                "refractive index {eta} at voxel {idx} is below the background {eta_b}"
            )));
        }
        let ratio = eta / eta_b;
        values.push(kb2 * (ratio * ratio - 1.0));
    }
    ScatteringVolume::new(grid, values)
}

pub fn potential_to_ri(values: &[f64], constants: &OpticalConstants) -> Result<Vec<f64>> {
    let eta_b = constants.background_ri();
    let kb2 = constants.wavenumber().powi(2);
    values
        .iter()
        .map(|&f| {
            let arg = f / kb2 + 1.0;
            if arg < 0.0 {
                Err(Error::Domain(format!("potential {f} below -k_b^2")))
            } else {
                Ok(eta_b * arg.sqrt())
            }
        })
        .collect()
}

/// Potential corresponding to a uniform refractive-index excess `delta_ri` over the background.
pub fn contrast_to_potential(delta_ri: f64, constants: &OpticalConstants) -> f64 {
    let ratio = (constants.background_ri() + delta_ri) / constants.background_ri();
    constants.wavenumber().powi(2) * (ratio * ratio - 1.0)
}
