//! Regular voxel grids and the optical constants of the background medium.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or displacement in micrometers.
pub type Vec3 = [f64; 3];

/// Regular 3-D grid. Voxel `(i, j, k)` is centered at `origin + (idx + 1/2) * spacing`
/// and stored at linear index `i + nx * (j + ny * k)` (x fastest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    counts: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
}

impl Grid3 {
    pub fn new(counts: [usize; 3], spacing: Vec3, origin: Vec3) -> Result<Self> {
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid(format!("grid counts must be >= 1, got {counts:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("grid spacing must be > 0, got {spacing:?}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(Self {
            counts,
            spacing,
            origin,
        })
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Physical size of the domain along each axis.
    pub fn extent(&self) -> Vec3 {
        [
            self.counts[0] as f64 * self.spacing[0],
            self.counts[1] as f64 * self.spacing[1],
            self.counts[2] as f64 * self.spacing[2],
        ]
    }

    /// Upper corner of the domain.
    pub fn upper(&self) -> Vec3 {
        let e = self.extent();
        [
            self.origin[0] + e[0],
            self.origin[1] + e[1],
            self.origin[2] + e[2],
        ]
    }

    pub fn center(&self) -> Vec3 {
        let e = self.extent();
        [
            self.origin[0] + 0.5 * e[0],
            self.origin[1] + 0.5 * e[1],
            self.origin[2] + 0.5 * e[2],
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let nx = self.counts[0];
        let ny = self.counts[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn axis_center(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.spacing[axis]
    }

    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.axis_center(0, i),
            self.axis_center(1, j),
            self.axis_center(2, k),
        ]
    }

    /// All voxel centers in storage order.
    pub fn voxel_centers(&self) -> Vec<Vec3> {
        (0..self.len())
            .map(|idx| {
                let [i, j, k] = self.unravel(idx);
                self.voxel_center(i, j, k)
            })
            .collect()
    }

    /// Closed-box membership.
    pub fn contains(&self, p: Vec3) -> bool {
        let hi = self.upper();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// Strict interior membership.
    pub fn contains_strict(&self, p: Vec3) -> bool {
        let hi = self.upper();
        (0..3).all(|a| p[a] > self.origin[a] && p[a] < hi[a])
    }

    /// Componentwise projection onto the closed box.
    pub fn clamp(&self, p: Vec3) -> Vec3 {
        let hi = self.upper();
        [
            p[0].clamp(self.origin[0], hi[0]),
            p[1].clamp(self.origin[1], hi[1]),
            p[2].clamp(self.origin[2], hi[2]),
        ]
    }
}

/// Emission wavelength and background refractive index. The wavenumber is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalConstants {
    wavelength: f64,
    background_ri: f64,
}

impl OpticalConstants {
    pub fn new(wavelength_um: f64, background_ri: f64) -> Result<Self> {
        if !(wavelength_um > 0.0) || !wavelength_um.is_finite() {
            return Err(Error::invalid(format!("wavelength must be > 0, got {wavelength_um}")));
        }
        if !(background_ri > 1.0) || !background_ri.is_finite() {
            return Err(Error::invalid(format!(
                "background refractive index must be > 1, got {background_ri}"
            )));
        }
        Ok(Self {
            wavelength: wavelength_um,
            background_ri,
        })
    }

    /// Water at 647 nm.
    pub fn water_647() -> Self {
        Self {
            wavelength: 0.647,
            background_ri: 1.333,
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn background_ri(&self) -> f64 {
        self.background_ri
    }

    /// Wavenumber in the background medium, rad/µm.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.background_ri / self.wavelength
    }

    /// Vacuum wavenumber, rad/µm.
    pub fn vacuum_wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}
