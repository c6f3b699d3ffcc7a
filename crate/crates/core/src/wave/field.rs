use crate::error::{Error, Result};
use crate::fft::C64;
use crate::grid::Grid3;

/// Complex scalar field sampled at the voxel centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid3,
    values: Vec<C64>,
}

impl ComplexField {
    pub fn new(grid: Grid3, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} samples but the grid has {} voxels",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            values: vec![C64::default(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn norm(&self) -> f64 {
        super::norm(&self.values)
    }

    /// The `k`-th z-slice, x fastest.
    pub fn z_slice(&self, k: usize) -> &[C64] {
        let [nx, ny, _] = self.grid.counts();
        &self.values[k * nx * ny..(k + 1) * nx * ny]
    }
}
