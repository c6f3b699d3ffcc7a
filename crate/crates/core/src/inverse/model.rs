use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::grid::{Grid3, OpticalConstants, Vec3};
use crate::sensor::{field_to_exit_plane, intensity, BiplaneConfig, Camera};
use crate::volume::ScatteringVolume;
use crate::wave::{
    spherical_wave_position_gradient, ComplexField, GreenKernel, LsOperator, SolveReport,
    SolverSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub pad_factor: usize,
    /// `eps` of the smoothed norm, in µm^2.
    pub smoothing_um2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            pad_factor: 2,
            smoothing_um2: 1e-4,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl ModelSettings {
    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Unit-amplitude response of one emitter: total field, camera fields and intensities.
#[derive(Debug, Clone)]
pub struct BaseImage {
    pub field: Vec<C64>,
    pub camera: [Vec<C64>; 2],
    pub image: Vec<f64>,
    pub report: SolveReport,
}

/// The discrete forward model `H(f, p, a) = a^2 |P S u_t(f, p, 1)|^2`.
pub struct ForwardModel {
    grid: Grid3,
    constants: OpticalConstants,
    kernel: GreenKernel,
    camera: Camera,
    settings: ModelSettings,
    points: Vec<Vec3>,
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("grid", &self.grid)
            .field("constants", &self.constants)
            .field("settings", &self.settings)
            .finish()
    }
}

impl ForwardModel {
    pub fn new(
        grid: &Grid3,
        constants: &OpticalConstants,
        camera: &BiplaneConfig,
        settings: ModelSettings,
    ) -> Result<Self> {
        settings.solver().validate()?;
        if !(settings.smoothing_um2 >= 0.0) {
            return Err(Error::invalid("smoothing must be >= 0"));
        }
        let kernel = GreenKernel::new(grid, constants, settings.pad_factor)?;
        let camera = Camera::new(camera, grid, constants)?;
        Ok(Self {
            grid: *grid,
            constants: *constants,
            kernel,
            camera,
            settings,
            points: grid.voxel_centers(),
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn constants(&self) -> &OpticalConstants {
        &self.constants
    }

    pub fn kernel(&self) -> &GreenKernel {
        &self.kernel
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    pub fn measurement_count(&self) -> usize {
        self.camera.measurement_count()
    }

    pub fn with_solver(&self, tol: f64, max_iter: usize) -> Result<Self> {
        let settings = ModelSettings {
            tol,
            max_iter,
            ..self.settings
        };
        Self::new(&self.grid, &self.constants, self.camera.config(), settings)
    }

    fn check_volume(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.grid.len() {
            return Err(Error::invalid("volume does not match the model grid"));
        }
        Ok(())
    }

    pub fn incident(&self, p: Vec3, amplitude: f64) -> Result<ComplexField> {
        ComplexField::spherical_wave(&self.grid, p, amplitude, self.settings.smoothing_um2, &self.constants)
    }

    /// Unit-amplitude total field for an emitter at `p`.
    pub fn total_field(
        &self,
        f: &[f64],
        p: Vec3,
        warm: Option<&[C64]>,
    ) -> Result<(Vec<C64>, SolveReport)> {
        self.check_volume(f)?;
        let u_in = self.incident(p, 1.0)?;
        let op = LsOperator::from_slice(&self.kernel, f)?;
        if op.is_identity() {
            return Ok((
                u_in.into_values(),
                SolveReport {
                    iterations: 0,
                    relative_residual: 0.0,
                    converged: true,
                },
            ));
        }
        let (u, report) =
            crate::wave::bicgstab(|x, y| op.apply(x, y), u_in.values(), warm, self.settings.solver());
        if !report.converged {
            return Err(Error::SolverFailure {
                iterations: report.iterations,
                residual: report.relative_residual,
            });
        }
        Ok((u, report))
    }

    pub fn base_image(&self, f: &[f64], p: Vec3, warm: Option<&[C64]>) -> Result<BaseImage> {
        let (field, report) = self.total_field(f, p, warm)?;
        let camera = self.camera.apply_propagation(self.exit_slice(&field));
        let image = intensity(&camera);
        Ok(BaseImage {
            field,
            camera,
            image,
            report,
        })
    }

    fn exit_slice<'a>(&self, field: &'a [C64]) -> &'a [C64] {
        let [nx, ny, nz] = self.grid.counts();
        &field[(nz - 1) * nx * ny..]
    }

    /// Mean intensities `H(f, p, a)` without background or noise.
    pub fn forward(&self, f: &ScatteringVolume, p: Vec3, amplitude: f64) -> Result<Vec<f64>> {
        if f.grid() != &self.grid {
            return Err(Error::invalid("volume grid differs from the model grid"));
        }
        if !(amplitude > 0.0) {
            return Err(Error::invalid("amplitude must be > 0"));
        }
        let base = self.base_image(f.values(), p, None)?;
        let a2 = amplitude * amplitude;
        Ok(base.image.into_iter().map(|v| a2 * v).collect())
    }

    /// Unit-amplitude image in a homogeneous medium (no volume solve needed).
    pub fn free_space_image(&self, p: Vec3) -> Result<Vec<f64>> {
        let [nx, ny, _] = self.grid.counts();
        let top = &self.points[self.points.len() - nx * ny..];
        let exit = crate::wave::spherical_wave(top, p, 1.0, self.settings.smoothing_um2, &self.constants)?;
        Ok(self.camera.image(&exit))
    }

    /// Exit field extracted from a full volume field (for callers holding `ComplexField`s).
    pub fn exit_plane<'a>(&self, u: &'a ComplexField) -> &'a [C64] {
        field_to_exit_plane(u)
    }

    /// Volume right-hand side `S^T P^H c` of the adjoint system.
    pub fn adjoint_source(&self, camera_weights: &[Vec<C64>; 2]) -> Vec<C64> {
        let exit = self.camera.apply_adjoint(camera_weights);
        let mut out = vec![C64::default(); self.grid.len()];
        let start = self.grid.len() - exit.len();
        out[start..].copy_from_slice(&exit);
        out
    }

    /// Solves `(I - diag(f) G^H) w = rhs`.
    pub fn adjoint_solve(
        &self,
        f: &[f64],
        rhs: &[C64],
        warm: Option<&[C64]>,
    ) -> Result<(Vec<C64>, SolveReport)> {
        self.check_volume(f)?;
        let op = LsOperator::from_slice(&self.kernel, f)?;
        if op.is_identity() {
            return Ok((
                rhs.to_vec(),
                SolveReport {
                    iterations: 0,
                    relative_residual: 0.0,
                    converged: true,
                },
            ));
        }
        let (w, report) = crate::wave::bicgstab(
            |x, y| op.apply_adjoint(x, y),
            rhs,
            warm,
            self.settings.solver(),
        );
        if !report.converged {
            return Err(Error::SolverFailure {
                iterations: report.iterations,
                residual: report.relative_residual,
            });
        }
        Ok((w, report))
    }

    /// `2 Re(<w, d u_in / d p>)` for a unit-amplitude emitter.
    pub fn position_sensitivity(&self, adjoint: &[C64], p: Vec3) -> Result<Vec3> {
        let grads = spherical_wave_position_gradient(
            &self.points,
            p,
            1.0,
            self.settings.smoothing_um2,
            &self.constants,
        )?;
        let mut out = [0.0; 3];
        for a in 0..3 {
            out[a] = 2.0 * crate::wave::dot(adjoint, &grads[a]).re;
        }
        Ok(out)
    }

    /// `2 Re(conj(G^H w) u)` per voxel, the sensitivity of the data term to `f`.
    pub fn volume_sensitivity(&self, adjoint: &[C64], field: &[C64]) -> Vec<f64> {
        let mut ghw = vec![C64::default(); adjoint.len()];
        self.kernel.apply_adjoint(adjoint, &mut ghw);
        ghw.iter()
            .zip(field)
            .map(|(g, u)| 2.0 * (g.conj() * u).re)
            .collect()
    }
}
