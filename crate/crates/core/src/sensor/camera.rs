use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_bin, Fft3, C64};
use crate::grid::{Grid3, OpticalConstants};
use crate::wave::ComplexField;

/// Biplane detection geometry. Lengths in micrometers, object space (unit magnification).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiplaneConfig {
    pub numerical_aperture: f64,
    pub plane_offsets_um: [f64; 2],
    pub pixel_pitch_um: f64,
    pub camera_counts: [usize; 2],
    pub focal_plane_z_um: f64,
}

impl BiplaneConfig {
    /// Standard water-immersion biplane setup whose camera field covers the grid's lateral extent.
    pub fn default_for(grid: &Grid3) -> Self {
        let pitch = 0.1;
        let ext = grid.extent();
        Self {
            numerical_aperture: 1.2,
            plane_offsets_um: [-0.3, 0.3],
            pixel_pitch_um: pitch,
            camera_counts: [
                (ext[0] / pitch).round().max(1.0) as usize,
                (ext[1] / pitch).round().max(1.0) as usize,
            ],
            focal_plane_z_um: grid.center()[2],
        }
    }

    pub fn validate(&self, constants: &OpticalConstants) -> Result<()> {
        let na = self.numerical_aperture;
        if !(na > 0.0 && na < constants.background_ri()) {
            return Err(Error::invalid(format!(
                "numerical aperture must lie in (0, {}), got {na}",
                constants.background_ri()
            )));
        }
        if self.plane_offsets_um[0] == self.plane_offsets_um[1] {
            return Err(Error::invalid("biplane offsets must be distinct"));
        }
        if !(self.pixel_pitch_um > 0.0) {
            return Err(Error::invalid("pixel pitch must be > 0"));
        }
        if self.camera_counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("camera counts must be >= 1"));
        }
        if !self.focal_plane_z_um.is_finite() {
            return Err(Error::invalid("focal plane must be finite"));
        }
        Ok(())
    }

    pub fn pixels_per_plane(&self) -> usize {
        self.camera_counts[0] * self.camera_counts[1]
    }

    /// Total measurement count `M = 2 Mx My`.
    pub fn measurement_count(&self) -> usize {
        2 * self.pixels_per_plane()
    }

    /// Camera pixel centers along one axis, centered on `center`.
    pub fn pixel_centers(&self, axis: usize, center: f64) -> Vec<f64> {
        let m = self.camera_counts[axis];
        (0..m)
            .map(|i| center + (i as f64 - (m as f64 - 1.0) / 2.0) * self.pixel_pitch_um)
            .collect()
    }
}

/// Top z-slice of a volume field, the input plane of the detection optics.
pub fn field_to_exit_plane(u: &ComplexField) -> &[C64] {
    let nz = u.grid().counts()[2];
    u.z_slice(nz - 1)
}

/// Squared modulus of the two camera fields, plane 0 first.
pub fn intensity(camera_fields: &[Vec<C64>; 2]) -> Vec<f64> {
    camera_fields
        .iter()
        .flat_map(|plane| plane.iter().map(|v| v.norm_sqr()))
        .collect()
}

struct PlaneTransfer {
    /// Transfer factor per in-band bin, laid out `bx + band_x * by`.
    transfer: Vec<C64>,
}

/// The detection operator `P`, precomputed for one grid and configuration.
pub struct Camera {
    config: BiplaneConfig,
    grid: Grid3,
    padded: [usize; 2],
    fft: Fft3,
    band_x: Vec<usize>,
    band_y: Vec<usize>,
    /// `Mx x band_x` and `My x band_y` evaluation matrices.
    eval_x: Vec<C64>,
    eval_y: Vec<C64>,
    planes: [PlaneTransfer; 2],
    warnings: Vec<String>,
}

impl std::fmt::Debug for Camera {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Camera")
            .field("config", &self.config)
            .field("padded", &self.padded)
            .field("band", &(self.band_x.len(), self.band_y.len()))
            .finish()
    }
}

impl Camera {
    pub fn new(config: &BiplaneConfig, grid: &Grid3, constants: &OpticalConstants) -> Result<Self> {
        config.validate(constants)?;
        let [nx, ny, _] = grid.counts();
        let spacing = grid.spacing();
        let padded = [2 * nx, 2 * ny];
        let k0 = constants.vacuum_wavenumber();
        let kb = constants.wavenumber();
        let cutoff = config.numerical_aperture * k0;

        let mut warnings = Vec::new();
        let nyquist_pitch = constants.wavelength() / (4.0 * config.numerical_aperture);
        if config.pixel_pitch_um > nyquist_pitch {
            let msg = format!(
                "camera pitch {} um is coarser than the intensity Nyquist pitch {:.4} um",
                config.pixel_pitch_um, nyquist_pitch
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }

        let freq = |n: usize, len: usize, d: f64| {
            2.0 * std::f64::consts::PI * signed_bin(n, len) as f64 / (len as f64 * d)
        };
        let band_x: Vec<usize> = (0..padded[0])
            .filter(|&n| freq(n, padded[0], spacing[0]).abs() <= cutoff)
            .collect();
        let band_y: Vec<usize> = (0..padded[1])
            .filter(|&n| freq(n, padded[1], spacing[1]).abs() <= cutoff)
            .collect();

        let center = grid.center();
        let x0 = grid.axis_center(0, 0);
        let y0 = grid.axis_center(1, 0);
        let xs = config.pixel_centers(0, center[0]);
        let ys = config.pixel_centers(1, center[1]);
        let mut eval_x = Vec::with_capacity(xs.len() * band_x.len());
        for &x in &xs {
            for &n in &band_x {
                eval_x.push(C64::from_polar(1.0, freq(n, padded[0], spacing[0]) * (x - x0)));
            }
        }
        let mut eval_y = Vec::with_capacity(ys.len() * band_y.len());
        for &y in &ys {
            for &n in &band_y {
                eval_y.push(C64::from_polar(1.0, freq(n, padded[1], spacing[1]) * (y - y0)));
            }
        }

        let z_exit = grid.axis_center(2, grid.counts()[2] - 1);
        let planes = config.plane_offsets_um.map(|offset| {
            let distance = config.focal_plane_z_um + offset - z_exit;
            let mut transfer = Vec::with_capacity(band_x.len() * band_y.len());
            for &ny_ in &band_y {
                let ky = freq(ny_, padded[1], spacing[1]);
                for &nx_ in &band_x {
                    let kx = freq(nx_, padded[0], spacing[0]);
                    let kt2 = kx * kx + ky * ky;
                    if kt2 <= cutoff * cutoff {
                        let kz = (kb * kb - kt2).sqrt();
                        transfer.push(C64::from_polar(1.0, kz * distance));
                    } else {
                        transfer.push(C64::default());
                    }
                }
            }
            PlaneTransfer { transfer }
        });

        Ok(Self {
            config: config.clone(),
            grid: *grid,
            padded,
            fft: Fft3::new([padded[0], padded[1], 1]),
            band_x,
            band_y,
            eval_x,
            eval_y,
            planes,
            warnings,
        })
    }

    pub fn config(&self) -> &BiplaneConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn exit_plane_len(&self) -> usize {
        let [nx, ny, _] = self.grid.counts();
        nx * ny
    }

    pub fn measurement_count(&self) -> usize {
        self.config.measurement_count()
    }

    /// Applies `P`: exit-plane field to the two camera-plane fields.
    pub fn apply_propagation(&self, exit: &[C64]) -> [Vec<C64>; 2] {
        let [nx, ny, _] = self.grid.counts();
        assert_eq!(exit.len(), nx * ny);
        let [px, py] = self.padded;
        let mut buf = vec![C64::default(); px * py];
        for j in 0..ny {
            buf[j * px..j * px + nx].copy_from_slice(&exit[j * nx..(j + 1) * nx]);
        }
        self.fft.forward_pruned(&mut buf, [nx, ny, 1]);
        let bx = self.band_x.len();
        let by = self.band_y.len();
        let mut band = vec![C64::default(); bx * by];
        for (b_y, &n_y) in self.band_y.iter().enumerate() {
            for (b_x, &n_x) in self.band_x.iter().enumerate() {
                band[b_x + bx * b_y] = buf[n_x + px * n_y];
            }
        }
        let norm = 1.0 / (px * py) as f64;
        self.planes.each_ref().map(|plane| {
            let spec: Vec<C64> = band
                .iter()
                .zip(&plane.transfer)
                .map(|(a, h)| a * h * norm)
                .collect();
            self.evaluate(&spec)
        })
    }

    /// Applies `P^H`: two camera-plane fields back to the exit plane.
    pub fn apply_adjoint(&self, camera: &[Vec<C64>; 2]) -> Vec<C64> {
        let [nx, ny, _] = self.grid.counts();
        let [px, py] = self.padded;
        let bx = self.band_x.len();
        let by = self.band_y.len();
        let mut band = vec![C64::default(); bx * by];
        for (plane, cam) in self.planes.iter().zip(camera) {
            let spec = self.evaluate_adjoint(cam);
            for ((b, s), h) in band.iter_mut().zip(&spec).zip(&plane.transfer) {
                *b += s * h.conj();
            }
        }
        let mut buf = vec![C64::default(); px * py];
        for (b_y, &n_y) in self.band_y.iter().enumerate() {
            for (b_x, &n_x) in self.band_x.iter().enumerate() {
                buf[n_x + px * n_y] = band[b_x + bx * b_y];
            }
        }
        // adjoint of the unnormalized forward DFT (with the 1/(px py) folded in) is the normalized inverse
        self.fft.inverse_pruned(&mut buf, [nx, ny, 1]);
        let mut out = vec![C64::default(); nx * ny];
        for j in 0..ny {
            out[j * nx..(j + 1) * nx].copy_from_slice(&buf[j * px..j * px + nx]);
        }
        out
    }

    /// Intensities `|P u|^2` for an exit-plane field.
    pub fn image(&self, exit: &[C64]) -> Vec<f64> {
        intensity(&self.apply_propagation(exit))
    }

    fn evaluate(&self, spec: &[C64]) -> Vec<C64> {
        let bx = self.band_x.len();
        let by = self.band_y.len();
        let [mx, my] = self.config.camera_counts;
        // t[mx, by] = sum_bx Ex[mx, bx] spec[bx, by]
        let mut t = vec![C64::default(); mx * by];
        for b_y in 0..by {
            let col = &spec[b_y * bx..(b_y + 1) * bx];
            for m in 0..mx {
                let row = &self.eval_x[m * bx..(m + 1) * bx];
                t[m + mx * b_y] = row.iter().zip(col).map(|(e, s)| e * s).sum();
            }
        }
        let mut out = vec![C64::default(); mx * my];
        for n in 0..my {
            let row = &self.eval_y[n * by..(n + 1) * by];
            for m in 0..mx {
                let mut acc = C64::default();
                for (b_y, e) in row.iter().enumerate() {
                    acc += e * t[m + mx * b_y];
                }
                out[m + mx * n] = acc;
            }
        }
        out
    }

    fn evaluate_adjoint(&self, cam: &[C64]) -> Vec<C64> {
        let bx = self.band_x.len();
        let by = self.band_y.len();
        let [mx, my] = self.config.camera_counts;
        assert_eq!(cam.len(), mx * my);
        let mut t = vec![C64::default(); mx * by];
        for n in 0..my {
            let row = &self.eval_y[n * by..(n + 1) * by];
            for m in 0..mx {
                let c = cam[m + mx * n];
                for (b_y, e) in row.iter().enumerate() {
                    t[m + mx * b_y] += e.conj() * c;
                }
            }
        }
        let mut spec = vec![C64::default(); bx * by];
        for b_y in 0..by {
            for m in 0..mx {
                let tv = t[m + mx * b_y];
                let row = &self.eval_x[m * bx..(m + 1) * bx];
                for (b_x, e) in row.iter().enumerate() {
                    spec[b_x + bx * b_y] += e.conj() * tv;
                }
            }
        }
        spec
    }
}
