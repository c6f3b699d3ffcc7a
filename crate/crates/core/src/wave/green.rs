//! Discrete volume convolution with the Helmholtz Green's function.
//!
//! The kernel is sampled on voxel offsets and embedded in a zero-padded
//! periodic box at least twice the grid size, so the circular FFT product is
//! exactly the aperiodic convolution over the grid. Kernel support is the
//! set of offsets that occur inside the grid, which truncates `g` beyond the
//! domain diameter. The singular self-term is the integral of `g` over a ball
//! with the voxel's volume.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::{signed_bin, Fft3, C64};
use crate::grid::{Grid3, OpticalConstants};

pub struct GreenKernel {
    grid: Grid3,
    padded: [usize; 3],
    spectrum: Vec<C64>,
    fft: Fft3,
    truncation_radius: f64,
    wavenumber: f64,
}

impl std::fmt::Debug for GreenKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenKernel")
            .field("grid", &self.grid)
            .field("padded", &self.padded)
            .field("truncation_radius", &self.truncation_radius)
            .finish()
    }
}

/// Integral of `exp(j k r) / (4 pi r)` over a ball of radius `radius`.
pub(crate) fn ball_integral(k: f64, radius: f64) -> C64 {
    let e = C64::from_polar(1.0, k * radius);
    (e * C64::new(1.0, -k * radius) - 1.0) / (k * k)
}

impl GreenKernel {
    pub fn new(grid: &Grid3, constants: &OpticalConstants, pad_factor: usize) -> Result<Self> {
        if pad_factor < 2 {
            return Err(Error::invalid(format!("pad_factor must be >= 2, got {pad_factor}")));
        }
        let counts = grid.counts();
        let padded = counts.map(|n| if n == 1 { 1 } else { pad_factor * n });
        let spacing = grid.spacing();
        let k = constants.wavenumber();
        let dv = grid.voxel_volume();
        let self_radius = (3.0 * dv / (4.0 * PI)).cbrt();
        let self_term = ball_integral(k, self_radius);

        let [px, py, pz] = padded;
        let mut spectrum = vec![C64::default(); px * py * pz];
        for iz in 0..pz {
            let oz = signed_bin(iz, pz);
            if oz.unsigned_abs() as usize >= counts[2] {
                continue;
            }
            for iy in 0..py {
                let oy = signed_bin(iy, py);
                if oy.unsigned_abs() as usize >= counts[1] {
                    continue;
                }
                for ix in 0..px {
                    let ox = signed_bin(ix, px);
                    if ox.unsigned_abs() as usize >= counts[0] {
                        continue;
                    }
                    let idx = ix + px * (iy + py * iz);
                    if ox == 0 && oy == 0 && oz == 0 {
                        spectrum[idx] = self_term;
                    } else {
                        let r = ((ox as f64 * spacing[0]).powi(2)
                            + (oy as f64 * spacing[1]).powi(2)
                            + (oz as f64 * spacing[2]).powi(2))
                        .sqrt();
                        spectrum[idx] = C64::from_polar(dv / (4.0 * PI * r), k * r);
                    }
                }
            }
        }
        let fft = Fft3::new(padded);
        fft.forward(&mut spectrum);
        let truncation_radius = (0..3)
            .map(|a| (padded[a] as f64 * spacing[a]).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            grid: *grid,
            padded,
            spectrum,
            fft,
            truncation_radius,
            wavenumber: k,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn padded_dims(&self) -> [usize; 3] {
        self.padded
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    /// `out = G{input}`, the discrete volume integral `sum_z g(x - z) input(z) dV`.
    pub fn apply(&self, input: &[C64], out: &mut [C64]) {
        self.apply_impl(input, out, false);
    }

    /// `out = G^H{input}`.
    pub fn apply_adjoint(&self, input: &[C64], out: &mut [C64]) {
        self.apply_impl(input, out, true);
    }

    fn apply_impl(&self, input: &[C64], out: &mut [C64], adjoint: bool) {
        let n = self.grid.len();
        assert_eq!(input.len(), n);
        assert_eq!(out.len(), n);
        let [nx, ny, nz] = self.grid.counts();
        let [px, py, _] = self.padded;
        let mut buf = vec![C64::default(); self.fft.len()];
        for k in 0..nz {
            for j in 0..ny {
                let src = (k * ny + j) * nx;
                let dst = (k * py + j) * px;
                buf[dst..dst + nx].copy_from_slice(&input[src..src + nx]);
            }
        }
        let sub = [nx, ny, nz];
        self.fft.forward_pruned(&mut buf, sub);
        if adjoint {
            for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                *b *= s.conj();
            }
        } else {
            for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                *b *= s;
            }
        }
        self.fft.inverse_pruned(&mut buf, sub);
        for k in 0..nz {
            for j in 0..ny {
                let dst = (k * ny + j) * nx;
                let src = (k * py + j) * px;
                out[dst..dst + nx].copy_from_slice(&buf[src..src + nx]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::dot;

    fn setup(n: [usize; 3], pad: usize) -> (Grid3, GreenKernel) {
        let grid = Grid3::new(n, [0.1; 3], [0.0; 3]).unwrap();
        let k = GreenKernel::new(&grid, &OpticalConstants::water_647(), pad).unwrap();
        (grid, k)
    }

    fn pseudo_random(n: usize, seed: f64) -> Vec<C64> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.7548776662 + seed;
                C64::new((t * 12.9898).sin() * 0.5, (t * 78.233).cos() * 0.5)
            })
            .collect()
    }

    #[test]
    fn delta_reproduces_green_function() {
        let (grid, kernel) = setup([16, 16, 16], 2);
        let c = OpticalConstants::water_647();
        let center = grid.index(8, 8, 8);
        let mut input = vec![C64::default(); grid.len()];
        input[center] = C64::new(1.0 / grid.voxel_volume(), 0.0);
        let mut out = vec![C64::default(); grid.len()];
        kernel.apply(&input, &mut out);
        let xc = grid.voxel_center(8, 8, 8);
        let dx = grid.spacing()[0];
        let mut checked = 0;
        for idx in 0..grid.len() {
            let [i, j, k] = grid.unravel(idx);
            let x = grid.voxel_center(i, j, k);
            let r = crate::fluorophore::distance(x, xc);
            if r >= 3.0 * dx {
                let g = crate::wave::spherical_wave_at(x, xc, 1.0, 0.0, c.wavenumber());
                assert!((out[idx] - g).norm() / g.norm() < 1e-3);
                checked += 1;
            }
        }
        assert!(checked > 3000);
    }

    #[test]
    fn linear() {
        let (grid, kernel) = setup([8, 6, 5], 2);
        let u = pseudo_random(grid.len(), 0.1);
        let v = pseudo_random(grid.len(), 0.9);
        let (a, b) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.5));
        let mix: Vec<C64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let mut gu = vec![C64::default(); grid.len()];
        let mut gv = gu.clone();
        let mut gm = gu.clone();
        kernel.apply(&u, &mut gu);
        kernel.apply(&v, &mut gv);
        kernel.apply(&mix, &mut gm);
        let scale = crate::wave::norm(&gm);
        for i in 0..grid.len() {
            assert!((gm[i] - (a * gu[i] + b * gv[i])).norm() < 1e-13 * scale);
        }
    }

    #[test]
    fn adjoint_identity() {
        let (grid, kernel) = setup([16, 16, 16], 2);
        let u = pseudo_random(grid.len(), 0.2);
        let v = pseudo_random(grid.len(), 0.6);
        let mut gu = vec![C64::default(); grid.len()];
        let mut ghv = gu.clone();
        kernel.apply(&u, &mut gu);
        kernel.apply_adjoint(&v, &mut ghv);
        let lhs = dot(&v, &gu);
        let rhs = dot(&ghv, &u);
        assert!((lhs - rhs).norm() / lhs.norm() < 1e-10);
    }

    #[test]
    fn matches_direct_summation() {
        let (grid, kernel) = setup([5, 4, 3], 2);
        let c = OpticalConstants::water_647();
        let u = pseudo_random(grid.len(), 0.4);
        let mut fast = vec![C64::default(); grid.len()];
        kernel.apply(&u, &mut fast);
        let dv = grid.voxel_volume();
        let self_term = ball_integral(c.wavenumber(), (3.0 * dv / (4.0 * PI)).cbrt());
        let centers = grid.voxel_centers();
        for (i, xi) in centers.iter().enumerate() {
            let mut acc = C64::default();
            for (j, xj) in centers.iter().enumerate() {
                let w = if i == j {
                    self_term
                } else {
                    crate::wave::spherical_wave_at(*xi, *xj, dv, 0.0, c.wavenumber())
                };
                acc += w * u[j];
            }
            assert!((acc - fast[i]).norm() < 1e-12 * acc.norm().max(1e-3));
        }
    }

    #[test]
    fn padding_is_already_exact() {
        let (grid, k2) = setup([8, 8, 6], 2);
        let (_, k4) = setup([8, 8, 6], 4);
        let u = pseudo_random(grid.len(), 0.3);
        let mut a = vec![C64::default(); grid.len()];
        let mut b = a.clone();
        k2.apply(&u, &mut a);
        k4.apply(&u, &mut b);
        let scale = crate::wave::norm(&a);
        for i in 0..grid.len() {
            assert!((a[i] - b[i]).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn ball_integral_small_k_limit() {
        // static limit: integral of 1/(4 pi r) over a ball is R^2 / 2
        let v = ball_integral(1e-3, 0.05);
        assert!((v.re - 0.05f64.powi(2) / 2.0).abs() < 1e-8);
        assert!(GreenKernel::new(
            &Grid3::new([2, 2, 2], [0.1; 3], [0.0; 3]).unwrap(),
            &OpticalConstants::water_647(),
            1
        )
        .is_err());
    }
}
