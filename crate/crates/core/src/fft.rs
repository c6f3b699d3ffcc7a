//! Separable 3-D FFTs over x-fastest buffers, with pruned variants for
//! zero-padded convolutions whose input and output live in a corner sub-box.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

/// Lines gathered per batch for the strided axes.
const BATCH: usize = 64;

pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [C64]) {
        self.forward_pruned(data, self.dims);
    }

    /// Inverse transform, normalized by `1/N`.
    pub fn inverse(&self, data: &mut [C64]) {
        self.inverse_pruned(data, self.dims);
    }

    /// Forward transform of data that is zero outside `[0, sub)`.
    pub fn forward_pruned(&self, data: &mut [C64], sub: [usize; 3]) {
        assert_eq!(data.len(), self.len());
        self.axis_x(data, &self.forward[0], sub[1], sub[2]);
        self.axis_y(data, &self.forward[1], sub[2]);
        self.axis_z(data, &self.forward[2]);
    }

    /// Inverse transform, exact only inside `[0, sub)`; normalized by `1/N`.
    pub fn inverse_pruned(&self, data: &mut [C64], sub: [usize; 3]) {
        assert_eq!(data.len(), self.len());
        self.axis_z(data, &self.inverse[2]);
        self.axis_y(data, &self.inverse[1], sub[2]);
        self.axis_x(data, &self.inverse[0], sub[1], sub[2]);
        let scale = 1.0 / self.len() as f64;
        let [nx, ny, _] = self.dims;
        for k in 0..sub[2] {
            for j in 0..sub[1] {
                let row = (k * ny + j) * nx;
                for v in &mut data[row..row + sub[0]] {
                    *v *= scale;
                }
            }
        }
    }

    fn axis_x(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>, rows_y: usize, slabs_z: usize) {
        let [nx, ny, _] = self.dims;
        if nx == 1 {
            return;
        }
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        for k in 0..slabs_z {
            let start = k * ny * nx;
            fft.process_with_scratch(&mut data[start..start + rows_y * nx], &mut scratch);
        }
    }

    fn axis_y(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>, slabs_z: usize) {
        let [nx, ny, _] = self.dims;
        if ny == 1 {
            return;
        }
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        let mut buf = vec![C64::default(); nx * ny];
        for k in 0..slabs_z {
            let slab = &mut data[k * nx * ny..(k + 1) * nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    buf[i * ny + j] = slab[j * nx + i];
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..ny {
                for i in 0..nx {
                    slab[j * nx + i] = buf[i * ny + j];
                }
            }
        }
    }

    fn axis_z(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let [nx, ny, nz] = self.dims;
        if nz == 1 {
            return;
        }
        let plane = nx * ny;
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        let mut buf = vec![C64::default(); BATCH * nz];
        let mut q0 = 0;
        while q0 < plane {
            let b = BATCH.min(plane - q0);
            for k in 0..nz {
                let src = &data[k * plane + q0..k * plane + q0 + b];
                for (l, v) in src.iter().enumerate() {
                    buf[l * nz + k] = *v;
                }
            }
            fft.process_with_scratch(&mut buf[..b * nz], &mut scratch);
            for k in 0..nz {
                let dst = &mut data[k * plane + q0..k * plane + q0 + b];
                for (l, v) in dst.iter_mut().enumerate() {
                    *v = buf[l * nz + k];
                }
            }
            q0 += b;
        }
    }
}

/// Signed integer frequency index of DFT bin `n` out of `len`.
#[inline]
pub fn signed_bin(n: usize, len: usize) -> i64 {
    if n < len.div_ceil(2) {
        n as i64
    } else {
        n as i64 - len as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(data: &[C64], dims: [usize; 3], sign: f64) -> Vec<C64> {
        let [nx, ny, nz] = dims;
        let mut out = vec![C64::default(); data.len()];
        for kz in 0..nz {
            for ky in 0..ny {
                for kx in 0..nx {
                    let mut acc = C64::default();
                    for z in 0..nz {
                        for y in 0..ny {
                            for x in 0..nx {
                                let phase = sign
                                    * 2.0
                                    * std::f64::consts::PI
                                    * ((kx * x) as f64 / nx as f64
                                        + (ky * y) as f64 / ny as f64
                                        + (kz * z) as f64 / nz as f64);
                                acc += data[x + nx * (y + ny * z)] * C64::from_polar(1.0, phase);
                            }
                        }
                    }
                    out[kx + nx * (ky + ny * kz)] = acc;
                }
            }
        }
        out
    }

    fn test_data(dims: [usize; 3], sub: [usize; 3]) -> Vec<C64> {
        let mut v = vec![C64::default(); dims.iter().product()];
        for z in 0..sub[2] {
            for y in 0..sub[1] {
                for x in 0..sub[0] {
                    let s = (x * 7 + y * 13 + z * 29) as f64;
                    v[x + dims[0] * (y + dims[1] * z)] = C64::new(s.sin(), (0.3 * s).cos());
                }
            }
        }
        v
    }

    #[test]
    fn forward_matches_naive_dft() {
        let dims = [6, 4, 5];
        let data = test_data(dims, dims);
        let mut fast = data.clone();
        Fft3::new(dims).forward(&mut fast);
        let slow = naive_dft(&data, dims, -1.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn pruned_round_trip() {
        let dims = [8, 6, 4];
        let sub = [4, 3, 2];
        let data = test_data(dims, sub);
        let fft = Fft3::new(dims);
        let mut full = data.clone();
        fft.forward(&mut full);
        let mut pruned = data.clone();
        fft.forward_pruned(&mut pruned, sub);
        for (a, b) in full.iter().zip(&pruned) {
            assert!((a - b).norm() < 1e-12);
        }
        fft.inverse_pruned(&mut pruned, sub);
        for z in 0..sub[2] {
            for y in 0..sub[1] {
                for x in 0..sub[0] {
                    let idx = x + dims[0] * (y + dims[1] * z);
                    assert!((pruned[idx] - data[idx]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn planar_transform() {
        let dims = [8, 8, 1];
        let data = test_data(dims, dims);
        let mut v = data.clone();
        let fft = Fft3::new(dims);
        fft.forward(&mut v);
        let slow = naive_dft(&data, dims, -1.0);
        for (a, b) in v.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        fft.inverse(&mut v);
        for (a, b) in v.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn signed_bins() {
        assert_eq!((0..4).map(|n| signed_bin(n, 4)).collect::<Vec<_>>(), vec![0, 1, -2, -1]);
        assert_eq!((0..5).map(|n| signed_bin(n, 5)).collect::<Vec<_>>(), vec![0, 1, 2, -2, -1]);
    }
}
