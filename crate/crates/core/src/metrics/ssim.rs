use crate::error::{Error, Result};
use crate::volume::ScatteringVolume;

pub const DEFAULT_WINDOW_SIGMA: f64 = 1.5;

/// Normalized 1-D Gaussian taps with radius `ceil(3.5 sigma)`.
fn taps(sigma: f64) -> Vec<f64> {
    let radius = (3.5 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter with zero extension (normalization happens by the caller).
fn filter(data: &[f64], dims: [usize; 3], taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut cur = data.to_vec();
    let mut next = vec![0.0; data.len()];
    for axis in 0..3 {
        let n = dims[axis] as isize;
        let s = strides[axis];
        for (idx, out) in next.iter_mut().enumerate() {
            let pos = ((idx / s) % dims[axis]) as isize;
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                let q = pos + t as isize - radius;
                if q >= 0 && q < n {
                    acc += w * cur[(idx as isize + (q - pos) * s as isize) as usize];
                }
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Mean local SSIM with a Gaussian window (`window_sigma` voxels), truncated at the
/// volume boundary and renormalized. `dynamic_range` defaults to the range of `a`.
pub fn ssim_volume(
    a: &ScatteringVolume,
    b: &ScatteringVolume,
    window_sigma: f64,
    dynamic_range: Option<f64>,
) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::invalid("SSIM needs volumes on the same grid"));
    }
    if !(window_sigma > 0.0) {
        return Err(Error::invalid("SSIM window sigma must be > 0"));
    }
    let range = dynamic_range.unwrap_or(a.max() - a.min());
    if !(range > 0.0) {
        return Err(Error::invalid("SSIM dynamic range must be > 0"));
    }
    let dims = a.grid().counts();
    let x = a.values();
    let y = b.values();
    let t = taps(window_sigma);
    let norm = filter(&vec![1.0; x.len()], dims, &t);
    let local = |v: Vec<f64>| -> Vec<f64> {
        filter(&v, dims, &t).iter().zip(&norm).map(|(s, n)| s / n).collect()
    };
    let mx = local(x.to_vec());
    let my = local(y.to_vec());
    let mxx = local(x.iter().map(|v| v * v).collect());
    let myy = local(y.iter().map(|v| v * v).collect());
    let mxy = local(x.iter().zip(y).map(|(p, q)| p * q).collect());
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let mut total = 0.0;
    for i in 0..x.len() {
        let vx = mxx[i] - mx[i] * mx[i];
        let vy = myy[i] - my[i] * my[i];
        let cxy = mxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2))
            / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    Ok(total / x.len() as f64)
}
