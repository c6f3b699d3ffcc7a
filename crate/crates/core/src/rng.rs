//! Seeded random streams and the Poisson sampler.
//!
//! All randomness goes through ChaCha20 keyed by a 64-bit seed. Independent
//! consumers (phantom shapes, molecule placement, per-frame noise, ...) use
//! distinct stream ids so that adding draws to one never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub use rand_chacha::ChaCha20Rng as StreamRng;

/// Name of the generator recorded in manifests.
pub const GENERATOR_NAME: &str = "chacha20";

pub mod streams {
    pub const PHANTOM_SHAPES: u64 = 1;
    pub const MOLECULE_POSITIONS: u64 = 2;
    pub const MOLECULE_AMPLITUDES: u64 = 3;
    pub const BACKGROUND: u64 = 4;
    /// Frame noise uses `FRAME_NOISE_BASE + frame_index`.
    pub const FRAME_NOISE_BASE: u64 = 1 << 32;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 > 0.0 {
            let u2: f64 = rng.random();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Poisson draw: sequential inversion below mean 30, PTRS transformed rejection above.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    debug_assert!(mean >= 0.0);
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            // rounding left a sliver of mass above the last representable term
            break;
        }
    }
    k
}

// Hörmann (1993), "The transformed rejection method for generating Poisson random variables".
fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= -mean + k * loglam - ln_factorial(k as u64)
        {
            return k as u64;
        }
    }
}

pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        (1..=k).map(|i| (i as f64).ln()).sum()
    } else {
        // Stirling series, accurate to ~1e-12 for k >= 16
        let x = k as f64 + 1.0;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}
