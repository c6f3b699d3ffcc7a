use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use scatterloc::sensor::{
    add_poisson_noise, estimate_background, synthesize_background, BackgroundSpec, BiplaneConfig,
    Frame, FrameStack,
};
use scatterloc::Grid3;

fn config(n: usize) -> BiplaneConfig {
    let grid = Grid3::new([n, n, 8], [0.1; 3], [0.0; 3]).unwrap();
    BiplaneConfig::default_for(&grid)
}

fn stack_from(config: &BiplaneConfig, values: Vec<Vec<f64>>) -> FrameStack {
    let m = config.measurement_count();
    let frames = values
        .into_iter()
        .map(|v| Frame::new(v, vec![0.0; m]).unwrap())
        .collect();
    FrameStack::new(config.clone(), frames).unwrap()
}

#[test]
fn poisson_counts_match_moments() {
    for &mean in &[0.5, 7.0, 45.0, 1000.0] {
        let n = 1_000_000;
        let draws = add_poisson_noise(&vec![mean; n], 11, 99).unwrap();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of the mean is sqrt(mean / n); of the variance about mean * sqrt(2 / n)
        let se_mean = (mean / n as f64).sqrt();
        let se_var = (mean * mean * 2.0 / n as f64 + mean / n as f64).sqrt();
        assert!((m - mean).abs() < 5.0 * se_mean, "mean {m} for {mean}");
        assert!((v - mean).abs() < 5.0 * se_var, "variance {v} for {mean}");
        assert!(draws.iter().all(|d| d.fract() == 0.0 && *d >= 0.0));
    }
}

#[test]
fn zero_level_background_is_zero() {
    let c = config(16);
    let spec = BackgroundSpec {
        level: 0.0,
        ..Default::default()
    };
    let b = synthesize_background(&c, 5, &spec, 1).unwrap();
    assert_eq!(b.len(), 5);
    assert!(b.iter().flatten().all(|&v| v == 0.0));
}

fn spectrum_power(plane: &[f64], n: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::default(); n];
    for i in 0..n {
        for j in 0..n {
            col[j] = buf[i + n * j];
        }
        fft.process(&mut col);
        for j in 0..n {
            buf[i + n * j] = col[j];
        }
    }
    buf.iter().map(|z| z.norm_sqr()).collect()
}

#[test]
fn background_is_spatially_smooth() {
    let n = 64;
    let c = config(n);
    let spec = BackgroundSpec {
        level: 100.0,
        spatial_scale_um: 1.0,
        temporal_scale_frames: 10.0,
    };
    let b = synthesize_background(&c, 1, &spec, 3).unwrap();
    let plane: Vec<f64> = b[0][..n * n].to_vec();
    let mean = plane.iter().sum::<f64>() / plane.len() as f64;
    // Hann taper so the non-periodic edges do not leak into high frequencies
    let hann = |i: usize| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
    let centered: Vec<f64> = plane
        .iter()
        .enumerate()
        .map(|(idx, v)| (v - mean) * hann(idx % n) * hann(idx / n))
        .collect();
    let power = spectrum_power(&centered, n);
    // spatial frequencies above 1/scale (10 px period at 0.1 um pitch)
    let cutoff = n as f64 * 0.1 / spec.spatial_scale_um;
    let (mut low, mut high) = (0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let fi = (if i <= n / 2 { i } else { n - i }) as f64;
            let fj = (if j <= n / 2 { j } else { n - j }) as f64;
            let f = (fi * fi + fj * fj).sqrt();
            let p = power[i + n * j];
            if f > cutoff {
                high += p;
            } else {
                low += p;
            }
        }
    }
    let suppression_db = 10.0 * (low / high).log10();
    assert!(suppression_db > 20.0, "{suppression_db} dB");
}

#[test]
fn background_varies_slowly_in_time() {
    let c = config(16);
    let spec = BackgroundSpec::default();
    let b = synthesize_background(&c, 40, &spec, 5).unwrap();
    let level = spec.level;
    for t in 1..b.len() {
        let step = b[t]
            .iter()
            .zip(&b[t - 1])
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        // linear interpolation between keyframes moves each pixel by at most
        // the keyframe difference spread over the temporal scale
        assert!(step <= 2.0 * 4.0 * 0.3 * level / spec.temporal_scale_frames, "t={t} step {step}");
    }
    assert!(b.iter().flatten().all(|&v| v >= 0.0));
    let mean = b.iter().flatten().sum::<f64>() / (b.len() * b[0].len()) as f64;
    assert!((mean - level).abs() < 0.1 * level);
}

#[test]
fn background_is_reproducible() {
    let c = config(16);
    let spec = BackgroundSpec::default();
    let a = synthesize_background(&c, 4, &spec, 9).unwrap();
    let b = synthesize_background(&c, 4, &spec, 9).unwrap();
    let d = synthesize_background(&c, 4, &spec, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, d);
}

#[test]
fn constant_frames_estimate_the_constant() {
    let c = config(16);
    let m = c.measurement_count();
    let stack = stack_from(&c, vec![vec![250.0; m]; 6]);
    let est = estimate_background(&stack, 1.0, 5, false).unwrap();
    for b in &est.backgrounds {
        assert!(b.iter().all(|v| (v - 250.0).abs() <= 0.01 * 250.0));
    }
}

#[test]
fn oversized_window_is_clamped_with_warning() {
    let c = config(8);
    let m = c.measurement_count();
    let stack = stack_from(&c, vec![vec![3.0; m]; 3]);
    let est = estimate_background(&stack, 0.5, 10, false).unwrap();
    assert_eq!(est.warnings.len(), 1);
    assert_eq!(est.backgrounds.len(), 3);
}

#[test]
fn estimate_recovers_noisy_background() {
    let c = config(32);
    let spec = BackgroundSpec {
        level: 200.0,
        spatial_scale_um: 1.0,
        temporal_scale_frames: 20.0,
    };
    let frames = 30;
    let truth = synthesize_background(&c, frames, &spec, 21).unwrap();
    let noisy: Vec<Vec<f64>> = truth
        .iter()
        .enumerate()
        .map(|(t, b)| add_poisson_noise(b, 21, 100 + t as u64).unwrap())
        .collect();
    let stack = stack_from(&c, noisy);
    let est = estimate_background(&stack, 0.3, 5, true).unwrap();
    let mut err = 0.0;
    let mut norm = 0.0;
    for (e, t) in est.backgrounds.iter().zip(&truth) {
        for (a, b) in e.iter().zip(t) {
            err += (a - b).powi(2);
            norm += b * b;
        }
    }
    let rel = (err / norm).sqrt();
    assert!(rel < 0.1, "relative error {rel}");
}

#[test]
fn bright_spot_barely_perturbs_estimate() {
    let c = config(32);
    let m = c.measurement_count();
    let level = 150.0;
    let frames = 9;
    let clean: Vec<Vec<f64>> = (0..frames)
        .map(|t| add_poisson_noise(&vec![level; m], 3, t as u64).unwrap())
        .collect();
    let base = estimate_background(&stack_from(&c, clean.clone()), 0.3, 5, true).unwrap();
    // a bright spot in one frame only, 40 times the background
    let mut spotted = clean;
    for j in 12..18 {
        for i in 12..18 {
            spotted[4][i + 32 * j] += 40.0 * level;
        }
    }
    let est = estimate_background(&stack_from(&c, spotted), 0.3, 5, true).unwrap();
    for (a, b) in est.backgrounds.iter().zip(&base.backgrounds) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 0.05 * y, "{x} vs {y}");
        }
    }
}
