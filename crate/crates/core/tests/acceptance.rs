//! Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatterloc::config::RunConfig;
use scatterloc::fft::C64;
use scatterloc::inverse::{
    kl_divergence, tv_prox, ForwardModel, ModelSettings, OptimConfig, OptimState, Reconstruction,
};
use scatterloc::io::{cmd_bench, cmd_reconstruct, cmd_simulate, rerun, ReconstructInputs, RunManifest};
use scatterloc::metrics::{match_and_rmse, run_experiment, ssim_volume, ExperimentReport};
use scatterloc::sensor::{add_poisson_noise, BiplaneConfig, Camera};
use scatterloc::simulate::simulate_frames;
use scatterloc::wave::{solve_lippmann_schwinger, ComplexField, GreenKernel, LsOperator, SolverSettings};
use scatterloc::{Fluorophore, Grid3, OpticalConstants, ScatteringVolume, Vec3};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cube(n: usize) -> Grid3 {
    Grid3::new([n, n, n], [0.1; 3], [0.0; 3]).unwrap()
}

fn blob(grid: &Grid3, center: Vec3, radius: f64, peak: f64) -> ScatteringVolume {
    let vals = grid
        .voxel_centers()
        .iter()
        .map(|x| {
            let r2 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>();
            peak * (-r2 / (2.0 * radius * radius)).exp()
        })
        .collect();
    ScatteringVolume::new(*grid, vals).unwrap()
}

fn random_field(grid: &Grid3, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len())
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn rel_norm(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn model(n: [usize; 3], tol: f64) -> ForwardModel {
    let grid = Grid3::new(n, [0.1; 3], [0.0; 3]).unwrap();
    let settings = ModelSettings {
        tol,
        max_iter: 500,
        ..Default::default()
    };
    ForwardModel::new(&grid, &OpticalConstants::water_647(), &BiplaneConfig::default_for(&grid), settings).unwrap()
}

fn physics() -> Check {
    let consts = OpticalConstants::water_647();
    let g = cube(16);
    let k = GreenKernel::new(&g, &consts, 2).unwrap();
    let c = g.center();
    let src = [c[0] + 0.03, c[1] - 0.02, 0.25];
    let u_in = ComplexField::spherical_wave(&g, src, 1.0, 1e-4, &consts).unwrap();

    let (u, _) = solve_lippmann_schwinger(&ScatteringVolume::zeros(g), &u_in, &k, SolverSettings::default(), None)
        .map_err(|e| e.to_string())?;
    let empty = rel_norm(u.values(), u_in.values());
    ensure(empty <= 1e-12, format!("f=0 solution deviates {empty:.2e}"))?;

    let tight = SolverSettings {
        tol: 1e-13,
        max_iter: 500,
    };
    let dx2 = 0.01;
    let mut worst = 0.0f64;
    for peak in [0.4, 0.2, 0.1] {
        let f = blob(&g, c, 0.25, peak);
        let (u, _) = solve_lippmann_schwinger(&f, &u_in, &k, tight, None).map_err(|e| e.to_string())?;
        let fu: Vec<C64> = u_in.values().iter().zip(f.values()).map(|(a, b)| a * b).collect();
        let mut gfu = vec![C64::default(); g.len()];
        k.apply(&fu, &mut gfu);
        let born: Vec<C64> = u_in.values().iter().zip(&gfu).map(|(a, b)| a + b).collect();
        let strength = peak * dx2;
        let ratio = rel_norm(&born, u.values()) / (5.0 * strength * strength);
        worst = worst.max(ratio);
    }
    ensure(worst < 1.0, format!("first-Born error at {worst:.3} of the quadratic bound"))?;

    let f = blob(&g, c, 0.25, 5.0);
    let op = LsOperator::new(&k, &f).unwrap();
    let v = random_field(&g, 1);
    let w = random_field(&g, 2);
    let mut out = [vec![C64::default(); g.len()], vec![C64::default(); g.len()]];
    let adj = |a: C64, b: C64| (a - b).norm() / a.norm();
    op.apply(&v, &mut out[0]);
    op.apply_adjoint(&w, &mut out[1]);
    let ls = adj(inner(&w, &out[0]), inner(&out[1], &v));
    k.apply(&v, &mut out[0]);
    k.apply_adjoint(&w, &mut out[1]);
    let green = adj(inner(&w, &out[0]), inner(&out[1], &v));
    let cam = Camera::new(&BiplaneConfig::default_for(&g), &g, &consts).unwrap();
    let exit = &v[..cam.exit_plane_len()];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = cam.config().pixels_per_plane();
    let y: [Vec<C64>; 2] =
        std::array::from_fn(|_| (0..m).map(|_| C64::new(rng.random(), rng.random())).collect());
    let pu = cam.apply_propagation(exit);
    let p = adj(inner(&y[0], &pu[0]) + inner(&y[1], &pu[1]), inner(&cam.apply_adjoint(&y), exit));
    ensure(ls.max(green).max(p) < 1e-10, format!("adjoint mismatch LS {ls:.1e} G {green:.1e} P {p:.1e}"))?;
    Ok(format!(
        "f=0 dev {empty:.1e}; Born error <= {worst:.2} x bound; adjoints LS {ls:.1e} G {green:.1e} P {p:.1e}"
    ))
}

fn gradient_instance(n: usize, seed: u64) -> (ForwardModel, scatterloc::sensor::FrameStack, OptimState) {
    let m = model([n, n, n], 1e-13);
    let grid = *m.grid();
    let c = grid.center();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = blob(&grid, c, 0.15, 6.0);
    let p = [c[0] + rng.random_range(-0.1..0.1), c[1] + rng.random_range(-0.1..0.1), 0.12];
    let mols = vec![vec![Fluorophore::new(p, 20.0).unwrap()]];
    let bg = vec![vec![2.0; m.measurement_count()]];
    let stack = simulate_frames(&m, &truth, &mols, &bg, seed, true).unwrap();
    let guess = blob(&grid, [c[0] + 0.05, c[1], c[2]], 0.2, 4.0);
    let values: Vec<f64> = guess.values().iter().map(|v| v + 0.5).collect();
    let guess = ScatteringVolume::new(grid, values).unwrap();
    let mol = Fluorophore::new([p[0] - 0.05, p[1] + 0.04, p[2] + 0.05], 17.0).unwrap();
    (m, stack, OptimState::new(guess, vec![mol], vec![0]).unwrap())
}

/// Random unit direction whose projection on `g` is not a cancellation.
fn probe_direction(rng: &mut ChaCha8Rng, g: &[f64]) -> Vec<f64> {
    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    loop {
        let d: Vec<f64> = (0..g.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let dn = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
        if dot.abs() > 0.1 * gn * dn / (g.len() as f64).sqrt() {
            return d.iter().map(|x| x / dn).collect();
        }
    }
}

fn gradients() -> Check {
    let mut worst = [0.0f64; 3];
    let mut probes = [0usize; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (idx, n) in [8usize, 12, 16].into_iter().enumerate() {
        let per = if idx == 2 { 6 } else { 7 };
        let (m, stack, state) = gradient_instance(n, idx as u64 + 1);
        let p0 = state.molecules[0].position;
        let a0 = state.molecules[0].amplitude;
        let f0 = state.volume.values().to_vec();
        let rec = Reconstruction::new(&m, &stack, OptimConfig::default(), state).map_err(|e| e.to_string())?;

        let gp = rec.position_gradient(0).map_err(|e| e.to_string())?;
        let gf = rec.volume_gradient_at(&f0).map_err(|e| e.to_string())?;
        let frame = &stack.frames()[0];
        for _ in 0..per {
            let d = probe_direction(&mut rng, &gp);
            let h = 1e-4;
            let at = |s: f64| [p0[0] + s * d[0], p0[1] + s * d[1], p0[2] + s * d[2]];
            let fd = (rec.data_term_with_position(0, at(h)).unwrap() - rec.data_term_with_position(0, at(-h)).unwrap())
                / (2.0 * h);
            let an: f64 = gp.iter().zip(&d).map(|(a, b)| a * b).sum();
            worst[0] = worst[0].max(rel_err(fd, an));

            let a = a0 * rng.random_range(0.5..2.0);
            let eps = 1e-4 * a;
            let phi = |a: f64| {
                let img = m.forward(&rec.state().volume, p0, a).unwrap();
                let z: Vec<f64> = img.iter().zip(&frame.background).map(|(x, b)| x + b).collect();
                kl_divergence(&z, &frame.values, 1e-8).unwrap()
            };
            let fd = (phi(a + eps) - phi(a - eps)) / (2.0 * eps);
            worst[1] = worst[1].max(rel_err(fd, rec.amplitude_derivatives(0, a).0));

            let d = probe_direction(&mut rng, &gf);
            let h = 1e-3;
            let shifted = |s: f64| f0.iter().zip(&d).map(|(v, e)| v + s * e).collect::<Vec<_>>();
            let fd = (rec.data_term_at(&shifted(h)).unwrap() - rec.data_term_at(&shifted(-h)).unwrap()) / (2.0 * h);
            let an: f64 = gf.iter().zip(&d).map(|(a, b)| a * b).sum();
            worst[2] = worst[2].max(rel_err(fd, an));
            probes.iter_mut().for_each(|p| *p += 1);
        }
    }
    ensure(worst.iter().all(|w| *w < 1e-3), format!("worst relative errors p/a/f {:.2e} {:.2e} {:.2e}", worst[0], worst[1], worst[2]))?;

    let m = model([10, 10, 8], 1e-12);
    let grid = *m.grid();
    let f = blob(&grid, grid.center(), 0.2, 5.0);
    let p = [0.45, 0.55, 0.25];
    let a_true = 31.6;
    let mols = vec![vec![Fluorophore::new(p, a_true).unwrap()]];
    let stack = simulate_frames(&m, &f, &mols, &[vec![10.0; m.measurement_count()]], 0, false).unwrap();
    let config = OptimConfig {
        newton_steps: 10,
        ..Default::default()
    };
    let init = OptimState::new(f, vec![Fluorophore::new(p, 12.0).unwrap()], vec![0]).unwrap();
    let mut rec = Reconstruction::new(&m, &stack, config, init).map_err(|e| e.to_string())?;
    rec.update_amplitudes().map_err(|e| e.to_string())?;
    let newton = rel_err(rec.state().molecules[0].amplitude, a_true);
    ensure(newton < 1e-6, format!("Newton round trip error {newton:.2e}"))?;
    Ok(format!(
        "{} probes each on 8^3/12^3/16^3; worst rel err p {:.1e} a {:.1e} f {:.1e}; Newton {newton:.1e}",
        probes[0], worst[0], worst[1], worst[2]
    ))
}

fn tv_duality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut iters = 0;
    for _ in 0..100 {
        let dims = [rng.random_range(2..9), rng.random_range(2..9), rng.random_range(1..7)];
        let n = dims.iter().product();
        let scale = rng.random_range(0.1..10.0);
        let v: Vec<f64> = (0..n).map(|_| scale * (rng.random::<f64>() - 0.3)).collect();
        let lambda = scale * rng.random_range(0.01..0.5);
        let p = tv_prox(&v, lambda, dims, 20000, 1e-7, None).map_err(|e| e.to_string())?;
        worst = worst.max(p.relative_gap());
        iters = iters.max(p.iterations);
    }
    ensure(worst < 1e-6, format!("worst relative duality gap {worst:.2e}"))?;
    Ok(format!("100 inputs, worst relative gap {worst:.1e}, at most {iters} iterations"))
}

fn ssim_reference(a: &ScatteringVolume, b: &ScatteringVolume, sigma: f64, range: f64) -> f64 {
    let [nx, ny, nz] = a.grid().counts();
    let r = (3.5 * sigma).ceil() as isize;
    let (x, y) = (a.values(), b.values());
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut total = 0.0;
    for k in 0..nz as isize {
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let mut s = [0.0; 6];
                for dk in -r..=r {
                    for dj in -r..=r {
                        for di in -r..=r {
                            let (p, q, t) = (i + di, j + dj, k + dk);
                            if p < 0 || q < 0 || t < 0 || p >= nx as isize || q >= ny as isize || t >= nz as isize {
                                continue;
                            }
                            let w = (-((di * di + dj * dj + dk * dk) as f64) / (2.0 * sigma * sigma)).exp();
                            let idx = p as usize + nx * (q as usize + ny * t as usize);
                            let (u, v) = (x[idx], y[idx]);
                            for (acc, term) in s.iter_mut().zip([1.0, u, v, u * u, v * v, u * v]) {
                                *acc += w * term;
                            }
                        }
                    }
                }
                let (mx, my) = (s[1] / s[0], s[2] / s[0]);
                let (vx, vy, cxy) = (s[3] / s[0] - mx * mx, s[4] / s[0] - my * my, s[5] / s[0] - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    total / (nx * ny * nz) as f64
}

fn statistics() -> Check {
    let mut notes = Vec::new();
    for mean in [0.5, 7.0, 45.0, 1000.0] {
        let n = 1_000_000;
        let d = add_poisson_noise(&vec![mean; n], 11, 99).map_err(|e| e.to_string())?;
        let m = d.iter().sum::<f64>() / n as f64;
        let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let zm = (m - mean) / (mean / n as f64).sqrt();
        let zv = (v - mean) / ((2.0 * mean * mean + mean) / n as f64).sqrt();
        ensure(zm.abs() < 5.0 && zv.abs() < 5.0, format!("Poisson mean {mean}: z {zm:.2}/{zv:.2}"))?;
        notes.push(format!("{zm:+.1}/{zv:+.1}"));
    }

    let m = model([10, 10, 8], 1e-12);
    let grid = *m.grid();
    let f = blob(&grid, grid.center(), 0.2, 5.0);
    let mols: Vec<Fluorophore> = [[0.3, 0.4, 0.2, 10.0], [0.6, 0.5, 0.3, 25.0], [0.5, 0.7, 0.1, 7.0]]
        .iter()
        .map(|r| Fluorophore::new([r[0], r[1], r[2]], r[3]).unwrap())
        .collect();
    let bg = vec![vec![3.0; m.measurement_count()]];
    let multi = simulate_frames(&m, &f, &[mols.clone()], &bg, 0, false).map_err(|e| e.to_string())?;
    let mut sum = bg[0].clone();
    for mol in &mols {
        let img = m.forward(&f, mol.position, mol.amplitude).map_err(|e| e.to_string())?;
        sum.iter_mut().zip(img).for_each(|(s, x)| *s += x);
    }
    let peak = sum.iter().copied().fold(0.0, f64::max);
    let sup = multi.frames()[0].values.iter().zip(&sum).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
    ensure(sup <= 1e-12, format!("superposition deviates {sup:.2e}"))?;

    let perms = permutations(5);
    let dist = |a: Vec3, b: Vec3| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let mut assign = 0.0f64;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = || -> Vec<Vec3> { (0..5).map(|_| [rng.random(), rng.random(), rng.random()]).collect() };
        let (e, t) = (pts(), pts());
        let radius = 0.6;
        let mut best = (0usize, f64::INFINITY, 0.0);
        for p in &perms {
            let ds: Vec<f64> = (0..5).map(|i| dist(e[i], t[p[i]])).filter(|&x| x <= radius).collect();
            let total: f64 = ds.iter().sum();
            if ds.len() > best.0 || (ds.len() == best.0 && total < best.1 - 1e-12) {
                let rmse = (ds.iter().map(|x| x * x).sum::<f64>() / ds.len().max(1) as f64).sqrt();
                best = (ds.len(), total, rmse);
            }
        }
        let got = match_and_rmse(&e, &t, radius).map_err(|e| e.to_string())?;
        ensure(got.pairs.len() == best.0, format!("seed {seed}: matched {} vs {}", got.pairs.len(), best.0))?;
        if best.0 > 0 {
            assign = assign.max((got.rmse_3d_um.unwrap() - best.2).abs());
        }
    }
    ensure(assign < 1e-6, format!("assignment RMSE deviates {assign:.2e}"))?;

    let g = cube(8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = ScatteringVolume::new(g, (0..g.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
    let b_vals: Vec<f64> = a.values().iter().map(|x| x + 3.0 * (rng.random::<f64>() - 0.5)).collect();
    let b = ScatteringVolume::new(g, b_vals).unwrap();
    let range = a.max() - a.min();
    let got = ssim_volume(&a, &b, 1.5, Some(range)).map_err(|e| e.to_string())?;
    let ssim_dev = (got - ssim_reference(&a, &b, 1.5, range)).abs();
    ensure(ssim_dev < 1e-10, format!("SSIM deviates {ssim_dev:.2e}"))?;
    Ok(format!(
        "Poisson z mean/var {}; superposition {sup:.1e}; 50 5x5 assignments {assign:.1e}; SSIM {ssim_dev:.1e}",
        notes.join(" ")
    ))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

const TINY: &str = "seed = 3\n[grid]\ncounts = [12, 12, 6]\n[phantom]\nrandom_inclusions = 1\n\
                    [acquisition]\nframes = 4\n[optimizer]\nouter_iterations = 2\nfista_steps = 3\n";

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |name: &str| tmp.path().join(name);
    let desk = RunConfig::default();
    let s1 = cmd_simulate(&desk, None, &dir("desk1")).map_err(|e| e.to_string())?;
    let s2 = cmd_simulate(&desk, None, &dir("desk2")).map_err(|e| e.to_string())?;
    ensure(s1.artifacts == s2.artifacts, "desk simulation hashes differ")?;

    let tiny = RunConfig::from_toml_str(TINY).map_err(|e| e.to_string())?;
    let sim = cmd_simulate(&tiny, None, &dir("sim")).map_err(|e| e.to_string())?;
    let inputs = ReconstructInputs {
        frames: dir("sim").join("frames.bin"),
        ..Default::default()
    };
    let r1 = cmd_reconstruct(&tiny, &inputs, &dir("rec1")).map_err(|e| e.to_string())?;
    let r2 = cmd_reconstruct(&tiny, &inputs, &dir("rec2")).map_err(|e| e.to_string())?;
    ensure(r1.artifacts == r2.artifacts, "reconstruction hashes differ")?;
    let (_, b1) = cmd_bench(&tiny, &dir("bench1")).map_err(|e| e.to_string())?;

    let mut reruns = 0;
    for (m, name) in [(&sim, "sim"), (&r1, "rec1"), (&b1, "bench1")] {
        let loaded = RunManifest::load(&dir(name).join("manifest.json")).map_err(|e| e.to_string())?;
        ensure(&loaded == m, format!("{name} manifest does not round trip"))?;
        let again = rerun(&loaded, &dir(&format!("{name}-rerun"))).map_err(|e| e.to_string())?;
        ensure(again.artifacts == m.artifacts, format!("{name} rerun hashes differ"))?;
        ensure(again.exit_code == 0, format!("{name} rerun exit {}", again.exit_code))?;
        reruns += 1;
    }
    Ok(format!(
        "desk simulation x2 ({} files), reconstruction x2 identical; {reruns} manifests re-run with identical hashes",
        s1.artifacts.len()
    ))
}

struct Arms {
    init: (f64, f64),
    joint: (f64, f64),
    truth: f64,
}

fn arms(r: &ExperimentReport) -> std::result::Result<Arms, String> {
    let get = |name: &str| {
        let a = r.arm(name).ok_or(format!("arm {name} missing"))?;
        if let Some(e) = &a.error {
            return Err(format!("arm {name} failed: {e}"));
        }
        Ok((a.ssim.unwrap_or(f64::NAN), a.rmse_3d_um.unwrap_or(f64::NAN)))
    };
    Ok(Arms {
        init: get("init-only")?,
        joint: get("joint")?,
        truth: get("true-pos-amp")?.0,
    })
}

fn experiments(frames: usize, invariants: &mut Vec<String>) -> std::result::Result<Vec<Arms>, String> {
    let mut out = Vec::new();
    for seed in 1..=3 {
        let mut config = RunConfig::default();
        config.seed = seed;
        config.acquisition.frames = frames;
        let t = Instant::now();
        let outcome = run_experiment(&config).map_err(|e| e.to_string())?;
        for a in &outcome.report.arms {
            if !a.monotone || !a.feasible {
                invariants.push(format!("L={frames} seed {seed} arm {}: monotone {} feasible {}", a.name, a.monotone, a.feasible));
            }
        }
        let a = arms(&outcome.report)?;
        println!(
            "  L={frames} seed {seed}: SSIM init-only {:.4} joint {:.4} true-pos {:.4}; RMSE init-only {:.4} joint {:.4} um ({:.0}s)",
            a.init.0,
            a.joint.0,
            a.truth,
            a.init.1,
            a.joint.1,
            t.elapsed().as_secs_f64()
        );
        out.push(a);
    }
    Ok(out)
}

fn desk(runs: &std::result::Result<Vec<Arms>, String>) -> Check {
    let runs = runs.as_ref().map_err(|e| e.clone())?;
    for (i, a) in runs.iter().enumerate() {
        let seed = i + 1;
        ensure(a.joint.0 >= a.init.0 + 0.05, format!("seed {seed}: SSIM joint {:.4} < init-only {:.4} + 0.05", a.joint.0, a.init.0))?;
        ensure(a.joint.1 <= 0.75 * a.init.1, format!("seed {seed}: RMSE joint {:.4} > 0.75 x {:.4}", a.joint.1, a.init.1))?;
        ensure(a.truth >= a.joint.0 - 0.02, format!("seed {seed}: SSIM true-pos {:.4} < joint {:.4} - 0.02", a.truth, a.joint.0))?;
    }
    let margin = runs.iter().map(|a| a.joint.0 - a.init.0).fold(f64::INFINITY, f64::min);
    let ratio = runs.iter().map(|a| a.joint.1 / a.init.1).fold(0.0, f64::max);
    Ok(format!("3/3 seeds; min SSIM gain {margin:.3}; max RMSE ratio {ratio:.2}"))
}

fn reduced(runs: &std::result::Result<Vec<Arms>, String>) -> Check {
    let runs = runs.as_ref().map_err(|e| e.clone())?;
    let wins = runs.iter().filter(|a| a.joint.0 >= a.init.0).count();
    ensure(wins >= 2, format!("joint SSIM >= init-only on {wins}/3 seeds"))?;
    Ok(format!("joint SSIM >= init-only on {wins}/3 seeds"))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Check, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let r = guarded(f);
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {id} ({name}) finished in {secs:.1}s");
        results.push((id, name, r, secs));
    };
    timed(3, "physics oracles", &mut physics);
    timed(4, "gradient suite", &mut gradients);
    timed(6, "statistical and metric oracles", &mut statistics);
    timed(7, "reproducibility", &mut reproducibility);

    let mut invariants = Vec::new();
    let mut invariants_desk = Vec::new();
    let t1 = Instant::now();
    let d = catch_unwind(AssertUnwindSafe(|| experiments(50, &mut invariants_desk))).unwrap_or_else(|_| Err("panicked".into()));
    let desk_s = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let mut invariants_small = Vec::new();
    let r = catch_unwind(AssertUnwindSafe(|| experiments(10, &mut invariants_small))).unwrap_or_else(|_| Err("panicked".into()));
    let small_s = t2.elapsed().as_secs_f64();
    results.push((1, "desk-scale ordering", desk(&d), desk_s));
    results.push((2, "frame reduction", reduced(&r), small_s));

    let t = Instant::now();
    let prox = guarded(tv_duality);
    invariants.extend(invariants_desk);
    invariants.extend(invariants_small);
    let opt = prox.and_then(|p| {
        if d.is_err() || r.is_err() {
            return Err("acceptance runs did not complete".into());
        }
        ensure(invariants.is_empty(), invariants.join("; "))?;
        Ok(format!("all 18 arm runs monotone and feasible at every checkpoint; {p}"))
    });
    results.push((5, "optimizer invariants", opt, t.elapsed().as_secs_f64()));

    results.sort_by_key(|r| r.0);
    println!();
    let mut failed = 0;
    for (id, name, r, secs) in &results {
        match r {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.0}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.0}s] {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.0}s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
