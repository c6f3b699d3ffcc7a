//! Isotropic total variation on the voxel lattice (unit spacing, forward
//! differences with replicated boundary) and its proximal operator under a
//! nonnegativity constraint, solved on the dual by FGP.

use crate::error::{Error, Result};

fn check(dims: [usize; 3], len: usize) -> Result<()> {
    if dims.iter().product::<usize>() != len {
        return Err(Error::invalid("volume length does not match dimensions"));
    }
    Ok(())
}

/// Forward differences `D x`, three components per voxel (zero past the last sample).
fn gradient(x: &[f64], dims: [usize; 3], out: &mut [[f64; 3]]) {
    let [nx, ny, nz] = dims;
    let sy = nx;
    let sz = nx * ny;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let n = i + sy * j + sz * k;
                let v = x[n];
                out[n] = [
                    if i + 1 < nx { x[n + 1] - v } else { 0.0 },
                    if j + 1 < ny { x[n + sy] - v } else { 0.0 },
                    if k + 1 < nz { x[n + sz] - v } else { 0.0 },
                ];
            }
        }
    }
}

/// `D^T p`, the negative discrete divergence.
fn gradient_adjoint(p: &[[f64; 3]], dims: [usize; 3], out: &mut [f64]) {
    let [nx, ny, nz] = dims;
    let sy = nx;
    let sz = nx * ny;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let n = i + sy * j + sz * k;
                let mut acc = 0.0;
                if i + 1 < nx {
                    acc -= p[n][0];
                }
                if i > 0 {
                    acc += p[n - 1][0];
                }
                if j + 1 < ny {
                    acc -= p[n][1];
                }
                if j > 0 {
                    acc += p[n - sy][1];
                }
                if k + 1 < nz {
                    acc -= p[n][2];
                }
                if k > 0 {
                    acc += p[n - sz][2];
                }
                out[n] = acc;
            }
        }
    }
}

pub fn total_variation(x: &[f64], dims: [usize; 3]) -> Result<f64> {
    check(dims, x.len())?;
    let mut d = vec![[0.0; 3]; x.len()];
    gradient(x, dims, &mut d);
    Ok(d.iter().map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()).sum())
}

/// Result of `argmin_{x >= 0} 1/2 |x - v|^2 + lambda TV(x)`.
#[derive(Debug, Clone)]
pub struct TvProx {
    pub x: Vec<f64>,
    /// Dual field, reusable as a warm start.
    pub dual: Vec<[f64; 3]>,
    pub primal: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl TvProx {
    pub fn relative_gap(&self) -> f64 {
        self.duality_gap / self.primal.abs().max(f64::MIN_POSITIVE)
    }
}

/// FGP on the dual; stops after `max_iter` or once the relative gap drops below `gap_tol`.
pub fn tv_prox(
    v: &[f64],
    lambda: f64,
    dims: [usize; 3],
    max_iter: usize,
    gap_tol: f64,
    warm_dual: Option<&[[f64; 3]]>,
) -> Result<TvProx> {
    check(dims, v.len())?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("TV weight must be >= 0, got {lambda}")));
    }
    let n = v.len();
    if lambda == 0.0 {
        let x: Vec<f64> = v.iter().map(|a| a.max(0.0)).collect();
        let primal = 0.5 * x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        return Ok(TvProx {
            x,
            dual: vec![[0.0; 3]; n],
            primal,
            duality_gap: 0.0,
            iterations: 0,
        });
    }
    let mut p = match warm_dual {
        Some(d) if d.len() == n => d.to_vec(),
        _ => vec![[0.0; 3]; n],
    };
    let mut q = p.clone();
    let mut t = 1.0f64;
    let step = 1.0 / (12.0 * lambda);
    let mut x = vec![0.0; n];
    let mut dtp = vec![0.0; n];
    let mut dx = vec![[0.0; 3]; n];
    let mut iterations = 0;

    let mut state = evaluate(v, lambda, dims, &p, &mut x, &mut dtp, &mut dx);
    while iterations < max_iter && state.1 > gap_tol * state.0.abs().max(f64::MIN_POSITIVE) {
        iterations += 1;
        primal_from_dual(v, lambda, dims, &q, &mut x, &mut dtp);
        gradient(&x, dims, &mut dx);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            let mut c = [
                q[i][0] + step * dx[i][0],
                q[i][1] + step * dx[i][1],
                q[i][2] + step * dx[i][2],
            ];
            let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            if norm > 1.0 {
                c = [c[0] / norm, c[1] / norm, c[2] / norm];
            }
            for a in 0..3 {
                q[i][a] = c[a] + beta * (c[a] - p[i][a]);
            }
            p[i] = c;
        }
        t = t_next;
        state = evaluate(v, lambda, dims, &p, &mut x, &mut dtp, &mut dx);
    }
    Ok(TvProx {
        x,
        dual: p,
        primal: state.0,
        duality_gap: state.1,
        iterations,
    })
}

fn primal_from_dual(
    v: &[f64],
    lambda: f64,
    dims: [usize; 3],
    p: &[[f64; 3]],
    x: &mut [f64],
    dtp: &mut [f64],
) {
    gradient_adjoint(p, dims, dtp);
    for i in 0..v.len() {
        x[i] = (v[i] - lambda * dtp[i]).max(0.0);
    }
}

/// Primal value and duality gap at the primal point induced by `p`.
fn evaluate(
    v: &[f64],
    lambda: f64,
    dims: [usize; 3],
    p: &[[f64; 3]],
    x: &mut [f64],
    dtp: &mut [f64],
    dx: &mut [[f64; 3]],
) -> (f64, f64) {
    primal_from_dual(v, lambda, dims, p, x, dtp);
    gradient(x, dims, dx);
    let mut fit = 0.0;
    let mut tv = 0.0;
    let mut dual = 0.0;
    for i in 0..v.len() {
        fit += 0.5 * (x[i] - v[i]).powi(2);
        let g = dx[i];
        tv += (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        // dual value 1/2|x - w|^2 - 1/2|w|^2 + 1/2|v|^2 with w = v - lambda D^T p
        let w = v[i] - lambda * dtp[i];
        dual += 0.5 * (x[i] - w).powi(2) - 0.5 * w * w + 0.5 * v[i] * v[i];
    }
    let primal = fit + lambda * tv;
    (primal, (primal - dual).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tv_of_step_and_constant() {
        let dims = [4, 3, 2];
        assert_eq!(total_variation(&[2.5; 24], dims).unwrap(), 0.0);
        // unit step along x between i = 1 and 2: one jump per (j, k) row
        let x: Vec<f64> = (0..24).map(|n| if n % 4 >= 2 { 1.0 } else { 0.0 }).collect();
        assert!((total_variation(&x, dims).unwrap() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_gradient_is_isotropic() {
        // x + y ramp: every interior voxel has gradient (1, 1, 0)
        let dims = [3, 3, 1];
        let x: Vec<f64> = (0..9).map(|n| (n % 3 + n / 3) as f64).collect();
        // 4 voxels with both differences, 4 with one, corner with none
        let expected = 4.0 * 2f64.sqrt() + 4.0;
        assert!((total_variation(&x, dims).unwrap() - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gradient_adjoint_identity(
            x in prop::collection::vec(-1.0f64..1.0, 60),
            p in prop::collection::vec(-1.0f64..1.0, 180),
        ) {
            let dims = [5, 4, 3];
            let p: Vec<[f64; 3]> = p.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let mut dx = vec![[0.0; 3]; 60];
            gradient(&x, dims, &mut dx);
            let mut dtp = vec![0.0; 60];
            gradient_adjoint(&p, dims, &mut dtp);
            let lhs: f64 = dx.iter().zip(&p).map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).sum();
            let rhs: f64 = x.iter().zip(&dtp).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn prox_output_is_nonnegative_and_not_worse(
            v in prop::collection::vec(-2.0f64..3.0, 48),
            lambda in 0.01f64..1.0,
        ) {
            let dims = [4, 4, 3];
            let r = tv_prox(&v, lambda, dims, 200, 1e-8, None).unwrap();
            prop_assert!(r.x.iter().all(|&a| a >= 0.0));
            // the clipped input is feasible, so the prox objective cannot exceed its value
            let clipped: Vec<f64> = v.iter().map(|a| a.max(0.0)).collect();
            let obj = |x: &[f64]| {
                0.5 * x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                    + lambda * total_variation(x, dims).unwrap()
            };
            prop_assert!(obj(&r.x) <= obj(&clipped) + 1e-9);
            prop_assert!((obj(&r.x) - r.primal).abs() < 1e-9 * r.primal.max(1.0));
        }
    }

    #[test]
    fn zero_weight_is_clipping() {
        let v = [-1.0, 0.5, 2.0, -0.1];
        let r = tv_prox(&v, 0.0, [4, 1, 1], 10, 1e-6, None).unwrap();
        assert_eq!(r.x, vec![0.0, 0.5, 2.0, 0.0]);
    }

    #[test]
    fn large_weight_flattens_to_mean() {
        let v: Vec<f64> = (0..27).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        let mean = v.iter().sum::<f64>() / 27.0;
        let r = tv_prox(&v, 100.0, [3, 3, 3], 5000, 1e-12, None).unwrap();
        for x in &r.x {
            assert!((x - mean).abs() < 1e-4, "{x} vs {mean}");
        }
    }

    #[test]
    fn one_dimensional_pair_matches_closed_form() {
        // two samples a < b: the prox moves each toward the other by lambda until they meet
        let (a, b, lambda) = (1.0, 2.0, 0.2);
        let r = tv_prox(&[a, b], lambda, [2, 1, 1], 10_000, 1e-14, None).unwrap();
        assert!((r.x[0] - (a + lambda)).abs() < 1e-6);
        assert!((r.x[1] - (b - lambda)).abs() < 1e-6);
    }

    #[test]
    fn warm_start_converges_faster() {
        let v: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let dims = [4, 4, 4];
        let cold = tv_prox(&v, 0.3, dims, 5000, 1e-8, None).unwrap();
        let warm = tv_prox(&v, 0.3, dims, 5000, 1e-8, Some(&cold.dual)).unwrap();
        assert!(warm.iterations < cold.iterations / 2 + 1);
    }
}
