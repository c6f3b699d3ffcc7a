//! Krylov and fixed-point solvers for `(I - G diag(f)) u = u_in` and its adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::volume::ScatteringVolume;

use super::{dot, norm, ComplexField, GreenKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl SolveReport {
    pub fn trivial() -> Self {
        Self {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("solver tolerance must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// The Lippmann-Schwinger operator `A = I - G diag(f)` for one volume.
pub struct LsOperator<'a> {
    kernel: &'a GreenKernel,
    potential: &'a [f64],
}

impl<'a> LsOperator<'a> {
    pub fn new(kernel: &'a GreenKernel, potential: &'a ScatteringVolume) -> Result<Self> {
        if kernel.grid() != potential.grid() {
            return Err(Error::invalid("kernel and volume grids differ"));
        }
        Ok(Self {
            kernel,
            potential: potential.values(),
        })
    }

    pub fn from_slice(kernel: &'a GreenKernel, potential: &'a [f64]) -> Result<Self> {
        if kernel.grid().len() != potential.len() {
            return Err(Error::invalid("kernel and volume sizes differ"));
        }
        Ok(Self { kernel, potential })
    }

    pub fn is_identity(&self) -> bool {
        self.potential.iter().all(|&f| f == 0.0)
    }

    /// `out = u - G{f u}`.
    pub fn apply(&self, u: &[C64], out: &mut [C64]) {
        let fu: Vec<C64> = u.iter().zip(self.potential).map(|(x, f)| x * f).collect();
        self.kernel.apply(&fu, out);
        for (o, x) in out.iter_mut().zip(u) {
            *o = x - *o;
        }
    }

    /// `out = v - diag(f) G^H{v}`.
    pub fn apply_adjoint(&self, v: &[C64], out: &mut [C64]) {
        self.kernel.apply_adjoint(v, out);
        for ((o, x), f) in out.iter_mut().zip(v).zip(self.potential) {
            *o = x - *o * f;
        }
    }
}

/// Relative residual `|u - u_in - G{f u}| / |u_in|` computed from scratch.
pub fn lippmann_schwinger_residual(
    kernel: &GreenKernel,
    potential: &ScatteringVolume,
    u_in: &ComplexField,
    u: &ComplexField,
) -> Result<f64> {
    let op = LsOperator::new(kernel, potential)?;
    let mut au = vec![C64::default(); u.values().len()];
    op.apply(u.values(), &mut au);
    let r: Vec<C64> = au.iter().zip(u_in.values()).map(|(a, b)| b - a).collect();
    Ok(norm(&r) / norm(u_in.values()).max(f64::MIN_POSITIVE))
}

/// BiCGSTAB for `A x = b`. Returns the last iterate even when not converged.
///
/// Convergence is declared on the recomputed true residual; if the recursive
/// residual drifts the iteration restarts from the current iterate.
pub fn bicgstab(
    apply: impl Fn(&[C64], &mut [C64]),
    b: &[C64],
    x0: Option<&[C64]>,
    settings: SolverSettings,
) -> (Vec<C64>, SolveReport) {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (vec![C64::default(); n], SolveReport::trivial());
    }
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => b.to_vec(),
    };
    let mut tmp = vec![C64::default(); n];
    let true_residual = |x: &[C64], tmp: &mut Vec<C64>| -> Vec<C64> {
        apply(x, tmp);
        b.iter().zip(tmp.iter()).map(|(bi, ai)| bi - ai).collect()
    };

    let mut r = true_residual(&x, &mut tmp);
    let mut rel = norm(&r) / b_norm;
    let mut best = (rel, x.clone());
    if rel <= settings.tol {
        return (
            x,
            SolveReport {
                iterations: 0,
                relative_residual: rel,
                converged: true,
            },
        );
    }
    let mut iterations = 0;
    let mut restarts = 0;
    'outer: while iterations < settings.max_iter && restarts < 10 {
        let r_hat = r.clone();
        let mut rho = C64::new(1.0, 0.0);
        let mut alpha = C64::new(1.0, 0.0);
        let mut omega = C64::new(1.0, 0.0);
        let mut v = vec![C64::default(); n];
        let mut p = vec![C64::default(); n];
        let mut s = vec![C64::default(); n];
        let mut t = vec![C64::default(); n];
        while iterations < settings.max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.norm() < 1e-300 {
                restarts += 1;
                r = true_residual(&x, &mut tmp);
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            apply(&p, &mut v);
            let rv = dot(&r_hat, &v);
            if rv.norm() < 1e-300 {
                restarts += 1;
                r = true_residual(&x, &mut tmp);
                continue 'outer;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) / b_norm <= settings.tol {
                for i in 0..n {
                    x[i] += alpha * p[i];
                }
                r = true_residual(&x, &mut tmp);
                rel = norm(&r) / b_norm;
                if rel < best.0 {
                    best = (rel, x.clone());
                }
                if rel <= settings.tol {
                    break 'outer;
                }
                restarts += 1;
                continue 'outer;
            }
            apply(&s, &mut t);
            let tt = dot(&t, &t).re;
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { C64::default() };
            for i in 0..n {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            rel = norm(&r) / b_norm;
            if rel <= settings.tol {
                r = true_residual(&x, &mut tmp);
                rel = norm(&r) / b_norm;
                if rel < best.0 {
                    best = (rel, x.clone());
                }
                if rel <= settings.tol {
                    break 'outer;
                }
                restarts += 1;
                continue 'outer;
            }
            if omega.norm() == 0.0 {
                restarts += 1;
                r = true_residual(&x, &mut tmp);
                continue 'outer;
            }
        }
        r = true_residual(&x, &mut tmp);
        rel = norm(&r) / b_norm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
    }
    let converged = best.0 <= settings.tol;
    (
        best.1,
        SolveReport {
            iterations,
            relative_residual: best.0,
            converged,
        },
    )
}

/// Fixed-point (Born series) iteration `u <- u_in + G{f u}`; converges for weak contrast only.
pub fn born_series(
    potential: &ScatteringVolume,
    u_in: &ComplexField,
    kernel: &GreenKernel,
    settings: SolverSettings,
) -> Result<(ComplexField, SolveReport)> {
    let op = LsOperator::new(kernel, potential)?;
    let b = u_in.values();
    let b_norm = norm(b);
    let mut u = b.to_vec();
    let mut au = vec![C64::default(); b.len()];
    let mut report = SolveReport::trivial();
    for it in 0..=settings.max_iter {
        op.apply(&u, &mut au);
        let r: Vec<C64> = b.iter().zip(&au).map(|(x, y)| x - y).collect();
        let rel = norm(&r) / b_norm.max(f64::MIN_POSITIVE);
        report = SolveReport {
            iterations: it,
            relative_residual: rel,
            converged: rel <= settings.tol,
        };
        if report.converged || !rel.is_finite() || it == settings.max_iter {
            break;
        }
        for (ui, ri) in u.iter_mut().zip(&r) {
            *ui += ri;
        }
    }
    Ok((ComplexField::new(*u_in.grid(), u)?, report))
}

fn check_compatible(
    potential: &ScatteringVolume,
    rhs: &ComplexField,
    kernel: &GreenKernel,
    settings: &SolverSettings,
) -> Result<()> {
    settings.validate()?;
    if potential.grid() != rhs.grid() || kernel.grid() != rhs.grid() {
        return Err(Error::invalid("volume, field and kernel grids are incompatible"));
    }
    Ok(())
}

/// Solves `u_t = u_in + G{f u_t}`.
///
/// Non-convergence is not an error here: the best iterate is returned with
/// `converged = false` and the caller decides.
pub fn solve_lippmann_schwinger(
    potential: &ScatteringVolume,
    u_in: &ComplexField,
    kernel: &GreenKernel,
    settings: SolverSettings,
    initial_guess: Option<&[C64]>,
) -> Result<(ComplexField, SolveReport)> {
    check_compatible(potential, u_in, kernel, &settings)?;
    let op = LsOperator::new(kernel, potential)?;
    if op.is_identity() {
        return Ok((u_in.clone(), SolveReport::trivial()));
    }
    let (u, report) = bicgstab(|x, y| op.apply(x, y), u_in.values(), initial_guess, settings);
    Ok((ComplexField::new(*u_in.grid(), u)?, report))
}

/// Solves the adjoint system `(I - diag(f) G^H) v = rhs`.
pub fn solve_adjoint(
    potential: &ScatteringVolume,
    rhs: &ComplexField,
    kernel: &GreenKernel,
    settings: SolverSettings,
    initial_guess: Option<&[C64]>,
) -> Result<(ComplexField, SolveReport)> {
    check_compatible(potential, rhs, kernel, &settings)?;
    let op = LsOperator::new(kernel, potential)?;
    if op.is_identity() {
        return Ok((rhs.clone(), SolveReport::trivial()));
    }
    let (v, report) = bicgstab(
        |x, y| op.apply_adjoint(x, y),
        rhs.values(),
        initial_guess,
        settings,
    );
    Ok((ComplexField::new(*rhs.grid(), v)?, report))
}
