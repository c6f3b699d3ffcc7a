//! Incident spherical waves, the free-space Green's function, and the
//! Lippmann-Schwinger forward and adjoint solvers.

mod field;
mod green;
mod solver;
mod spherical;

pub use field::ComplexField;
pub use green::GreenKernel;
pub use solver::{
    bicgstab, born_series, lippmann_schwinger_residual, solve_adjoint, solve_lippmann_schwinger,
    LsOperator, SolveReport, SolverSettings,
};
pub use spherical::{spherical_wave, spherical_wave_at, spherical_wave_position_gradient};

use crate::fft::C64;

#[inline]
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
