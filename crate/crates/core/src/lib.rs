//! Joint refractive-index reconstruction and single-molecule localization
//! from fluorescence frames distorted by scattering.
//!
//! Each frame is modeled as the biplane intensity image of one emitter whose
//! spherical wave scatters through the sample (Lippmann-Schwinger), plus a
//! slowly varying background and shot noise. The inverse problem recovers the
//! scattering potential together with the emitter positions and amplitudes by
//! alternating Newton, projected-gradient and relaxed FISTA updates under a
//! Poisson (Kullback-Leibler) data term with total-variation regularization.

pub mod config;
pub mod error;
pub mod fft;
pub mod fluorophore;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod sensor;
pub mod simulate;
pub mod volume;
pub mod wave;

pub use error::{Error, Result};
pub use fluorophore::{Fluorophore, FluorophoreSet};
pub use grid::{Grid3, OpticalConstants, Vec3};
pub use volume::ScatteringVolume;
