//! Numerics for the non-abelian Radon transform in the plane.
//!
//! The crate covers the forward transform of matrix-valued gauge fields,
//! the explicit inversion of the attenuated transform, and recovery of a
//! matrix potential from line functionals derived from scattering data.

pub mod anderson;
pub mod attenuated_inversion;
pub mod cauchy_ops;
pub mod error;
pub mod fft;
pub mod frame;
pub mod gauge_field;
pub mod grid;
pub mod mat;
pub mod narf;
mod par;
pub mod phantom;
pub mod ray_transport;
pub mod scattering_recovery;
pub mod spectral_solutions;
pub mod spline;

pub use error::{Error, Result};
pub use gauge_field::{apply_gauge, GaugeField, RayGeometry};
pub use grid::{GridSpec, MatrixField};
pub use mat::C64;
pub use phantom::{make_phantom, Phantom, PhantomKind, PhantomSpec};
