//! Numerics for Fourier neural solvers and learned hybrid iterations on
//! structured grids.
//!
//! Kernels are generic over the scalar type (`f32` or `f64`); the aliases
//! below fix the common 64-bit instantiation.

pub mod corrector;
pub mod error;
pub mod fft;
pub mod grid;
pub mod hybrid;
pub mod lfa;
pub mod pde;
pub mod relax;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Dim, ExtendedField, Field, Grid};
pub use scalar::{Real, C};

pub type Field64 = Field<f64>;
pub type Stencil64 = pde::Stencil9Field<f64>;
