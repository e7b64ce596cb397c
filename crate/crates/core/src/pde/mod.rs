//! Parametric PDE discretizations as per-node 9-point stencils, together
//! with coefficient samplers and right-hand sides.
//!
//! All 2D stencils are stored for the system `S u = h^2 f`.

mod assemble;
mod coefficient;
mod family;
mod rhs;
mod stencil;

pub use assemble::{
    anisotropy_tensor, assemble_anisotropic, assemble_convection_diffusion, assemble_jumping,
    assemble_random_diffusion, harmonic_weight, peclet, streamline_delta,
};
pub use coefficient::{
    grf_from_modes, grf_weight, sample_checkerboard, sample_grf_coefficient, ElementCoefficient, NodalCoefficient,
    RegionMask,
};
pub use family::{Coefficient, Family, Instance, PdeKind, ProblemParams};
pub use rhs::{make_rhs, system_rhs, RhsKind};
pub use stencil::{from_rows, laplacian_5pt, poisson_1d, Coeffs, Stencil9Field, CENTER, OFFSETS};
