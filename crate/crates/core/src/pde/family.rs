use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::stream_rng;
use crate::scalar::Real;

use super::assemble::{
    assemble_anisotropic, assemble_convection_diffusion, assemble_jumping, assemble_random_diffusion,
};
use super::coefficient::{
    sample_checkerboard, sample_grf_coefficient, ElementCoefficient, NodalCoefficient, RegionMask,
};
use super::stencil::{poisson_1d, Stencil9Field};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PdeKind {
    Poisson1d,
    RandomDiffusion,
    Anisotropic,
    ConvectionDiffusion,
    Jumping,
}

impl PdeKind {
    pub fn name(&self) -> &'static str {
        match self {
            PdeKind::Poisson1d => "poisson1d",
            PdeKind::RandomDiffusion => "random_diffusion",
            PdeKind::Anisotropic => "anisotropic",
            PdeKind::ConvectionDiffusion => "convection_diffusion",
            PdeKind::Jumping => "jumping",
        }
    }

    pub fn grid(&self, n: usize) -> Result<Grid> {
        match self {
            PdeKind::Poisson1d => Grid::line(n),
            _ => Grid::square(n),
        }
    }
}

impl FromStr for PdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson1d" => Ok(PdeKind::Poisson1d),
            "random_diffusion" => Ok(PdeKind::RandomDiffusion),
            "anisotropic" => Ok(PdeKind::Anisotropic),
            "convection_diffusion" => Ok(PdeKind::ConvectionDiffusion),
            "jumping" => Ok(PdeKind::Jumping),
            other => Err(Error::InvalidConfig(format!("unknown pde '{other}'"))),
        }
    }
}

/// Physical parameters of one problem instance, independent of the mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemParams {
    Poisson1d,
    RandomDiffusion { seed: u64 },
    Anisotropic { xi: f64, theta: f64 },
    ConvectionDiffusion { eps: f64, wx: f64, wy: f64 },
    Jumping { seed: u64, blocks: usize, m: f64 },
}

/// Coefficient data kept alongside a stencil (meta-map input).
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient<T> {
    None,
    Element(ElementCoefficient<T>),
    Nodal(NodalCoefficient<T>),
}

/// A realized discrete problem.
#[derive(Clone, Debug)]
pub struct Instance<T> {
    pub params: ProblemParams,
    pub stencil: Stencil9Field<T>,
    pub coefficient: Coefficient<T>,
    pub mask: Option<RegionMask>,
}

impl<T: Real> Instance<T> {
    pub fn grid(&self) -> Grid {
        self.stencil.grid()
    }
}

impl ProblemParams {
    pub fn kind(&self) -> PdeKind {
        match self {
            ProblemParams::Poisson1d => PdeKind::Poisson1d,
            ProblemParams::RandomDiffusion { .. } => PdeKind::RandomDiffusion,
            ProblemParams::Anisotropic { .. } => PdeKind::Anisotropic,
            ProblemParams::ConvectionDiffusion { .. } => PdeKind::ConvectionDiffusion,
            ProblemParams::Jumping { .. } => PdeKind::Jumping,
        }
    }

    pub fn realize<T: Real>(&self, n: usize) -> Result<Instance<T>> {
        let grid = self.kind().grid(n)?;
        let l = T::lit;
        let (stencil, coefficient, mask) = match *self {
            ProblemParams::Poisson1d => (poisson_1d(grid), Coefficient::None, None),
            ProblemParams::RandomDiffusion { seed } => {
                let a = sample_grf_coefficient(grid, seed);
                (assemble_random_diffusion(&a, grid)?, Coefficient::Element(a), None)
            }
            ProblemParams::Anisotropic { xi, theta } => {
                (assemble_anisotropic(l(xi), l(theta), grid)?, Coefficient::None, None)
            }
            ProblemParams::ConvectionDiffusion { eps, wx, wy } => (
                assemble_convection_diffusion(l(eps), l(wx), l(wy), grid)?,
                Coefficient::None,
                None,
            ),
            ProblemParams::Jumping { seed, blocks, m } => {
                let (a, mask) = sample_checkerboard(grid, blocks, l(m), seed)?;
                (assemble_jumping(&a, grid)?, Coefficient::Nodal(a), Some(mask))
            }
        };
        Ok(Instance {
            params: self.clone(),
            stencil,
            coefficient,
            mask,
        })
    }
}

/// Sampling recipe for a parametric family.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub kind: PdeKind,
    /// Anisotropy strength interval.
    pub xi_range: (f64, f64),
    /// Anisotropy angle interval.
    pub theta_range: (f64, f64),
    /// Interval of `log10(1/eps)`.
    pub log_inv_eps_range: (f64, f64),
    /// Interval for each wind component.
    pub wind_range: (f64, f64),
    pub blocks: usize,
    /// Interval of the jump exponent `m`.
    pub m_range: (f64, f64),
}

impl Family {
    pub fn new(kind: PdeKind) -> Self {
        let pi = std::f64::consts::PI;
        Self {
            kind,
            xi_range: (1e-6, 1.0),
            theta_range: (-pi, pi),
            log_inv_eps_range: (0.0, 8.0),
            wind_range: (-1.0, 1.0),
            blocks: 4,
            m_range: (4.0, 8.0),
        }
    }

    /// Draws the parameters of item `index`; independent across indices.
    pub fn sample(&self, seed: u64, index: u64) -> ProblemParams {
        let mut rng = stream_rng(seed, index);
        let mut uniform = |(lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        match self.kind {
            PdeKind::Poisson1d => ProblemParams::Poisson1d,
            PdeKind::RandomDiffusion => ProblemParams::RandomDiffusion {
                seed: stream_rng(seed, index).random(),
            },
            PdeKind::Anisotropic => {
                let xi = uniform(self.xi_range);
                let theta = uniform(self.theta_range);
                ProblemParams::Anisotropic { xi, theta }
            }
            PdeKind::ConvectionDiffusion => {
                let e = uniform(self.log_inv_eps_range);
                let wx = uniform(self.wind_range);
                let wy = uniform(self.wind_range);
                ProblemParams::ConvectionDiffusion {
                    eps: 10f64.powf(-e),
                    wx,
                    wy,
                }
            }
            PdeKind::Jumping => {
                let m = uniform(self.m_range);
                let seed = stream_rng(seed, index).random();
                ProblemParams::Jumping {
                    seed,
                    blocks: self.blocks,
                    m,
                }
            }
        }
    }
}
