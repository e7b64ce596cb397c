use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::{czero, Real, C};

use super::RegionMask;

/// Neighbour offsets `(dx, dy)` in storage order NW, N, NE, W, C, E, SW, S, SE.
/// North is `+y`.
pub const OFFSETS: [(isize, isize); 9] = [
    (-1, 1),
    (0, 1),
    (1, 1),
    (-1, 0),
    (0, 0),
    (1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

pub const CENTER: usize = 4;

pub type Coeffs<T> = [C<T>; 9];

/// Builds coefficients from a 3x3 block written north row first.
pub fn from_rows<T: Real>(rows: [[T; 3]; 3]) -> Coeffs<T> {
    let mut c = [czero(); 9];
    for (r, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            c[3 * r + k] = C::new(v, T::zero());
        }
    }
    c
}

/// Per-node 9-point operator with homogeneous Dirichlet halo.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil9Field<T> {
    grid: Grid,
    coeffs: Vec<Coeffs<T>>,
}

impl<T: Real> Stencil9Field<T> {
    pub fn constant(grid: Grid, c: Coeffs<T>) -> Self {
        Self {
            grid,
            coeffs: vec![c; grid.len()],
        }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Coeffs<T>>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} stencils for {} nodes",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Coeffs<T>] {
        &self.coeffs
    }

    pub fn at(&self, idx: usize) -> &Coeffs<T> {
        &self.coeffs[idx]
    }

    pub fn diagonal(&self) -> Vec<C<T>> {
        self.coeffs.iter().map(|c| c[CENTER]).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.windows(2).all(|w| w[0] == w[1])
    }

    pub fn constant_coeffs(&self) -> Result<Coeffs<T>> {
        if self.is_constant() {
            Ok(self.coeffs[0])
        } else {
            Err(Error::NotConstantStencil)
        }
    }

    /// Mean coefficients over all nodes, or over nodes carrying `label`.
    pub fn average(&self, region: Option<(&RegionMask, u8)>) -> Coeffs<T> {
        let mut acc = [czero(); 9];
        let mut count = 0usize;
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some((mask, label)) = region {
                if mask.labels()[i] != label {
                    continue;
                }
            }
            for k in 0..9 {
                acc[k] = acc[k] + c[k];
            }
            count += 1;
        }
        if count > 0 {
            let s = T::one() / T::from_usize_lossy(count);
            for v in &mut acc {
                *v = *v * s;
            }
        }
        acc
    }

    /// `y = A x` on raw node arrays.
    pub fn apply_slice(&self, x: &[C<T>], y: &mut [C<T>]) {
        let (nx, ny) = (self.grid.nx() as isize, self.grid.ny() as isize);
        for iy in 0..ny {
            for ix in 0..nx {
                let p = (iy * nx + ix) as usize;
                let c = &self.coeffs[p];
                let mut acc = czero();
                for (k, &(dx, dy)) in OFFSETS.iter().enumerate() {
                    let (qx, qy) = (ix + dx, iy + dy);
                    if qx >= 0 && qx < nx && qy >= 0 && qy < ny {
                        acc = acc + c[k] * x[(qy * nx + qx) as usize];
                    }
                }
                y[p] = acc;
            }
        }
    }

    /// `y = A^H x` on raw node arrays.
    pub fn apply_adjoint_slice(&self, x: &[C<T>], y: &mut [C<T>]) {
        let (nx, ny) = (self.grid.nx() as isize, self.grid.ny() as isize);
        y.iter_mut().for_each(|v| *v = czero());
        for qy in 0..ny {
            for qx in 0..nx {
                let q = (qy * nx + qx) as usize;
                let c = &self.coeffs[q];
                let v = x[q];
                for (k, &(dx, dy)) in OFFSETS.iter().enumerate() {
                    let (px, py) = (qx + dx, qy + dy);
                    if px >= 0 && px < nx && py >= 0 && py < ny {
                        let p = (py * nx + px) as usize;
                        y[p] = y[p] + c[k].conj() * v;
                    }
                }
            }
        }
    }

    pub fn apply(&self, u: &Field<T>) -> Result<Field<T>> {
        self.grid.ensure_same(&u.grid())?;
        let mut out = Field::zeros(self.grid);
        self.apply_slice(u.values(), out.values_mut());
        Ok(out)
    }

    pub fn apply_adjoint(&self, u: &Field<T>) -> Result<Field<T>> {
        self.grid.ensure_same(&u.grid())?;
        let mut out = Field::zeros(self.grid);
        self.apply_adjoint_slice(u.values(), out.values_mut());
        Ok(out)
    }

    /// `f - A u`.
    pub fn residual(&self, u: &Field<T>, f: &Field<T>) -> Result<Field<T>> {
        Ok(f.sub(&self.apply(u)?))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c.map(|v| v * s)).collect(),
        }
    }
}

/// `(1/h^2) tridiag(-1, 2, -1)` on a 1D grid.
pub fn poisson_1d<T: Real>(grid: Grid) -> Stencil9Field<T> {
    let h = grid.h::<T>();
    let s = T::one() / (h * h);
    let z = T::zero();
    Stencil9Field::constant(grid, from_rows([[z, z, z], [-s, s + s, -s], [z, z, z]]))
}

/// Five-point Laplacian scaled for an `h^2` right-hand side.
pub fn laplacian_5pt<T: Real>(grid: Grid) -> Stencil9Field<T> {
    let (z, m, c) = (T::zero(), -T::one(), T::lit(4.0));
    Stencil9Field::constant(grid, from_rows([[z, m, z], [m, c, m], [z, m, z]]))
}
