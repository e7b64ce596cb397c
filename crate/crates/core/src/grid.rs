//! Uniform grids, node fields and the odd-reflection extension.
//!
//! Interior nodes are stored row-major with the x index fastest:
//! `index = iy * nx + ix`. Node `ix` sits at `x = (ix + 1) h`.

use crate::error::{Error, Result};
use crate::scalar::{czero, Real, C};

/// Spatial dimension of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    One,
    Two,
}

/// Uniform interior grid on the unit interval or unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
    dim: Dim,
}

impl Grid {
    pub fn new(n: usize, dim: Dim) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("grid needs at least one interior node".into()));
        }
        Ok(Self { n, dim })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, Dim::Two)
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(n, Dim::One)
    }

    /// Interior nodes per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.n
    }

    pub fn ny(&self) -> usize {
        match self.dim {
            Dim::One => 1,
            Dim::Two => self.n,
        }
    }

    /// Number of interior unknowns.
    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.n + 1)
    }

    /// Extended (odd-reflected) size per dimension, `2 (n + 1)`.
    pub fn extended_n(&self) -> usize {
        2 * (self.n + 1)
    }

    pub fn ext_nx(&self) -> usize {
        self.extended_n()
    }

    pub fn ext_ny(&self) -> usize {
        match self.dim {
            Dim::One => 1,
            Dim::Two => self.extended_n(),
        }
    }

    pub fn ext_len(&self) -> usize {
        self.ext_nx() * self.ext_ny()
    }

    /// Fails unless the extended size admits a radix-2 transform.
    pub fn check_fft(&self) -> Result<()> {
        if self.extended_n().is_power_of_two() {
            Ok(())
        } else {
            Err(Error::NonPowerOfTwoSize(self.extended_n()))
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    #[inline]
    pub fn position(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    /// Physical coordinates of interior node `idx`; `y = 0` on 1D grids.
    pub fn coords<T: Real>(&self, idx: usize) -> (T, T) {
        let (ix, iy) = self.position(idx);
        let h = self.h::<T>();
        let x = T::from_usize_lossy(ix + 1) * h;
        let y = match self.dim {
            Dim::One => T::zero(),
            Dim::Two => T::from_usize_lossy(iy + 1) * h,
        };
        (x, y)
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.describe(),
                found: other.describe(),
            })
        }
    }

    pub fn describe(&self) -> String {
        match self.dim {
            Dim::One => format!("1D n={}", self.n),
            Dim::Two => format!("2D n={}", self.n),
        }
    }
}

/// Values on the interior nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    values: Vec<C<T>>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![czero(); grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<C<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field of {} values on a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_real(grid: Grid, values: &[T]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| C::new(v, T::zero())).collect())
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn(grid: Grid, f: impl Fn(T, T) -> C<T>) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.coords::<T>(i);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C<T>> {
        self.values
    }

    pub fn norm(&self) -> T {
        norm(&self.values)
    }

    /// `<self, other> = sum conj(self_i) * other_i`.
    pub fn dot(&self, other: &Field<T>) -> C<T> {
        dot(&self.values, &other.values)
    }

    pub fn scale(&mut self, alpha: C<T>) {
        for v in &mut self.values {
            *v = *v * alpha;
        }
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: C<T>, x: &Field<T>) {
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s = *s + alpha * v;
        }
    }

    pub fn add(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field<T>) -> Field<T> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn max_abs_diff(&self, other: &Field<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Field<T> {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Field<T>, f: impl Fn(C<T>, C<T>) -> C<T>) -> Field<T> {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Values on the full periodic `N' x N'` (or `N' x 1`) lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedField<T> {
    grid: Grid,
    values: Vec<C<T>>,
}

impl<T: Real> ExtendedField<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![czero(); grid.ext_len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<C<T>>) -> Result<Self> {
        if values.len() != grid.ext_len() {
            return Err(Error::ShapeMismatch(format!(
                "extended field of {} values, expected {}",
                values.len(),
                grid.ext_len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C<T>> {
        self.values
    }

    pub fn norm(&self) -> T {
        norm(&self.values)
    }

    /// Checks odd symmetry about both walls up to `tol`.
    pub fn is_odd_symmetric(&self, tol: T) -> bool {
        let g = self.grid;
        let (ex, ey) = (g.ext_nx(), g.ext_ny());
        for ky in 0..ey {
            for kx in 0..ex {
                let v = self.values[ky * ex + kx];
                let mx = (ex - kx) % ex;
                let my = if ey == 1 { 0 } else { (ey - ky) % ey };
                let mirrored_x = self.values[ky * ex + mx];
                if (v + mirrored_x).norm() > tol {
                    return false;
                }
                if ey > 1 {
                    let mirrored_y = self.values[my * ex + kx];
                    if (v + mirrored_y).norm() > tol {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Maps an extended index to `(interior index, sign)`; walls map to `None`.
#[inline]
fn fold(k: usize, n: usize) -> Option<(usize, bool)> {
    let wall = n + 1;
    if k == 0 || k == wall {
        None
    } else if k < wall {
        Some((k - 1, false))
    } else {
        Some((2 * wall - k - 1, true))
    }
}

/// Odd-symmetric periodic extension of an interior field.
pub fn odd_extend<T: Real>(f: &Field<T>) -> ExtendedField<T> {
    let g = f.grid();
    let (ex, ey) = (g.ext_nx(), g.ext_ny());
    let mut out = vec![czero(); ex * ey];
    for ky in 0..ey {
        let fy = if ey == 1 { Some((0, false)) } else { fold(ky, g.n()) };
        let Some((iy, sy)) = fy else { continue };
        for kx in 0..ex {
            let Some((ix, sx)) = fold(kx, g.n()) else { continue };
            let v = f.values[g.index(ix, iy)];
            out[ky * ex + kx] = if sx ^ sy { -v } else { v };
        }
    }
    ExtendedField { grid: g, values: out }
}

/// Interior restriction of an extended field.
pub fn restrict<T: Real>(fe: &ExtendedField<T>) -> Field<T> {
    let g = fe.grid();
    let ex = g.ext_nx();
    let mut out = Vec::with_capacity(g.len());
    for iy in 0..g.ny() {
        let ky = if g.ext_ny() == 1 { 0 } else { iy + 1 };
        for ix in 0..g.nx() {
            out.push(fe.values[ky * ex + ix + 1]);
        }
    }
    Field { grid: g, values: out }
}

/// Adjoint of [`restrict`]: zero-padding onto the extended lattice.
pub fn restrict_adjoint<T: Real>(f: &Field<T>) -> ExtendedField<T> {
    let g = f.grid();
    let ex = g.ext_nx();
    let mut out = ExtendedField::zeros(g);
    for iy in 0..g.ny() {
        let ky = if g.ext_ny() == 1 { 0 } else { iy + 1 };
        for ix in 0..g.nx() {
            out.values[ky * ex + ix + 1] = f.values[g.index(ix, iy)];
        }
    }
    out
}

/// Adjoint of [`odd_extend`]: signed sum over the mirror images.
pub fn odd_extend_adjoint<T: Real>(fe: &ExtendedField<T>) -> Field<T> {
    let g = fe.grid();
    let (ex, ey) = (g.ext_nx(), g.ext_ny());
    let mut out = Field::zeros(g);
    for ky in 0..ey {
        let fy = if ey == 1 { Some((0, false)) } else { fold(ky, g.n()) };
        let Some((iy, sy)) = fy else { continue };
        for kx in 0..ex {
            let Some((ix, sx)) = fold(kx, g.n()) else { continue };
            let v = fe.values[ky * ex + kx];
            let slot = &mut out.values[g.index(ix, iy)];
            *slot = if sx ^ sy { *slot - v } else { *slot + v };
        }
    }
    out
}

pub(crate) fn norm<T: Real>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

pub(crate) fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}
