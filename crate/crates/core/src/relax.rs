//! Stationary smoothers: damped Jacobi and Richardson.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::pde::Stencil9Field;
use crate::scalar::{Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SmootherKind {
    Jacobi,
    Richardson,
}

impl FromStr for SmootherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" => Ok(SmootherKind::Jacobi),
            "richardson" => Ok(SmootherKind::Richardson),
            other => Err(Error::InvalidConfig(format!("unknown smoother '{other}'"))),
        }
    }
}

/// Smoother `B` repeated `sweeps` times with weight `omega`.
///
/// `sweeps = 0` is allowed and means "no smoothing".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    pub omega: f64,
    pub sweeps: usize,
}

impl SmootherSpec {
    pub fn new(kind: SmootherKind, omega: f64, sweeps: usize) -> Result<Self> {
        let spec = Self { kind, omega, sweeps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn jacobi(omega: f64, sweeps: usize) -> Result<Self> {
        Self::new(SmootherKind::Jacobi, omega, sweeps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "smoother weight must lie in (0, 2), got {}",
                self.omega
            )));
        }
        Ok(())
    }

    pub fn with_sweeps(self, sweeps: usize) -> Self {
        Self { sweeps, ..self }
    }
}

/// A smoother bound to one operator, with the scaled inverse diagonal cached.
#[derive(Clone, Debug)]
pub struct Smoother<'a, T> {
    spec: SmootherSpec,
    stencil: &'a Stencil9Field<T>,
    /// `omega D^-1` (Jacobi) or `omega` (Richardson) per node.
    weights: Vec<C<T>>,
}

impl<'a, T: Real> Smoother<'a, T> {
    pub fn new(spec: SmootherSpec, stencil: &'a Stencil9Field<T>) -> Result<Self> {
        spec.validate()?;
        let omega = C::new(T::lit(spec.omega), T::zero());
        let weights = match spec.kind {
            SmootherKind::Jacobi => stencil
                .diagonal()
                .into_iter()
                .enumerate()
                .map(|(i, d)| {
                    if d.norm() == T::zero() {
                        Err(Error::ZeroDiagonal(i))
                    } else {
                        Ok(omega / d)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            SmootherKind::Richardson => vec![omega; stencil.grid().len()],
        };
        Ok(Self { spec, stencil, weights })
    }

    pub fn spec(&self) -> SmootherSpec {
        self.spec
    }

    pub fn weights(&self) -> &[C<T>] {
        &self.weights
    }

    /// One sweep `u <- u + W (f - A u)` using `scratch` for `A u`.
    pub fn sweep(&self, u: &mut [C<T>], f: &[C<T>], scratch: &mut [C<T>]) {
        self.stencil.apply_slice(u, scratch);
        for i in 0..u.len() {
            u[i] = u[i] + self.weights[i] * (f[i] - scratch[i]);
        }
    }

    /// One sweep of the error propagator `e <- (I - W A) e`.
    pub fn sweep_error(&self, e: &mut [C<T>], scratch: &mut [C<T>]) {
        self.stencil.apply_slice(e, scratch);
        for i in 0..e.len() {
            e[i] = e[i] - self.weights[i] * scratch[i];
        }
    }

    /// One sweep of the adjoint propagator `g <- g - A^H (conj(W) g)`.
    pub fn sweep_adjoint(&self, g: &mut [C<T>], tmp: &mut [C<T>], scratch: &mut [C<T>]) {
        for i in 0..g.len() {
            tmp[i] = self.weights[i].conj() * g[i];
        }
        self.stencil.apply_adjoint_slice(tmp, scratch);
        for i in 0..g.len() {
            g[i] = g[i] - scratch[i];
        }
    }

    pub fn smooth_in_place(&self, u: &mut [C<T>], f: &[C<T>]) {
        let mut scratch = vec![C::new(T::zero(), T::zero()); u.len()];
        for _ in 0..self.spec.sweeps {
            self.sweep(u, f, &mut scratch);
        }
    }
}

/// Applies `sweeps` smoothing steps to `u` for the system `A u = f`.
pub fn smooth<T: Real>(spec: SmootherSpec, stencil: &Stencil9Field<T>, u: &Field<T>, f: &Field<T>) -> Result<Field<T>> {
    let grid = stencil.grid();
    grid.ensure_same(&u.grid())?;
    grid.ensure_same(&f.grid())?;
    let s = Smoother::new(spec, stencil)?;
    let mut out = u.clone();
    s.smooth_in_place(out.values_mut(), f.values());
    Ok(out)
}

/// `(I - B A)^M e`.
pub fn error_propagation_apply<T: Real>(
    spec: SmootherSpec,
    stencil: &Stencil9Field<T>,
    e: &Field<T>,
) -> Result<Field<T>> {
    stencil.grid().ensure_same(&e.grid())?;
    let s = Smoother::new(spec, stencil)?;
    let mut out = e.clone();
    let mut scratch = vec![C::new(T::zero(), T::zero()); e.grid().len()];
    for _ in 0..spec.sweeps {
        s.sweep_error(out.values_mut(), &mut scratch);
    }
    Ok(out)
}
