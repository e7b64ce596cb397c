//! Radix-2 FFT with unitary scaling, and the sine-transform Poisson solve.
//!
//! `Forward` uses `exp(-2 pi i k m / n)` (analysis, the inverse Fourier matrix
//! in the corrector); `Inverse` uses `exp(+...)`. Both scale by `1/sqrt(n)`.

use crate::error::{Error, Result};
use crate::grid::{odd_extend, restrict, Dim, ExtendedField, Field};
use crate::scalar::{cis, czero, Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Precomputed twiddles and bit-reversal table for one length.
#[derive(Clone, Debug)]
pub struct FftPlan<T> {
    n: usize,
    twiddles: Vec<C<T>>,
    rev: Vec<usize>,
}

impl<T: Real> FftPlan<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NonPowerOfTwoSize(n));
        }
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let step = T::lit(-2.0) * T::PI() / T::from_usize_lossy(n);
        let twiddles = (0..n / 2).map(|k| cis(step * T::from_usize_lossy(k))).collect();
        Ok(Self { n, twiddles, rev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unscaled in-place transform.
    fn transform_raw(&self, data: &mut [C<T>], dir: Direction) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = match dir {
                        Direction::Forward => w,
                        Direction::Inverse => w.conj(),
                    };
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }

    /// Unitary in-place transform.
    pub fn transform(&self, data: &mut [C<T>], dir: Direction) {
        debug_assert_eq!(data.len(), self.n);
        self.transform_raw(data, dir);
        let s = T::one() / T::from_usize_lossy(self.n).sqrt();
        for v in data.iter_mut() {
            *v = *v * s;
        }
    }
}

/// Unitary 2D transform of a row-major `nx x ny` array (x fastest).
/// A unit `ny` transforms rows only.
pub fn fft2_inplace<T: Real>(data: &mut [C<T>], nx: usize, ny: usize, dir: Direction) -> Result<()> {
    if data.len() != nx * ny {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {}x{} transform",
            data.len(),
            nx,
            ny
        )));
    }
    let px = FftPlan::new(nx)?;
    for row in data.chunks_mut(nx) {
        px.transform(row, dir);
    }
    if ny > 1 {
        let py = FftPlan::new(ny)?;
        let mut col = vec![czero(); ny];
        for x in 0..nx {
            for y in 0..ny {
                col[y] = data[y * nx + x];
            }
            py.transform(&mut col, dir);
            for y in 0..ny {
                data[y * nx + x] = col[y];
            }
        }
    }
    Ok(())
}

pub fn fft2<T: Real>(fe: &ExtendedField<T>, dir: Direction) -> Result<ExtendedField<T>> {
    let g = fe.grid();
    g.check_fft()?;
    let mut values = fe.values().to_vec();
    fft2_inplace(&mut values, g.ext_nx(), g.ext_ny(), dir)?;
    ExtendedField::from_values(g, values)
}

/// Frequency of bin `m` on a lattice of length `n`, wrapped into `[-pi, pi)`.
pub fn bin_frequency<T: Real>(m: usize, n: usize) -> T {
    let m = if 2 * m >= n { m as f64 - n as f64 } else { m as f64 };
    T::lit(2.0 * std::f64::consts::PI * m / n as f64)
}

/// Solves `(1/h^2) tridiag(-1, 2, -1) u = f` by sine expansion, division by
/// the analytic eigenvalues, and recombination.
pub fn dst_solve_poisson_1d<T: Real>(f: &Field<T>) -> Result<Field<T>> {
    let g = f.grid();
    if g.dim() != Dim::One {
        return Err(Error::InvalidGrid("sine-transform solve needs a 1D grid".into()));
    }
    g.check_fft()?;
    let n_ext = g.ext_nx();
    let h = g.h::<T>();
    let mut spec = fft2(&odd_extend(f), Direction::Forward)?;
    let four = T::lit(4.0);
    for (m, v) in spec.values_mut().iter_mut().enumerate() {
        let half_theta = bin_frequency::<T>(m, n_ext) / T::lit(2.0);
        let lambda = four / (h * h) * half_theta.sin().powi(2);
        *v = if lambda > T::zero() { *v / lambda } else { czero() };
    }
    Ok(restrict(&fft2(&spec, Direction::Inverse)?))
}
