//! Local Fourier analysis on the extended frequency lattice.
//!
//! Symbols are stored in FFT bin order; bin `m` has frequency
//! `2 pi m / N'` wrapped into `[-pi, pi)`.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fft::bin_frequency;
use crate::grid::{Dim, Grid};
use crate::pde::{Coeffs, Stencil9Field, CENTER, OFFSETS};
use crate::relax::{SmootherKind, SmootherSpec};
use crate::scalar::{cis, czero, Real, C};

/// Complex values over the frequency lattice of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMap<T> {
    grid: Grid,
    values: Vec<C<T>>,
}

impl<T: Real> SymbolMap<T> {
    pub fn from_values(grid: Grid, values: Vec<C<T>>) -> Result<Self> {
        if values.len() != grid.ext_len() {
            return Err(Error::ShapeMismatch(format!(
                "{} symbol values for a lattice of {}",
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Frequencies of lattice entry `idx`; the second is zero in 1D.
    pub fn theta(&self, idx: usize) -> (T, T) {
        lattice_theta(self.grid, idx)
    }

    pub fn modulus(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

pub fn lattice_theta<T: Real>(grid: Grid, idx: usize) -> (T, T) {
    let ex = grid.ext_nx();
    let (mx, my) = (idx % ex, idx / ex);
    let t1 = bin_frequency(mx, ex);
    let t2 = match grid.dim() {
        Dim::One => T::zero(),
        Dim::Two => bin_frequency(my, grid.ext_ny()),
    };
    (t1, t2)
}

/// `sum_k c_k exp(i theta . k)`.
pub fn symbol_at<T: Real>(c: &Coeffs<T>, t1: T, t2: T) -> C<T> {
    let mut acc = czero();
    for (k, &(dx, dy)) in OFFSETS.iter().enumerate() {
        if c[k] == czero() {
            continue;
        }
        let phase = t1 * T::lit(dx as f64) + t2 * T::lit(dy as f64);
        acc = acc + c[k] * cis(phase);
    }
    acc
}

/// Symbol of fixed coefficients on the lattice of `grid`.
pub fn coeffs_symbol<T: Real>(c: &Coeffs<T>, grid: Grid) -> SymbolMap<T> {
    let values = (0..grid.ext_len())
        .map(|i| {
            let (t1, t2) = lattice_theta::<T>(grid, i);
            symbol_at(c, t1, t2)
        })
        .collect();
    SymbolMap { grid, values }
}

pub fn stencil_symbol<T: Real>(stencil: &Stencil9Field<T>) -> Result<SymbolMap<T>> {
    let c = stencil.constant_coeffs()?;
    Ok(coeffs_symbol(&c, stencil.grid()))
}

/// `(1 - omega A(theta)/c0)^M` (Jacobi) or `(1 - omega A(theta))^M`.
pub fn smoother_symbol_of_coeffs<T: Real>(spec: SmootherSpec, c: &Coeffs<T>, grid: Grid) -> Result<SymbolMap<T>> {
    spec.validate()?;
    let omega = T::lit(spec.omega);
    let scale = match spec.kind {
        SmootherKind::Jacobi => {
            if c[CENTER].norm() == T::zero() {
                return Err(Error::ZeroDiagonal(0));
            }
            C::new(omega, T::zero()) / c[CENTER]
        }
        SmootherKind::Richardson => C::new(omega, T::zero()),
    };
    let one = C::new(T::one(), T::zero());
    let a = coeffs_symbol(c, grid);
    let values = a
        .values
        .iter()
        .map(|&v| (one - scale * v).powu(spec.sweeps as u32))
        .collect();
    Ok(SymbolMap { grid, values })
}

pub fn jacobi_symbol<T: Real>(spec: SmootherSpec, stencil: &Stencil9Field<T>) -> Result<SymbolMap<T>> {
    let c = stencil.constant_coeffs()?;
    smoother_symbol_of_coeffs(spec, &c, stencil.grid())
}

/// Interior nodes visited by frozen-coefficient sampling along one axis.
fn sample_axis(n: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let anchor = ((n - 1) / 2) % stride;
    (anchor..n).step_by(stride).collect()
}

/// `exp(i theta . k)` for every lattice bin and stencil offset.
fn phase_table<T: Real>(grid: Grid) -> Vec<[C<T>; 9]> {
    (0..grid.ext_len())
        .map(|i| {
            let (t1, t2) = lattice_theta::<T>(grid, i);
            std::array::from_fn(|k| {
                let (dx, dy) = OFFSETS[k];
                cis(t1 * T::lit(dx as f64) + t2 * T::lit(dy as f64))
            })
        })
        .collect()
}

/// Worst-case frozen-coefficient smoother symbol over sampled nodes.
pub fn sampled_symbol<T: Real>(
    spec: SmootherSpec,
    stencil: &Stencil9Field<T>,
    sample_stride: usize,
) -> Result<SymbolMap<T>> {
    spec.validate()?;
    let grid = stencil.grid();
    let xs = sample_axis(grid.nx(), sample_stride);
    let ys = if grid.ny() == 1 {
        vec![0]
    } else {
        sample_axis(grid.ny(), sample_stride)
    };
    let phases = phase_table::<T>(grid);
    let omega = C::new(T::lit(spec.omega), T::zero());
    let one = C::new(T::one(), T::zero());
    let mut best: Vec<C<T>> = vec![czero(); grid.ext_len()];
    let mut seen = std::collections::HashSet::new();
    for &iy in &ys {
        for &ix in &xs {
            let idx = grid.index(ix, iy);
            let c = *stencil.at(idx);
            let key: Vec<u64> = c
                .iter()
                .flat_map(|v| [v.re.to_f64_lossy().to_bits(), v.im.to_f64_lossy().to_bits()])
                .collect();
            if !seen.insert(key) {
                continue;
            }
            let scale = match spec.kind {
                SmootherKind::Jacobi => {
                    if c[CENTER].norm() == T::zero() {
                        return Err(Error::ZeroDiagonal(idx));
                    }
                    omega / c[CENTER]
                }
                SmootherKind::Richardson => omega,
            };
            for (cur, ph) in best.iter_mut().zip(&phases) {
                let mut a = czero();
                for k in 0..9 {
                    if c[k] != czero() {
                        a = a + c[k] * ph[k];
                    }
                }
                let v = (one - scale * a).powu(spec.sweeps as u32);
                if v.norm() > cur.norm() {
                    *cur = v;
                }
            }
        }
    }
    Ok(SymbolMap { grid, values: best })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PartitionMode {
    /// Corrector handles `[-pi/2, pi/2)^d`.
    Box,
    /// Corrector handles frequencies with modulus above the threshold.
    Threshold(f64),
}

impl FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "box" {
            return Ok(PartitionMode::Box);
        }
        if let Some(t) = s.strip_prefix("threshold") {
            let t = t.trim_start_matches([':', '=']);
            if t.is_empty() {
                return Ok(PartitionMode::Threshold(0.5));
            }
            return t
                .parse()
                .map(PartitionMode::Threshold)
                .map_err(|_| Error::InvalidConfig(format!("bad threshold '{t}'")));
        }
        Err(Error::InvalidConfig(format!("unknown partition mode '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    /// Smoother-handled.
    B,
    /// Corrector-handled.
    H,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::B => "B",
            Label::H => "H",
        }
    }
}

/// Partition of the lattice with its smoothing statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMask {
    grid: Grid,
    labels: Vec<Label>,
    pub mu_b: f64,
    pub eps_b: f64,
}

impl FrequencyMask {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn is_h(&self, idx: usize) -> bool {
        self.labels[idx] == Label::H
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Connected components of `label` under periodic 8-neighbour adjacency.
    pub fn components(&self, label: Label) -> usize {
        let (ex, ey) = (self.grid.ext_nx(), self.grid.ext_ny());
        let mut seen = vec![false; self.labels.len()];
        let mut count = 0;
        for start in 0..self.labels.len() {
            if seen[start] || self.labels[start] != label {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(p) = stack.pop() {
                let (x, y) = ((p % ex) as isize, (p / ex) as isize);
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if (dx, dy) == (0, 0) || (ey == 1 && dy != 0) {
                            continue;
                        }
                        let qx = (x + dx).rem_euclid(ex as isize) as usize;
                        let qy = (y + dy).rem_euclid(ey as isize) as usize;
                        let q = qy * ex + qx;
                        if !seen[q] && self.labels[q] == label {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        count
    }
}

fn in_box<T: Real>(t: T) -> bool {
    let half = T::FRAC_PI_2();
    t >= -half && t < half
}

pub fn partition_frequencies<T: Real>(symbol: &SymbolMap<T>, mode: PartitionMode) -> Result<FrequencyMask> {
    let grid = symbol.grid();
    let labels: Vec<Label> = (0..symbol.len())
        .map(|i| {
            let is_h = match mode {
                PartitionMode::Box => {
                    let (t1, t2) = symbol.theta(i);
                    in_box(t1) && (grid.dim() == Dim::One || in_box(t2))
                }
                PartitionMode::Threshold(t) => symbol.values[i].norm().to_f64_lossy() > t,
            };
            if is_h {
                Label::H
            } else {
                Label::B
            }
        })
        .collect();
    let mut mu_b = 0.0f64;
    let mut max_h = f64::NEG_INFINITY;
    for (v, l) in symbol.values.iter().zip(&labels) {
        let m = v.norm().to_f64_lossy();
        match l {
            Label::B => mu_b = mu_b.max(m),
            Label::H => max_h = max_h.max(m),
        }
    }
    let eps_b = (max_h - 1.0).max(0.0);
    let mask = FrequencyMask {
        grid,
        labels,
        mu_b,
        eps_b,
    };
    if mask.count(Label::H) == 0 {
        return Err(Error::EmptyPartition {
            empty: "H",
            mu_b,
            eps_b,
        });
    }
    if mask.count(Label::B) == 0 {
        return Err(Error::EmptyPartition {
            empty: "B",
            mu_b,
            eps_b,
        });
    }
    Ok(mask)
}
