use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::{standard_normal, stream_rng};
use crate::scalar::Real;

/// Per-element values on the `(n+1) x (n+1)` element grid.
/// Element `(ex, ey)` covers `[ex h, (ex+1) h] x [ey h, (ey+1) h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementCoefficient<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Real> ElementCoefficient<T> {
    pub fn new(n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != (n + 1) * (n + 1) {
            return Err(Error::ShapeMismatch(format!(
                "{} element values for n={n}",
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, a: T) -> Self {
        Self {
            n,
            values: vec![a; (n + 1) * (n + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, ex: usize, ey: usize) -> T {
        self.values[ey * (self.n + 1) + ex]
    }
}

/// Values on every node including the boundary ring, `(n+2) x (n+2)`.
/// Node `(px, py)` sits at `(px h, py h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalCoefficient<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Real> NodalCoefficient<T> {
    pub fn new(n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != (n + 2) * (n + 2) {
            return Err(Error::ShapeMismatch(format!("{} nodal values for n={n}", values.len())));
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, a: T) -> Self {
        Self {
            n,
            values: vec![a; (n + 2) * (n + 2)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, px: usize, py: usize) -> T {
        self.values[py * (self.n + 2) + px]
    }

    /// Value at interior node `(ix, iy)`.
    #[inline]
    pub fn interior(&self, ix: usize, iy: usize) -> T {
        self.get(ix + 1, iy + 1)
    }
}

/// Two-way labelling of interior nodes (1 or 2).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    grid: Grid,
    labels: Vec<u8>,
}

impl RegionMask {
    pub fn new(grid: Grid, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                grid.len()
            )));
        }
        if labels.iter().any(|&l| l != 1 && l != 2) {
            return Err(Error::DomainError("region labels must be 1 or 2".into()));
        }
        Ok(Self { grid, labels })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// 0/1 indicator of `label`.
    pub fn indicator<T: Real>(&self, label: u8) -> Vec<T> {
        self.labels
            .iter()
            .map(|&l| if l == label { T::one() } else { T::zero() })
            .collect()
    }

    /// True when every 4-connected component of `label` touches the
    /// boundary rows or columns.
    pub fn all_anchored(&self, label: u8) -> bool {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut seen = vec![false; self.labels.len()];
        for start in 0..self.labels.len() {
            if seen[start] || self.labels[start] != label {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut anchored = false;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % nx, p / nx);
                if x == 0 || y == 0 || x + 1 == nx || y + 1 == ny {
                    anchored = true;
                }
                let mut push = |q: usize| {
                    if !seen[q] && self.labels[q] == label {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 {
                    push(p - 1);
                }
                if x + 1 < nx {
                    push(p + 1);
                }
                if y > 0 {
                    push(p - nx);
                }
                if y + 1 < ny {
                    push(p + nx);
                }
            }
            if !anchored {
                return false;
            }
        }
        true
    }
}

/// Karhunen-Loeve weight `(pi^2 (j^2 + k^2) + 9)^-1` of mode `(j, k)`.
pub fn grf_weight<T: Real>(j: usize, k: usize) -> T {
    let s = T::from_usize_lossy(j * j + k * k);
    T::one() / (T::PI() * T::PI() * s + T::lit(9.0))
}

/// `a = exp(g)` at element centres, `g = sum w_jk z_jk 2 sin(j pi x) sin(k pi y)`
/// with `z` given row-major over `j, k = 1..=n+1`.
pub fn grf_from_modes<T: Real>(grid: Grid, zeta: &[T]) -> Result<ElementCoefficient<T>> {
    let n = grid.n();
    let ne = n + 1;
    let modes = n + 1;
    if zeta.len() != modes * modes {
        return Err(Error::ShapeMismatch(format!(
            "{} mode amplitudes, expected {}",
            zeta.len(),
            modes * modes
        )));
    }
    let h = grid.h::<T>();
    let half = T::lit(0.5);
    // s[j][e] = sin((j+1) pi x_e)
    let s: Vec<T> = (0..modes)
        .flat_map(|j| {
            (0..ne).map(move |e| {
                let x = (T::from_usize_lossy(e) + half) * h;
                (T::from_usize_lossy(j + 1) * T::PI() * x).sin()
            })
        })
        .collect();
    // tmp[j][ey] = sum_k w_jk z_jk sin(k pi y_ey)
    let mut tmp = vec![T::zero(); modes * ne];
    for j in 0..modes {
        for k in 0..modes {
            let c = grf_weight::<T>(j + 1, k + 1) * zeta[j * modes + k];
            if c == T::zero() {
                continue;
            }
            for ey in 0..ne {
                tmp[j * ne + ey] = tmp[j * ne + ey] + c * s[k * ne + ey];
            }
        }
    }
    let two = T::lit(2.0);
    let mut values = vec![T::zero(); ne * ne];
    for ey in 0..ne {
        for ex in 0..ne {
            let mut g = T::zero();
            for j in 0..modes {
                g = g + s[j * ne + ex] * tmp[j * ne + ey];
            }
            values[ey * ne + ex] = (two * g).exp();
        }
    }
    ElementCoefficient::new(n, values)
}

/// Log-normal diffusion coefficient with the `(-Laplace + 9)^-2` covariance.
pub fn sample_grf_coefficient<T: Real>(grid: Grid, seed: u64) -> ElementCoefficient<T> {
    let modes = grid.n() + 1;
    let mut rng = stream_rng(seed, 0);
    let zeta: Vec<T> = (0..modes * modes).map(|_| standard_normal(&mut rng)).collect();
    grf_from_modes(grid, &zeta).expect("mode count matches grid")
}

/// Block index of boundary-inclusive node `p` (snapped to grid lines).
fn block_of(p: usize, n: usize, blocks: usize) -> usize {
    (p * blocks / (n + 1)).min(blocks - 1)
}

/// Checkerboard coefficient with blocks of value 1 or `10^-m`.
pub fn sample_checkerboard<T: Real>(
    grid: Grid,
    blocks: usize,
    m: T,
    seed: u64,
) -> Result<(NodalCoefficient<T>, RegionMask)> {
    if blocks == 0 {
        return Err(Error::DomainError("checkerboard needs at least one block".into()));
    }
    let n = grid.n();
    let low = T::lit(10.0).powf(-m);
    let mut rng = stream_rng(seed, 0);
    let is_low: Vec<bool> = (0..blocks * blocks).map(|_| rng.random::<bool>()).collect();
    let side = n + 2;
    let ny_nodes = if grid.ny() == 1 { 1 } else { side };
    let mut values = vec![T::one(); side * side];
    for py in 0..ny_nodes {
        let by = if grid.ny() == 1 { 0 } else { block_of(py, n, blocks) };
        for px in 0..side {
            let bx = block_of(px, n, blocks);
            if is_low[by * blocks + bx] {
                values[py * side + px] = low;
            }
        }
    }
    let a = NodalCoefficient::new(n, values)?;
    let labels = (0..grid.len())
        .map(|i| {
            let (ix, iy) = grid.position(i);
            let v = if grid.ny() == 1 {
                a.get(ix + 1, 0)
            } else {
                a.interior(ix, iy)
            };
            if v == T::one() {
                1
            } else {
                2
            }
        })
        .collect();
    Ok((a, RegionMask::new(grid, labels)?))
}
