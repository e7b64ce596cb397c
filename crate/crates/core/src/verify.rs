//! Dense oracles and the convergence audit.
//!
//! Everything here is brute force: the operator is assembled as a dense
//! complex matrix, factored or diagonalized in-crate, and used to check the
//! smoother / corrector split of a hybrid iteration mode by mode. Work is
//! `O(n^3)` in the number of unknowns, so systems are capped at
//! 961 unknowns (`N <= 31` in 2D).
//! The oracles run in `f64` regardless of the scalar type used elsewhere.

use crate::corrector::Corrector;
use crate::error::{Error, Result};
use crate::grid::{Dim, Field, Grid};
use crate::hybrid::hybrid_fixed_steps;
use crate::lfa::{partition_frequencies, sampled_symbol, Label, PartitionMode};
use crate::pde::Stencil9Field;
use crate::relax::SmootherSpec;
use crate::rng::normal_field;
use crate::scalar::C;

type C64 = C<f64>;

/// Most unknowns the dense oracles accept (a 31 x 31 grid).
pub const DENSE_MAX_UNKNOWNS: usize = 31 * 31;
/// Default sparsity cut for `V_theta`.
pub const SUPPORT_TAU: f64 = 1e-6;
/// Eigenvector condition numbers above this make `eta` unreliable.
pub const KAPPA_LIMIT: f64 = 1e8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Column `j` is `A e_j`.
    pub fn from_stencil(stencil: &Stencil9Field<f64>) -> Self {
        let n = stencil.grid().len();
        let mut m = Self::zeros(n);
        let mut e = vec![ZERO; n];
        let mut col = vec![ZERO; n];
        for j in 0..n {
            e[j] = ONE;
            stencil.apply_slice(&e, &mut col);
            for (i, v) in col.iter().enumerate() {
                m.data[i * n + j] = *v;
            }
            e[j] = ZERO;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).fold(ZERO, |acc, (a, b)| acc + a * b))
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].norm().total_cmp(&a[y * n + k].norm()))
                .unwrap_or(k);
            let pv = a[p * n + k];
            if pv.norm() == 0.0 || !pv.norm().is_finite() {
                return Err(Error::SingularMatrix);
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            for i in k + 1..n {
                let l = a[i * n + k] / pv;
                a[i * n + k] = l;
                if l == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let t = a[k * n + j];
                    a[i * n + j] -= l * t;
                }
            }
        }
        Ok(Lu { n, lu: a, piv })
    }
}

/// `P A = L U`, unit lower `L` stored below the diagonal.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    piv: Vec<usize>,
}

impl Lu {
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x: Vec<C64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e[j] = ONE;
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv.set(i, j, v);
            }
            e[j] = ZERO;
        }
        inv
    }
}

fn check_dense_size(grid: Grid) -> Result<()> {
    if grid.len() > DENSE_MAX_UNKNOWNS {
        return Err(Error::InvalidConfig(format!(
            "dense oracles take at most {DENSE_MAX_UNKNOWNS} unknowns, got {}",
            grid.len()
        )));
    }
    Ok(())
}

/// Solves `A u = f` by dense LU.
pub fn dense_solve(stencil: &Stencil9Field<f64>, f: &Field<f64>) -> Result<Field<f64>> {
    stencil.grid().ensure_same(&f.grid())?;
    check_dense_size(stencil.grid())?;
    let lu = DenseMatrix::from_stencil(stencil).lu()?;
    Field::from_values(f.grid(), lu.solve(f.values()))
}

/// Unit-norm discrete sine mode `(j, k)`, `1 <= j, k <= N` (`k` ignored in 1D).
pub fn sine_mode(grid: Grid, j: usize, k: usize) -> Result<Field<f64>> {
    let n = grid.n();
    let k_eff = if grid.dim() == Dim::One { 1 } else { k };
    if j == 0 || j > n || k_eff == 0 || k_eff > n {
        return Err(Error::IndexOutOfRange(j, k));
    }
    let h = grid.h::<f64>();
    let s = |m: usize, p: usize| (2.0 * h).sqrt() * (std::f64::consts::PI * (m * p) as f64 * h).sin();
    let vals = (0..grid.len())
        .map(|idx| {
            let (ix, iy) = grid.position(idx);
            let v = match grid.dim() {
                Dim::One => s(j, ix + 1),
                Dim::Two => s(j, ix + 1) * s(k, iy + 1),
            };
            C64::new(v, 0.0)
        })
        .collect();
    Field::from_values(grid, vals)
}

/// All sine modes in lexicographic `(k, j)` order; position `m` is mode
/// `(m % N + 1, m / N + 1)`.
pub fn sine_modes(grid: Grid) -> Vec<(usize, usize)> {
    let n = grid.n();
    let ky = if grid.dim() == Dim::One { 1 } else { n };
    (1..=ky).flat_map(|k| (1..=n).map(move |j| (j, k))).collect()
}

/// Eigendecomposition `A = Q diag(lambda) Q^-1`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    grid: Grid,
    /// Sorted by modulus, ties by real then imaginary part.
    pub values: Vec<C64>,
    /// Unit-norm eigenvectors as columns.
    pub vectors: DenseMatrix,
    /// `||Q||_F ||Q^-1||_F`; infinite when `Q` is singular.
    pub condition: f64,
    /// `max_i ||A xi_i - lambda_i xi_i|| / ||A||_F`.
    pub residual: f64,
    pub qr_iterations: usize,
    lu: Option<Lu>,
}

impl EigenSystem {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Field<f64> {
        Field::from_values(self.grid, self.vectors.column(i)).expect("eigenvector length matches grid")
    }

    pub fn is_reliable(&self) -> bool {
        self.condition.is_finite() && self.condition <= KAPPA_LIMIT
    }
}

/// Householder reduction to upper Hessenberg form; returns `(H, Q)` with
/// `A = Q H Q^H`.
fn hessenberg(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = a.n;
    let mut h = a.clone();
    let mut q = DenseMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let mut v: Vec<C64> = (k + 1..n).map(|i| h.get(i, k)).collect();
        let xnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        v[0] += phase * xnorm;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= vn);
        // H <- P H P, P = I - 2 v v^H acting on rows/cols k+1..
        for j in 0..n {
            let s = v
                .iter()
                .enumerate()
                .fold(ZERO, |acc, (t, vi)| acc + vi.conj() * h.get(k + 1 + t, j));
            for (t, vi) in v.iter().enumerate() {
                let r = k + 1 + t;
                h.set(r, j, h.get(r, j) - vi * s * 2.0);
            }
        }
        for m in [&mut h, &mut q] {
            for i in 0..n {
                let s = v
                    .iter()
                    .enumerate()
                    .fold(ZERO, |acc, (t, vi)| acc + m.get(i, k + 1 + t) * vi);
                for (t, vi) in v.iter().enumerate() {
                    let c = k + 1 + t;
                    m.set(i, c, m.get(i, c) - s * vi.conj() * 2.0);
                }
            }
        }
        for i in k + 2..n {
            h.set(i, k, ZERO);
        }
    }
    (h, q)
}

/// Rotation `[c s; -conj(s) c]` mapping `(x, y)` to `(r, 0)`.
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let r = ax.hypot(y.norm());
    if r == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, ONE);
    }
    (ax / r, x * y.conj() / (ax * r))
}

/// Eigenvalue of the trailing 2x2 block closer to its last diagonal entry.
fn wilkinson(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * c;
    let root = disc.sqrt();
    let (l1, l2) = (tr + root, tr - root);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Shifted QR on Hessenberg `h`, accumulating rotations into `z`; leaves
/// `h` upper triangular.
fn schur(h: &mut DenseMatrix, z: &mut DenseMatrix) -> Result<usize> {
    let n = h.n;
    if n == 0 {
        return Ok(0);
    }
    let cap = 100 * n;
    let mut total = 0;
    let mut since = 0;
    let mut hi = n - 1;
    let anorm = h.frobenius().max(f64::MIN_POSITIVE);
    let mut rots: Vec<(f64, C64)> = Vec::with_capacity(n);
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let scale = h.get(l - 1, l - 1).norm() + h.get(l, l).norm();
            let scale = if scale == 0.0 { anorm } else { scale };
            if h.get(l, l - 1).norm() <= f64::EPSILON * scale {
                h.set(l, l - 1, ZERO);
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            since = 0;
            continue;
        }
        total += 1;
        since += 1;
        if total > cap {
            return Err(Error::NonConvergentQR(cap));
        }
        let sigma = if since % 10 == 0 {
            // exceptional shift breaks cycles
            h.get(hi, hi)
                + C64::new(
                    h.get(hi, hi - 1).norm() * 1.5,
                    h.get(hi - 1, hi.saturating_sub(2)).norm(),
                )
        } else {
            wilkinson(
                h.get(hi - 1, hi - 1),
                h.get(hi - 1, hi),
                h.get(hi, hi - 1),
                h.get(hi, hi),
            )
        };
        for i in l..=hi {
            h.set(i, i, h.get(i, i) - sigma);
        }
        rots.clear();
        for k in l..hi {
            let (c, s) = givens(h.get(k, k), h.get(k + 1, k));
            for j in k..n {
                let (a, b) = (h.get(k, j), h.get(k + 1, j));
                h.set(k, j, a * c + s * b);
                h.set(k + 1, j, -s.conj() * a + b * c);
            }
            h.set(k + 1, k, ZERO);
            rots.push((c, s));
        }
        for (t, &(c, s)) in rots.iter().enumerate() {
            let k = l + t;
            for i in 0..=(k + 1).min(hi) {
                let (a, b) = (h.get(i, k), h.get(i, k + 1));
                h.set(i, k, a * c + b * s.conj());
                h.set(i, k + 1, -s * a + b * c);
            }
            for i in 0..n {
                let (a, b) = (z.get(i, k), z.get(i, k + 1));
                z.set(i, k, a * c + b * s.conj());
                z.set(i, k + 1, -s * a + b * c);
            }
        }
        for i in l..=hi {
            h.set(i, i, h.get(i, i) + sigma);
        }
    }
    Ok(total)
}

/// Eigenvectors of upper-triangular `t` by back substitution. Near-equal
/// diagonal entries are perturbed to `d0 = 1e3 eps ||T||` rather than
/// dividing by zero.
fn triangular_eigenvectors(t: &DenseMatrix) -> DenseMatrix {
    let n = t.n;
    let d0 = 1e3 * f64::EPSILON * t.frobenius().max(f64::MIN_POSITIVE);
    let mut y = DenseMatrix::zeros(n);
    for j in 0..n {
        let lj = t.get(j, j);
        y.set(j, j, ONE);
        for i in (0..j).rev() {
            let num = (i + 1..=j).fold(ZERO, |acc, m| acc + t.get(i, m) * y.get(m, j));
            let mut den = t.get(i, i) - lj;
            if den.norm() < d0 {
                if num.norm() < d0 {
                    y.set(i, j, ZERO);
                    continue;
                }
                den = C64::new(d0, 0.0);
            }
            y.set(i, j, -num / den);
        }
    }
    y
}

/// Full eigendecomposition of the assembled operator (Hessenberg reduction,
/// shifted QR, triangular back substitution).
pub fn dense_eig(stencil: &Stencil9Field<f64>) -> Result<EigenSystem> {
    let grid = stencil.grid();
    check_dense_size(grid)?;
    let a = DenseMatrix::from_stencil(stencil);
    let n = a.n;
    let (mut t, mut z) = hessenberg(&a);
    let qr_iterations = schur(&mut t, &mut z)?;
    let y = triangular_eigenvectors(&t);

    // V = Z Y, columns normalized and phase-fixed (largest entry real positive)
    let mut cols: Vec<(C64, Vec<C64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<C64> = (0..n)
                .map(|i| (0..=j).fold(ZERO, |acc, m| acc + z.get(i, m) * y.get(m, j)))
                .collect();
            let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let big = v
                .iter()
                .copied()
                .max_by(|p, q| p.norm().total_cmp(&q.norm()))
                .unwrap_or(ONE);
            let ph = if big.norm() == 0.0 {
                ONE
            } else {
                big.conj() / big.norm()
            };
            v.iter_mut().for_each(|c| *c = *c * ph / nrm);
            (t.get(j, j), v)
        })
        .collect();
    cols.sort_by(|(p, _), (q, _)| {
        p.norm()
            .total_cmp(&q.norm())
            .then(p.re.total_cmp(&q.re))
            .then(p.im.total_cmp(&q.im))
    });

    let mut vectors = DenseMatrix::zeros(n);
    let mut values = Vec::with_capacity(n);
    for (j, (lam, v)) in cols.into_iter().enumerate() {
        values.push(lam);
        for (i, c) in v.into_iter().enumerate() {
            vectors.set(i, j, c);
        }
    }

    let anorm = a.frobenius().max(f64::MIN_POSITIVE);
    let residual = (0..n)
        .map(|j| {
            let v = vectors.column(j);
            let av = a.matvec(&v);
            av.iter()
                .zip(&v)
                .map(|(p, q)| (p - values[j] * q).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / anorm
        })
        .fold(0.0, f64::max);

    let (lu, condition) = match vectors.lu() {
        Ok(lu) => {
            let kappa = vectors.frobenius() * lu.inverse().frobenius();
            (Some(lu), if kappa.is_finite() { kappa } else { f64::INFINITY })
        }
        Err(_) => (None, f64::INFINITY),
    };
    Ok(EigenSystem {
        grid,
        values,
        vectors,
        condition,
        residual,
        qr_iterations,
        lu,
    })
}

/// Coordinates of a sine mode in the eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub coeffs: Vec<C64>,
    /// Indices with `|t_i| > tau max |t|` (all indices when `tau = 0`).
    pub support: Vec<usize>,
}

/// Solves `Q t = phi(theta)` for the unit sine mode `theta = (j, k)`.
pub fn expansion_coefficients(eig: &EigenSystem, theta: (usize, usize), tau: f64) -> Result<Expansion> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "support threshold must be >= 0, got {tau}"
        )));
    }
    let lu = eig.lu.as_ref().ok_or(Error::SingularEigenbasis)?;
    let phi = sine_mode(eig.grid, theta.0, theta.1)?;
    let coeffs = lu.solve(phi.values());
    if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::SingularEigenbasis);
    }
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let support = if tau == 0.0 {
        (0..coeffs.len()).collect()
    } else {
        (0..coeffs.len()).filter(|&i| coeffs[i].norm() > tau * max).collect()
    };
    Ok(Expansion { coeffs, support })
}

/// `||l_i|| = ||xi_i - H(lambda_i xi_i)||` for every eigenpair.
pub fn corrector_eigen_errors(hc: &Corrector<f64>, eig: &EigenSystem) -> Result<Vec<f64>> {
    hc.grid().ensure_same(&eig.grid)?;
    (0..eig.len())
        .map(|i| {
            let xi = eig.vector(i);
            let lam = eig.values[i];
            let hx = hc.apply(&xi.map(|v| v * lam))?;
            Ok(xi.sub(&hx).norm())
        })
        .collect()
}

/// `sqrt(max{2 mu_B^2M C, 2 (1 + eps_B)^2M mu_H})`.
pub fn eta_formula(mu_b: f64, eps_b: f64, sweeps: usize, c_bound: f64, mu_h: f64) -> f64 {
    let m2 = 2 * sweeps as i32;
    let b_side = 2.0 * mu_b.powi(m2) * c_bound;
    let h_side = 2.0 * (1.0 + eps_b).powi(m2) * mu_h;
    b_side.max(h_side).sqrt()
}

/// Geometric-mean contraction of `errors` over `window`, ignoring steps
/// whose error fell below `floor * errors[0]`.
pub fn geometric_contraction(errors: &[f64], window: (usize, usize), floor: f64) -> f64 {
    let cut = floor * errors.first().copied().unwrap_or(0.0);
    let last = errors.len().saturating_sub(1);
    let rate = |lo: usize, hi: usize| -> Option<f64> {
        let hi = (lo..=hi.min(last)).rev().find(|&s| errors[s] > cut)?;
        (hi > lo).then(|| (errors[hi] / errors[lo]).powf(1.0 / (hi - lo) as f64))
    };
    if window.0 <= last {
        if let Some(r) = rate(window.0, window.1) {
            return r;
        }
    }
    // converged before the window opened; fall back to the whole run
    rate(0, window.1).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditConfig {
    pub partition: PartitionMode,
    /// Node stride of the frozen-coefficient smoother symbol.
    pub sample_stride: usize,
    pub tau: f64,
    pub steps: usize,
    /// Outer steps spanned by the empirical rate.
    pub window: (usize, usize),
    pub rhs_seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            partition: PartitionMode::Box,
            sample_stride: 1,
            tau: SUPPORT_TAU,
            steps: 20,
            window: (5, 20),
            rhs_seed: 0,
        }
    }
}

/// Per-sine-mode term of the corrector bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaRow {
    pub j: usize,
    pub k: usize,
    pub label: Label,
    pub support: usize,
    /// `sum_{i in V_theta} ||l_i||^2`.
    pub sum_l2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    pub n: usize,
    pub dim: Dim,
    pub sweeps: usize,
    pub mu_b: f64,
    pub eps_b: f64,
    pub mu_h: f64,
    pub c_bound: f64,
    pub thetas: Vec<ThetaRow>,
    pub max_support: usize,
    /// Eigen-indices reached from corrector-side modes, and the rest.
    pub index_h: Vec<usize>,
    pub index_b: Vec<usize>,
    pub l_norms: Vec<f64>,
    /// Only defined for single spectral correctors.
    pub eps_v: Option<f64>,
    pub eps_lambda: Option<f64>,
    pub eta: f64,
    pub empirical: f64,
    pub bound_honored: bool,
    pub condition: f64,
    pub eta_reliable: bool,
    pub eigen_residual: f64,
}

impl AssumptionReport {
    pub fn mean_l(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return f64::NAN;
        }
        indices.iter().map(|&i| self.l_norms[i]).sum::<f64>() / indices.len() as f64
    }

    /// Scalar summary as `(key, value)` pairs; undefined entries are NaN.
    pub fn summary(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("n", self.n as f64),
            ("sweeps", self.sweeps as f64),
            ("mu_b", self.mu_b),
            ("eps_b", self.eps_b),
            ("mu_h", self.mu_h),
            ("c_bound", self.c_bound),
            ("max_support", self.max_support as f64),
            ("size_index_h", self.index_h.len() as f64),
            ("size_index_b", self.index_b.len() as f64),
            ("mean_l_h", self.mean_l(&self.index_h)),
            ("mean_l_b", self.mean_l(&self.index_b)),
            ("eps_v", self.eps_v.unwrap_or(f64::NAN)),
            ("eps_lambda", self.eps_lambda.unwrap_or(f64::NAN)),
            ("eta", self.eta),
            ("empirical_contraction", self.empirical),
            ("bound_honored", if self.bound_honored { 1.0 } else { 0.0 }),
            ("condition", self.condition),
            ("eta_reliable", if self.eta_reliable { 1.0 } else { 0.0 }),
            ("eigen_residual", self.eigen_residual),
        ]
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
        let mut s = String::new();
        s.push_str(&format!("audit: N = {}, {:?}, M = {}\n", self.n, self.dim, self.sweeps));
        s.push_str(&format!(
            "smoother:   mu_B = {:.6}, eps_B = {:.6}\n",
            self.mu_b, self.eps_b
        ));
        s.push_str(&format!(
            "corrector:  mu_H = {:.6e}, C = {:.6e}, max |V_theta| = {}\n",
            self.mu_h, self.c_bound, self.max_support
        ));
        s.push_str(&format!(
            "index sets: |I^H| = {}, |I^B| = {}, mean ||l|| (H / B) = {:.4e} / {:.4e}\n",
            self.index_h.len(),
            self.index_b.len(),
            self.mean_l(&self.index_h),
            self.mean_l(&self.index_b)
        ));
        s.push_str(&format!(
            "eigvectors: eps_v = {}, eps_lambda = {}\n",
            opt(self.eps_v),
            opt(self.eps_lambda)
        ));
        s.push_str(&format!(
            "eta = {:.6}{}\n",
            self.eta,
            if self.eta_reliable {
                String::new()
            } else {
                format!(" (unreliable: condition {:.3e})", self.condition)
            }
        ));
        s.push_str(&format!(
            "empirical contraction = {:.6} ({})\n",
            self.empirical,
            if self.bound_honored {
                "bound honored"
            } else {
                "BOUND VIOLATED"
            }
        ));
        s
    }
}

/// Greedy one-to-one matching of columns `psi` to eigenvectors by largest
/// `|<psi_m, xi_i>| / ||psi_m||`; ties go to the lower index. Returns the
/// mode matched to each eigen-index.
fn match_modes(psi: &[Field<f64>], eig: &EigenSystem) -> Vec<usize> {
    let n = eig.len();
    let xis: Vec<Field<f64>> = (0..n).map(|i| eig.vector(i)).collect();
    let mut pairs = Vec::with_capacity(n * psi.len());
    for (m, p) in psi.iter().enumerate() {
        let pn = p.norm();
        for (i, x) in xis.iter().enumerate() {
            let score = if pn == 0.0 { 0.0 } else { p.dot(x).norm() / pn };
            pairs.push((score, i, m));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut mode_of = vec![usize::MAX; n];
    let mut used = vec![false; psi.len()];
    let mut left = n.min(psi.len());
    for (_, i, m) in pairs {
        if left == 0 {
            break;
        }
        if mode_of[i] == usize::MAX && !used[m] {
            mode_of[i] = m;
            used[m] = true;
            left -= 1;
        }
    }
    mode_of
}

/// Checks the smoother / corrector assumptions mode by mode, evaluates the
/// contraction bound `eta`, and compares it with a measured run.
pub fn audit(
    stencil: &Stencil9Field<f64>,
    smoother: SmootherSpec,
    hc: &Corrector<f64>,
    cfg: &AuditConfig,
) -> Result<AssumptionReport> {
    let grid = stencil.grid();
    check_dense_size(grid)?;
    hc.grid().ensure_same(&grid)?;
    if cfg.window.0 >= cfg.window.1 || cfg.window.1 > cfg.steps {
        return Err(Error::InvalidConfig(format!(
            "contraction window {:?} must lie inside {} steps",
            cfg.window, cfg.steps
        )));
    }

    let symbol = sampled_symbol(smoother, stencil, cfg.sample_stride)?;
    let mask = partition_frequencies(&symbol, cfg.partition)?;
    let eig = dense_eig(stencil)?;
    let l_norms = corrector_eigen_errors(hc, &eig)?;

    let ex = grid.ext_nx();
    let modes = sine_modes(grid);
    let mut thetas = Vec::with_capacity(modes.len());
    let mut in_h = vec![false; eig.len()];
    for &(j, k) in &modes {
        let bin = match grid.dim() {
            Dim::One => j,
            Dim::Two => k * ex + j,
        };
        let label = mask.labels()[bin];
        let exp = expansion_coefficients(&eig, (j, k), cfg.tau)?;
        if label == Label::H {
            exp.support.iter().for_each(|&i| in_h[i] = true);
        }
        thetas.push(ThetaRow {
            j,
            k,
            label,
            support: exp.support.len(),
            sum_l2: exp.support.iter().map(|&i| l_norms[i].powi(2)).sum(),
        });
    }
    let side_max = |lab: Label| {
        thetas
            .iter()
            .filter(|t| t.label == lab)
            .map(|t| t.sum_l2)
            .fold(0.0, f64::max)
    };
    let mu_h = side_max(Label::H);
    let c_bound = side_max(Label::B);
    let max_support = thetas.iter().map(|t| t.support).max().unwrap_or(0);
    let index_h: Vec<usize> = (0..eig.len()).filter(|&i| in_h[i]).collect();
    let index_b: Vec<usize> = (0..eig.len()).filter(|&i| !in_h[i]).collect();

    let (eps_v, eps_lambda) = match hc {
        Corrector::Spectral(sc) => {
            let psi = sc.columns(&modes)?;
            let mode_of = match_modes(&psi, &eig);
            let mut ev = 0.0f64;
            let mut el = 0.0f64;
            for (i, &m) in mode_of.iter().enumerate() {
                let xi = eig.vector(i);
                let (j, k) = modes[m];
                let lt = sc.mode_lambda(j, k);
                if in_h[i] {
                    let ip = psi[m].dot(&xi);
                    let ph = if ip.norm() == 0.0 { ONE } else { ip / ip.norm() };
                    ev = ev.max(psi[m].map(|v| v * ph).sub(&xi).norm().powi(2));
                    el = el.max((lt * eig.values[i] - ONE).norm());
                } else {
                    el = el.max(lt.norm());
                }
            }
            (Some(ev), Some(el))
        }
        Corrector::Split(_) => (None, None),
    };

    let eta = eta_formula(mask.mu_b, mask.eps_b, smoother.sweeps, c_bound, mu_h);

    let f = normal_field::<f64>(grid, cfg.rhs_seed, 0);
    let exact = dense_solve(stencil, &f)?;
    let (iterates, _) = hybrid_fixed_steps(stencil, &f, smoother, hc, Field::zeros(grid), cfg.steps)?;
    let errors: Vec<f64> = iterates.iter().map(|u| u.sub(&exact).norm()).collect();
    let empirical = geometric_contraction(&errors, cfg.window, 1e-12);

    Ok(AssumptionReport {
        n: grid.n(),
        dim: grid.dim(),
        sweeps: smoother.sweeps,
        mu_b: mask.mu_b,
        eps_b: mask.eps_b,
        mu_h,
        c_bound,
        thetas,
        max_support,
        index_h,
        index_b,
        l_norms,
        eps_v,
        eps_lambda,
        eta,
        empirical,
        bound_honored: empirical <= eta * (1.0 + 1e-6),
        condition: eig.condition,
        eta_reliable: eig.is_reliable(),
        eigen_residual: eig.residual,
    })
}

#[cfg(test)]
mod tests;
