//! Spectral correctors `H = F C diag(lambda) C* F^-1` acting on the
//! odd-extended grid, and the two-region split variant.
//!
//! `F^-1` is the forward (analysis) transform and `F` the inverse one.
//! `C = K_D ... K_1` is a composition of small periodic convolutions over
//! the frequency lattice.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fft::{fft2_inplace, Direction};
use crate::grid::{odd_extend, odd_extend_adjoint, restrict, restrict_adjoint, Dim, ExtendedField, Field, Grid};
use crate::pde::RegionMask;
use crate::scalar::{czero, Real, C};

/// Centred periodic convolution kernel on the frequency lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T> {
    kx: usize,
    ky: usize,
    weights: Vec<C<T>>,
}

impl<T: Real> Kernel<T> {
    pub fn new(kx: usize, ky: usize, weights: Vec<C<T>>) -> Result<Self> {
        if kx.is_multiple_of(2) || ky.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("kernel sizes must be odd, got {kx}x{ky}")));
        }
        if weights.len() != kx * ky {
            return Err(Error::ShapeMismatch(format!(
                "{} kernel weights for a {kx}x{ky} kernel",
                weights.len()
            )));
        }
        Ok(Self { kx, ky, weights })
    }

    /// Centred delta.
    pub fn identity(kx: usize, ky: usize) -> Result<Self> {
        let mut w = vec![czero(); kx * ky];
        if !w.is_empty() {
            w[(ky / 2) * kx + kx / 2] = C::new(T::one(), T::zero());
        }
        Self::new(kx, ky, w)
    }

    pub fn kx(&self) -> usize {
        self.kx
    }

    pub fn ky(&self) -> usize {
        self.ky
    }

    pub fn weights(&self) -> &[C<T>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [C<T>] {
        &mut self.weights
    }

    fn offset(&self, k: usize) -> (isize, isize) {
        let (rx, ry) = ((self.kx / 2) as isize, (self.ky / 2) as isize);
        ((k % self.kx) as isize - rx, (k / self.kx) as isize - ry)
    }

    /// `y[m] = sum_d w[d] x[m - d]` (`adjoint = false`) or
    /// `y[m] = sum_d conj(w[d]) x[m + d]` (`adjoint = true`).
    pub fn apply(&self, x: &[C<T>], ex: usize, ey: usize, adjoint: bool) -> Vec<C<T>> {
        let mut y = vec![czero(); x.len()];
        for (k, &w) in self.weights.iter().enumerate() {
            if w == czero() {
                continue;
            }
            let (dx, dy) = self.offset(k);
            let (sx, sy, w) = if adjoint { (dx, dy, w.conj()) } else { (-dx, -dy, w) };
            for my in 0..ey {
                let qy = wrap(my as isize + sy, ey);
                let row_in = &x[qy * ex..(qy + 1) * ex];
                let row_out = &mut y[my * ex..(my + 1) * ex];
                for (mx, out) in row_out.iter_mut().enumerate() {
                    *out = *out + w * row_in[wrap(mx as isize + sx, ex)];
                }
            }
        }
        y
    }

    /// Weight gradient of `y = K x` (`adjoint = false`) or `y = K^H x`.
    pub fn weight_grad(&self, gy: &[C<T>], x: &[C<T>], ex: usize, ey: usize, adjoint: bool) -> Vec<C<T>> {
        (0..self.weights.len())
            .map(|k| {
                let (dx, dy) = self.offset(k);
                let mut acc = czero();
                for my in 0..ey {
                    for mx in 0..ex {
                        let m = my * ex + mx;
                        if adjoint {
                            let q = wrap(my as isize + dy, ey) * ex + wrap(mx as isize + dx, ex);
                            acc = acc + gy[m].conj() * x[q];
                        } else {
                            let q = wrap(my as isize - dy, ey) * ex + wrap(mx as isize - dx, ex);
                            acc = acc + gy[m] * x[q].conj();
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Intermediate lattice fields of one corrector application.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorActivation<T> {
    /// After `F^-1`.
    pub spectrum: Vec<C<T>>,
    /// Input of `K_j^H`, indexed by kernel.
    pub adjoint_inputs: Vec<Vec<C<T>>>,
    /// After `C*`.
    pub transformed: Vec<C<T>>,
    /// After the diagonal scaling.
    pub scaled: Vec<C<T>>,
    /// Input of `K_j`, indexed by kernel.
    pub conv_inputs: Vec<Vec<C<T>>>,
    /// After `C`.
    pub corrected: Vec<C<T>>,
}

/// Gradients produced by back-propagating through one application.
#[derive(Clone, Debug)]
pub struct CorrectorGrad<T> {
    pub input: Field<T>,
    pub lambda: Vec<C<T>>,
    pub kernels: Vec<Vec<C<T>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Diagonal,
    Conv,
    RegionSplit,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Diagonal => "diagonal",
            Variant::Conv => "conv",
            Variant::RegionSplit => "region_split",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Variant::Diagonal),
            "conv" => Ok(Variant::Conv),
            "region_split" => Ok(Variant::RegionSplit),
            other => Err(Error::InvalidConfig(format!("unknown corrector variant '{other}'"))),
        }
    }
}

/// `F C diag(lambda) C* F^-1` on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCorrector<T> {
    grid: Grid,
    lambda: Vec<C<T>>,
    kernels: Vec<Kernel<T>>,
}

impl<T: Real> SpectralCorrector<T> {
    pub fn new(grid: Grid, lambda: Vec<C<T>>, kernels: Vec<Kernel<T>>) -> Result<Self> {
        grid.check_fft()?;
        if lambda.len() != grid.ext_len() {
            return Err(Error::ShapeMismatch(format!(
                "{} diagonal entries for a lattice of {}",
                lambda.len(),
                grid.ext_len()
            )));
        }
        if grid.dim() == Dim::One && kernels.iter().any(|k| k.ky != 1) {
            return Err(Error::InvalidConfig("1D correctors need kernels of height 1".into()));
        }
        Ok(Self { grid, lambda, kernels })
    }

    pub fn diagonal(grid: Grid, lambda: Vec<C<T>>) -> Result<Self> {
        Self::new(grid, lambda, Vec::new())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn lambda(&self) -> &[C<T>] {
        &self.lambda
    }

    pub fn lambda_mut(&mut self) -> &mut [C<T>] {
        &mut self.lambda
    }

    pub fn kernels(&self) -> &[Kernel<T>] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [Kernel<T>] {
        &mut self.kernels
    }

    pub fn variant(&self) -> Variant {
        if self.kernels.is_empty() {
            Variant::Diagonal
        } else {
            Variant::Conv
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.grid.ext_nx(), self.grid.ext_ny())
    }

    fn transform(&self, data: &mut [C<T>], dir: Direction) {
        let (ex, ey) = self.dims();
        fft2_inplace(data, ex, ey, dir).expect("lattice size checked at construction");
    }

    /// Lattice-level map `C diag(lambda) C*`, optionally recording inputs.
    fn spectral_core(&self, spectrum: Vec<C<T>>, record: bool) -> (Vec<C<T>>, Option<CorrectorActivation<T>>) {
        let (ex, ey) = self.dims();
        let d = self.kernels.len();
        let mut adjoint_inputs = vec![Vec::new(); d];
        let mut conv_inputs = vec![Vec::new(); d];
        let mut z = spectrum.clone();
        for j in (0..d).rev() {
            let next = self.kernels[j].apply(&z, ex, ey, true);
            if record {
                adjoint_inputs[j] = std::mem::replace(&mut z, next);
            } else {
                z = next;
            }
        }
        let transformed = if record { z.clone() } else { Vec::new() };
        for (v, &l) in z.iter_mut().zip(&self.lambda) {
            *v = *v * l;
        }
        let scaled = if record { z.clone() } else { Vec::new() };
        for j in 0..d {
            let next = self.kernels[j].apply(&z, ex, ey, false);
            if record {
                conv_inputs[j] = std::mem::replace(&mut z, next);
            } else {
                z = next;
            }
        }
        let act = record.then(|| CorrectorActivation {
            spectrum,
            adjoint_inputs,
            transformed,
            scaled,
            conv_inputs,
            corrected: z.clone(),
        });
        (z, act)
    }

    fn apply_inner(&self, r: &Field<T>, record: bool) -> Result<(Field<T>, Option<CorrectorActivation<T>>)> {
        self.grid.ensure_same(&r.grid())?;
        let mut spec = odd_extend(r).into_values();
        self.transform(&mut spec, Direction::Forward);
        let (mut z, act) = self.spectral_core(spec, record);
        self.transform(&mut z, Direction::Inverse);
        let out = restrict(&ExtendedField::from_values(self.grid, z)?);
        Ok((out, act))
    }

    pub fn apply(&self, r: &Field<T>) -> Result<Field<T>> {
        Ok(self.apply_inner(r, false)?.0)
    }

    pub fn apply_recorded(&self, r: &Field<T>) -> Result<(Field<T>, CorrectorActivation<T>)> {
        let (out, act) = self.apply_inner(r, true)?;
        Ok((out, act.expect("recorded")))
    }

    /// `H^H g = E^H F C conj(lambda) C* F^-1 R^H g`.
    pub fn adjoint_apply(&self, g: &Field<T>) -> Result<Field<T>> {
        self.grid.ensure_same(&g.grid())?;
        let mut spec = restrict_adjoint(g).into_values();
        self.transform(&mut spec, Direction::Forward);
        let (ex, ey) = self.dims();
        let mut z = spec;
        for j in (0..self.kernels.len()).rev() {
            z = self.kernels[j].apply(&z, ex, ey, true);
        }
        for (v, l) in z.iter_mut().zip(&self.lambda) {
            *v = *v * l.conj();
        }
        for k in &self.kernels {
            z = k.apply(&z, ex, ey, false);
        }
        self.transform(&mut z, Direction::Inverse);
        Ok(odd_extend_adjoint(&ExtendedField::from_values(self.grid, z)?))
    }

    /// Back-propagates the output gradient `g_out` through a recorded
    /// application (`g = dL/dRe + i dL/dIm` convention).
    pub fn backward(&self, act: &CorrectorActivation<T>, g_out: &Field<T>) -> Result<CorrectorGrad<T>> {
        self.grid.ensure_same(&g_out.grid())?;
        let (ex, ey) = self.dims();
        let d = self.kernels.len();
        let mut kernel_grads: Vec<Vec<C<T>>> = self.kernels.iter().map(|k| vec![czero(); k.weights.len()]).collect();
        let mut a = restrict_adjoint(g_out).into_values();
        self.transform(&mut a, Direction::Forward);
        for j in (0..d).rev() {
            let gw = self.kernels[j].weight_grad(&a, &act.conv_inputs[j], ex, ey, false);
            add_into(&mut kernel_grads[j], &gw);
            a = self.kernels[j].apply(&a, ex, ey, true);
        }
        let lambda_grad: Vec<C<T>> = a.iter().zip(&act.transformed).map(|(g, z)| *g * z.conj()).collect();
        for (v, l) in a.iter_mut().zip(&self.lambda) {
            *v = *v * l.conj();
        }
        for j in 0..d {
            let gw = self.kernels[j].weight_grad(&a, &act.adjoint_inputs[j], ex, ey, true);
            add_into(&mut kernel_grads[j], &gw);
            a = self.kernels[j].apply(&a, ex, ey, false);
        }
        self.transform(&mut a, Direction::Inverse);
        let input = odd_extend_adjoint(&ExtendedField::from_values(self.grid, a)?);
        Ok(CorrectorGrad {
            input,
            lambda: lambda_grad,
            kernels: kernel_grads,
        })
    }

    /// Learned eigenvector candidates for sine modes `(j, k)`, `1 <= j, k <= n`
    /// (`k` ignored in 1D): `psi = (-i)^d R F C s`, where `s` is the signed
    /// sum of unit impulses over the mode's mirror bins. With `C = I` this is
    /// the unit-norm discrete sine mode.
    pub fn columns(&self, modes: &[(usize, usize)]) -> Result<Vec<Field<T>>> {
        let (ex, ey) = self.dims();
        let n = self.grid.n();
        modes
            .iter()
            .map(|&(j, k)| {
                let k_eff = if self.grid.dim() == Dim::One { 1 } else { k };
                if j == 0 || j > n || k_eff == 0 || k_eff > n {
                    return Err(Error::IndexOutOfRange(j, k));
                }
                let mut z = vec![czero(); ex * ey];
                for (bx, sx) in [(j, 1.0), (ex - j, -1.0)] {
                    if self.grid.dim() == Dim::One {
                        z[bx] = C::new(T::lit(sx), T::zero());
                        continue;
                    }
                    for (by, sy) in [(k, 1.0), (ey - k, -1.0)] {
                        z[by * ex + bx] = C::new(T::lit(sx * sy), T::zero());
                    }
                }
                for kern in &self.kernels {
                    z = kern.apply(&z, ex, ey, false);
                }
                self.transform(&mut z, Direction::Inverse);
                let phase = match self.grid.dim() {
                    Dim::One => C::new(T::zero(), -T::one()),
                    Dim::Two => C::new(-T::one(), T::zero()),
                };
                let mut f = restrict(&ExtendedField::from_values(self.grid, z)?);
                f.scale(phase);
                Ok(f)
            })
            .collect()
    }

    /// Mean diagonal entry over the mirror bins of sine mode `(j, k)`.
    pub fn mode_lambda(&self, j: usize, k: usize) -> C<T> {
        let (ex, ey) = self.dims();
        let bins: Vec<usize> = match self.grid.dim() {
            Dim::One => vec![j, ex - j],
            Dim::Two => vec![
                k * ex + j,
                k * ex + (ex - j),
                (ey - k) * ex + j,
                (ey - k) * ex + (ex - j),
            ],
        };
        let sum = bins.iter().fold(czero(), |acc, &b| acc + self.lambda[b]);
        sum / T::from_usize_lossy(bins.len())
    }
}

fn add_into<T: Real>(acc: &mut [C<T>], v: &[C<T>]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a = *a + *b;
    }
}

/// Two correctors recombined through a node labelling.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSplit<T> {
    pub parts: [SpectralCorrector<T>; 2],
    pub mask: RegionMask,
    /// Also restrict each part's input to its own region.
    pub mask_inputs: bool,
}

/// Any corrector variant.
#[derive(Clone, Debug, PartialEq)]
pub enum Corrector<T> {
    Spectral(SpectralCorrector<T>),
    Split(RegionSplit<T>),
}

/// Recorded activations for every sub-corrector.
#[derive(Clone, Debug)]
pub struct Recording<T> {
    pub parts: Vec<CorrectorActivation<T>>,
}

fn masked<T: Real>(f: &Field<T>, mask: &RegionMask, label: u8) -> Field<T> {
    let mut out = f.clone();
    for (v, &l) in out.values_mut().iter_mut().zip(mask.labels()) {
        if l != label {
            *v = czero();
        }
    }
    out
}

impl<T: Real> Corrector<T> {
    pub fn grid(&self) -> Grid {
        match self {
            Corrector::Spectral(s) => s.grid(),
            Corrector::Split(s) => s.parts[0].grid(),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Corrector::Spectral(s) => s.variant(),
            Corrector::Split(_) => Variant::RegionSplit,
        }
    }

    /// Zero corrector (pure smoothing iteration).
    pub fn zero(grid: Grid) -> Result<Self> {
        Ok(Corrector::Spectral(SpectralCorrector::diagonal(
            grid,
            vec![czero(); grid.ext_len()],
        )?))
    }

    pub fn apply(&self, r: &Field<T>) -> Result<Field<T>> {
        match self {
            Corrector::Spectral(s) => s.apply(r),
            Corrector::Split(sp) => {
                let mut out = Field::zeros(r.grid());
                for (p, label) in sp.parts.iter().zip([1u8, 2]) {
                    let input = if sp.mask_inputs {
                        masked(r, &sp.mask, label)
                    } else {
                        r.clone()
                    };
                    let y = masked(&p.apply(&input)?, &sp.mask, label);
                    out = out.add(&y);
                }
                Ok(out)
            }
        }
    }

    pub fn apply_recorded(&self, r: &Field<T>) -> Result<(Field<T>, Recording<T>)> {
        match self {
            Corrector::Spectral(s) => {
                let (y, act) = s.apply_recorded(r)?;
                Ok((y, Recording { parts: vec![act] }))
            }
            Corrector::Split(sp) => {
                let mut out = Field::zeros(r.grid());
                let mut parts = Vec::with_capacity(2);
                for (p, label) in sp.parts.iter().zip([1u8, 2]) {
                    let input = if sp.mask_inputs {
                        masked(r, &sp.mask, label)
                    } else {
                        r.clone()
                    };
                    let (y, act) = p.apply_recorded(&input)?;
                    out = out.add(&masked(&y, &sp.mask, label));
                    parts.push(act);
                }
                Ok((out, Recording { parts }))
            }
        }
    }

    pub fn adjoint_apply(&self, g: &Field<T>) -> Result<Field<T>> {
        match self {
            Corrector::Spectral(s) => s.adjoint_apply(g),
            Corrector::Split(sp) => {
                let mut out = Field::zeros(g.grid());
                for (p, label) in sp.parts.iter().zip([1u8, 2]) {
                    let y = p.adjoint_apply(&masked(g, &sp.mask, label))?;
                    let y = if sp.mask_inputs { masked(&y, &sp.mask, label) } else { y };
                    out = out.add(&y);
                }
                Ok(out)
            }
        }
    }

    /// Per-part gradients; `input` fields are summed into one.
    pub fn backward(&self, rec: &Recording<T>, g_out: &Field<T>) -> Result<(Field<T>, Vec<CorrectorGrad<T>>)> {
        match self {
            Corrector::Spectral(s) => {
                let g = s.backward(&rec.parts[0], g_out)?;
                Ok((g.input.clone(), vec![g]))
            }
            Corrector::Split(sp) => {
                let mut total = Field::zeros(g_out.grid());
                let mut grads = Vec::with_capacity(2);
                for ((p, act), label) in sp.parts.iter().zip(&rec.parts).zip([1u8, 2]) {
                    let g = p.backward(act, &masked(g_out, &sp.mask, label))?;
                    let gi = if sp.mask_inputs {
                        masked(&g.input, &sp.mask, label)
                    } else {
                        g.input.clone()
                    };
                    total = total.add(&gi);
                    grads.push(g);
                }
                Ok((total, grads))
            }
        }
    }

    /// The spectral correctors making up this corrector.
    pub fn parts(&self) -> Vec<&SpectralCorrector<T>> {
        match self {
            Corrector::Spectral(s) => vec![s],
            Corrector::Split(sp) => sp.parts.iter().collect(),
        }
    }
}

/// Free-function form of [`Corrector::apply`].
pub fn apply_corrector<T: Real>(hc: &Corrector<T>, r: &Field<T>) -> Result<Field<T>> {
    hc.apply(r)
}

/// Free-function form of [`Corrector::adjoint_apply`].
pub fn adjoint_apply<T: Real>(hc: &Corrector<T>, g: &Field<T>) -> Result<Field<T>> {
    hc.adjoint_apply(g)
}

/// Free-function form of [`SpectralCorrector::columns`].
pub fn corrector_columns<T: Real>(hc: &SpectralCorrector<T>, modes: &[(usize, usize)]) -> Result<Vec<Field<T>>> {
    hc.columns(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::dst_solve_poisson_1d;
    use crate::lfa::stencil_symbol;
    use crate::pde::poisson_1d;
    use crate::rng::{normal_field, standard_normal, stream_rng};

    fn cfield(g: Grid, seed: u64) -> Field<f64> {
        let re = normal_field::<f64>(g, seed, 0);
        let im = normal_field::<f64>(g, seed, 1);
        re.add(&im.map(|v| v * C::new(0.0, 1.0)))
    }

    fn cvec(len: usize, seed: u64) -> Vec<C<f64>> {
        let mut rng = stream_rng(seed, 9);
        (0..len)
            .map(|_| C::new(standard_normal(&mut rng), standard_normal(&mut rng)))
            .collect()
    }

    fn random_corrector(g: Grid, depth: usize, seed: u64) -> SpectralCorrector<f64> {
        let ky = if g.dim() == Dim::One { 1 } else { 3 };
        let kernels = (0..depth)
            .map(|d| Kernel::new(3, ky, cvec(3 * ky, seed + 10 + d as u64)).unwrap())
            .collect();
        SpectralCorrector::new(g, cvec(g.ext_len(), seed), kernels).unwrap()
    }

    #[test]
    fn unit_diagonal_is_identity() {
        let g = Grid::square(7).unwrap();
        let hc = SpectralCorrector::diagonal(g, vec![C::new(1.0, 0.0); g.ext_len()]).unwrap();
        let r = cfield(g, 1);
        assert!(hc.apply(&r).unwrap().max_abs_diff(&r) < 1e-14);
        assert_eq!(hc.apply(&Field::zeros(g)).unwrap(), Field::zeros(g));
    }

    #[test]
    fn reciprocal_symbol_solves_1d_poisson() {
        let g = Grid::line(31).unwrap();
        let sym = stencil_symbol(&poisson_1d::<f64>(g)).unwrap();
        let lambda = sym
            .values()
            .iter()
            .map(|v| if v.norm() > 1e-12 { v.inv() } else { C::new(0.0, 0.0) })
            .collect();
        let hc = SpectralCorrector::diagonal(g, lambda).unwrap();
        let f = normal_field::<f64>(g, 3, 0);
        let u = hc.apply(&f).unwrap();
        let want = dst_solve_poisson_1d(&f).unwrap();
        assert!(u.max_abs_diff(&want) < 1e-12 * want.norm());
        let res = poisson_1d::<f64>(g).residual(&u, &f).unwrap();
        assert!(res.norm() < 1e-10 * f.norm());
    }

    #[test]
    fn adjoint_identity_all_variants() {
        for (g, depth) in [
            (Grid::square(15).unwrap(), 0),
            (Grid::square(15).unwrap(), 2),
            (Grid::line(15).unwrap(), 1),
        ] {
            let hc = random_corrector(g, depth, 4);
            let r = cfield(g, 5);
            let gg = cfield(g, 6);
            let lhs = gg.dot(&hc.apply(&r).unwrap());
            let rhs = hc.adjoint_apply(&gg).unwrap().dot(&r);
            assert!((lhs - rhs).norm() < 1e-11 * lhs.norm().max(1.0));
            assert_eq!(hc.adjoint_apply(&Field::zeros(g)).unwrap(), Field::zeros(g));
        }
    }

    #[test]
    fn symmetric_real_diagonal_is_self_adjoint() {
        let g = Grid::square(7).unwrap();
        let lambda = stencil_symbol(&crate::pde::laplacian_5pt::<f64>(g))
            .unwrap()
            .values()
            .to_vec();
        let hc = SpectralCorrector::diagonal(g, lambda).unwrap();
        let r = cfield(g, 3);
        assert!(hc.adjoint_apply(&r).unwrap().max_abs_diff(&hc.apply(&r).unwrap()) < 1e-13);
    }

    #[test]
    fn identity_kernel_reproduces_diagonal_variant() {
        let g = Grid::square(7).unwrap();
        let lambda = cvec(g.ext_len(), 7);
        let a = SpectralCorrector::diagonal(g, lambda.clone()).unwrap();
        let b = SpectralCorrector::new(g, lambda, vec![Kernel::identity(5, 5).unwrap()]).unwrap();
        let r = cfield(g, 8);
        assert_eq!(a.apply(&r).unwrap(), b.apply(&r).unwrap());
    }

    #[test]
    fn linear_and_scale_equivariant() {
        let g = Grid::square(7).unwrap();
        let hc = random_corrector(g, 1, 11);
        let (r, s) = (cfield(g, 12), cfield(g, 13));
        let (a, b) = (C::new(0.3, -1.2), C::new(2.0, 0.5));
        let mut comb = r.map(|v| v * a);
        comb.axpy(b, &s);
        let lhs = hc.apply(&comb).unwrap();
        let mut rhs = hc.apply(&r).unwrap().map(|v| v * a);
        rhs.axpy(b, &hc.apply(&s).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-12 * rhs.norm());
    }

    #[test]
    fn columns_without_kernels_are_sine_modes() {
        let g = Grid::square(7).unwrap();
        let hc = SpectralCorrector::diagonal(g, vec![C::new(1.0, 0.0); g.ext_len()]).unwrap();
        let cols = hc.columns(&[(1, 1), (3, 6)]).unwrap();
        let h = g.h::<f64>();
        let pi = std::f64::consts::PI;
        for (col, (j, k)) in cols.iter().zip([(1.0, 1.0), (3.0, 6.0)]) {
            let want = Field::from_fn(g, |x: f64, y: f64| {
                C::new(2.0 * h * (j * pi * x).sin() * (k * pi * y).sin(), 0.0)
            });
            assert!(col.max_abs_diff(&want) < 1e-14);
            assert!((col.norm() - 1.0).abs() < 1e-13);
        }
        assert!(matches!(hc.columns(&[(0, 1)]), Err(Error::IndexOutOfRange(0, 1))));
        assert!(matches!(hc.columns(&[(1, 8)]), Err(Error::IndexOutOfRange(1, 8))));
    }

    #[test]
    fn scaled_delta_kernel_scales_columns() {
        let g = Grid::line(7).unwrap();
        let mut k = Kernel::identity(5, 1).unwrap();
        k.weights_mut()[2] = C::new(2.0, 0.0);
        let hc = SpectralCorrector::new(g, vec![C::new(1.0, 0.0); g.ext_len()], vec![k]).unwrap();
        let plain = SpectralCorrector::<f64>::diagonal(g, vec![C::new(1.0, 0.0); g.ext_len()]).unwrap();
        let a = hc.columns(&[(2, 0)]).unwrap();
        let b = plain.columns(&[(2, 0)]).unwrap();
        assert!(a[0].max_abs_diff(&b[0].map(|v| v * 2.0)) < 1e-14);
    }

    #[test]
    fn backward_matches_inner_products() {
        // For a linear map, <g, H r> derivative along lambda direction equals
        // Re <g_lambda, dlambda> in the real-gradient convention.
        let g = Grid::square(7).unwrap();
        let hc = random_corrector(g, 2, 21);
        let r = cfield(g, 22);
        let gout = cfield(g, 23);
        let (_, act) = hc.apply_recorded(&r).unwrap();
        let grad = hc.backward(&act, &gout).unwrap();
        // loss L = Re <gout, H r>; dL along input direction dr = Re<gout, H dr> = Re<H^H gout, dr>
        let adj = hc.adjoint_apply(&gout).unwrap();
        assert!(grad.input.max_abs_diff(&adj) < 1e-12);
        let loss = |h: &SpectralCorrector<f64>| gout.dot(&h.apply(&r).unwrap()).re;
        let eps = 1e-6;
        let dl = cvec(g.ext_len(), 24);
        let mut hp = hc.clone();
        let mut hm = hc.clone();
        for ((p, m), d) in hp.lambda_mut().iter_mut().zip(hm.lambda_mut().iter_mut()).zip(&dl) {
            *p += d * eps;
            *m -= d * eps;
        }
        let fd = (loss(&hp) - loss(&hm)) / (2.0 * eps);
        let an: f64 = grad
            .lambda
            .iter()
            .zip(&dl)
            .map(|(g, d)| g.re * d.re + g.im * d.im)
            .sum();
        assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
        for kidx in 0..2 {
            let dk = cvec(9, 30 + kidx as u64);
            let mut hp = hc.clone();
            let mut hm = hc.clone();
            for t in 0..9 {
                hp.kernels_mut()[kidx].weights_mut()[t] += dk[t] * eps;
                hm.kernels_mut()[kidx].weights_mut()[t] -= dk[t] * eps;
            }
            let fd = (loss(&hp) - loss(&hm)) / (2.0 * eps);
            let an: f64 = grad.kernels[kidx]
                .iter()
                .zip(&dk)
                .map(|(g, d)| g.re * d.re + g.im * d.im)
                .sum();
            assert!(
                (fd - an).abs() < 1e-6 * an.abs().max(1.0),
                "kernel {kidx}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn split_adjoint_identity() {
        let g = Grid::square(7).unwrap();
        let labels = (0..g.len()).map(|i| if i % 3 == 0 { 1 } else { 2 }).collect();
        let mask = RegionMask::new(g, labels).unwrap();
        for mask_inputs in [false, true] {
            let hc = Corrector::Split(RegionSplit {
                parts: [random_corrector(g, 1, 40), random_corrector(g, 0, 41)],
                mask: mask.clone(),
                mask_inputs,
            });
            let (r, gg) = (cfield(g, 42), cfield(g, 43));
            let lhs = gg.dot(&hc.apply(&r).unwrap());
            let rhs = hc.adjoint_apply(&gg).unwrap().dot(&r);
            assert!((lhs - rhs).norm() < 1e-11 * lhs.norm());
            let (_, rec) = hc.apply_recorded(&r).unwrap();
            let (gin, _) = hc.backward(&rec, &gg).unwrap();
            assert!(gin.max_abs_diff(&hc.adjoint_apply(&gg).unwrap()) < 1e-12);
            assert_eq!(hc.variant(), Variant::RegionSplit);
        }
    }

    #[test]
    fn mode_lambda_averages_mirror_bins() {
        let g = Grid::line(7).unwrap();
        let mut lambda = vec![C::new(0.0, 0.0); 16];
        lambda[3] = C::new(2.0, 0.0);
        lambda[13] = C::new(4.0, 0.0);
        let hc = SpectralCorrector::diagonal(g, lambda).unwrap();
        assert_eq!(hc.mode_lambda(3, 0), C::new(3.0, 0.0));
    }
}
