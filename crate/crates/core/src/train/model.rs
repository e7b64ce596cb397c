//! Mapping from trainable parameters to correctors.
//!
//! Diagonal entries are parameterized as `lambda = rho * g`, where `rho` is
//! the reciprocal symbol of the (region-)averaged stencil of the item and
//! `g` is a learned complex gain (direct mode: free per bin; meta mode:
//! emitted by Meta-λ). Kernels are free (direct) or identity plus the
//! Meta-T output (meta).

use std::str::FromStr;

use crate::corrector::{Corrector, CorrectorGrad, Kernel, RegionSplit, SpectralCorrector, Variant};
use crate::error::{Error, Result};
use crate::fft::bin_frequency;
use crate::grid::{Dim, Grid};
use crate::lfa::{coeffs_symbol, smoother_symbol_of_coeffs};
use crate::pde::{Coefficient, Instance, RegionMask, Stencil9Field};
use crate::relax::SmootherSpec;
use crate::rng::{standard_normal, stream_rng};
use crate::scalar::{czero, Real, C};

use super::meta::{
    meta_lambda_backward, meta_lambda_forward, meta_t_backward, meta_t_forward, MetaLambdaCache, MetaLambdaShape,
    MetaTCache, MetaTShape,
};
use super::params::ParamVector;

/// Averages a lattice over its mirror images `m -> -m` per axis.
///
/// Odd extensions are invariant under these reflections, so an even
/// diagonal keeps `H` inside the odd subspace. Without the tie, the odd
/// part of the gains leaks into other sine modes with weight `rho`, which
/// is largest on the smoothest modes, and the optimizer stalls there. The
/// map is an orthogonal projection and therefore its own adjoint.
fn mirror_average<T: Real>(v: &[C<T>], ex: usize, ey: usize) -> Vec<C<T>> {
    let quarter = T::lit(0.25);
    let mut out = Vec::with_capacity(v.len());
    for my in 0..ey {
        let ry = (ey - my) % ey;
        for mx in 0..ex {
            let rx = (ex - mx) % ex;
            let s = v[my * ex + mx] + v[my * ex + rx] + v[ry * ex + mx] + v[ry * ex + rx];
            out.push(s * quarter);
        }
    }
    out
}

/// Number of meta-map input planes.
pub const META_CHANNELS: usize = 2;
/// Relative cut-off below which the reference symbol is treated as zero.
pub const RHO_CUTOFF: f64 = 1e-12;
/// Standard deviation of the initial kernel perturbation.
pub const KERNEL_INIT_NOISE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Direct,
    Meta,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Direct => "direct",
            Mode::Meta => "meta",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Mode::Direct),
            "meta" => Ok(Mode::Meta),
            other => Err(Error::InvalidConfig(format!("unknown training mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub mode: Mode,
    /// Side of the transition kernels.
    pub kernel_size: usize,
    /// Number of transition kernels (ignored by the diagonal variant).
    pub depth: usize,
    /// Hidden channels of the meta maps.
    pub hidden: usize,
    pub smoother: SmootherSpec,
    /// Region-split only: feed each part its own region of the residual.
    pub mask_inputs: bool,
}

impl ModelSpec {
    pub fn new(variant: Variant, mode: Mode, smoother: SmootherSpec) -> Self {
        Self {
            variant,
            mode,
            kernel_size: 5,
            depth: 1,
            hidden: 8,
            smoother,
            mask_inputs: true,
        }
    }

    pub fn effective_depth(&self) -> usize {
        match self.variant {
            Variant::Diagonal => 0,
            _ => self.depth,
        }
    }

    pub fn parts(&self) -> usize {
        match self.variant {
            Variant::RegionSplit => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.variant == Variant::Conv && self.depth == 0 {
            return Err(Error::InvalidConfig(
                "the conv variant needs at least one kernel".into(),
            ));
        }
        if self.mode == Mode::Meta && self.hidden == 0 {
            return Err(Error::InvalidConfig(
                "meta maps need at least one hidden channel".into(),
            ));
        }
        Ok(())
    }
}

/// Per-part data derived once from an instance.
#[derive(Clone, Debug)]
pub struct PartData<T> {
    pub rho: Vec<C<T>>,
    /// Meta-map input planes (empty in direct mode).
    pub features: Vec<Vec<T>>,
}

/// An instance ready for corrector construction.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub stencil: Stencil9Field<T>,
    pub mask: Option<RegionMask>,
    pub parts: Vec<PartData<T>>,
}

impl<T: Real> Prepared<T> {
    pub fn grid(&self) -> Grid {
        self.stencil.grid()
    }
}

#[derive(Clone, Debug)]
struct PartCache<T> {
    lambda: Option<MetaLambdaCache<T>>,
    t: Option<MetaTCache<T>>,
}

/// A constructed corrector with the caches needed for back-propagation.
#[derive(Clone, Debug)]
pub struct Built<T> {
    pub corrector: Corrector<T>,
    caches: Vec<PartCache<T>>,
}

/// Parameter layout and corrector construction for one training grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    grid: Grid,
}

/// Reciprocal of a symbol with small entries zeroed.
pub fn reciprocal_symbol<T: Real>(sym: &[C<T>]) -> Vec<C<T>> {
    let max = sym.iter().fold(T::zero(), |m, v| m.max(v.norm()));
    let cut = max * T::lit(RHO_CUTOFF);
    sym.iter()
        .map(|v| {
            if v.norm() > cut && v.norm() > T::zero() {
                v.inv()
            } else {
                czero()
            }
        })
        .collect()
}

fn interleave<T: Real>(v: &[C<T>]) -> Vec<T> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn deinterleave<T: Real>(v: &[T]) -> Vec<C<T>> {
    v.chunks_exact(2).map(|p| C::new(p[0], p[1])).collect()
}

impl Model {
    pub fn new(spec: ModelSpec, grid: Grid) -> Result<Self> {
        spec.validate()?;
        grid.check_fft()?;
        Ok(Self { spec, grid })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn kernel_dims(&self) -> (usize, usize) {
        let k = self.spec.kernel_size;
        match self.grid.dim() {
            Dim::One => (k, 1),
            Dim::Two => (k, k),
        }
    }

    fn meta_dims(&self) -> (usize, usize) {
        match self.grid.dim() {
            Dim::One => (3, 1),
            Dim::Two => (3, 3),
        }
    }

    fn lambda_shape(&self) -> MetaLambdaShape {
        let (kx, ky) = self.meta_dims();
        MetaLambdaShape::new(META_CHANNELS, self.spec.hidden, kx, ky)
    }

    fn t_shape(&self) -> MetaTShape {
        let (kx, ky) = self.meta_dims();
        let (tx, ty) = self.kernel_dims();
        MetaTShape::new(
            META_CHANNELS,
            self.spec.hidden,
            kx,
            ky,
            2 * tx * ty * self.spec.effective_depth(),
        )
    }

    /// Fresh parameters: zero gain, identity kernels with small noise, and
    /// He-scaled first meta layers with near-zero output layers.
    pub fn init_params<T: Real>(&self, seed: u64) -> ParamVector<T> {
        let mut rng = stream_rng(seed, 0x1417);
        let mut normal =
            |s: f64, n: usize| -> Vec<T> { (0..n).map(|_| T::lit(s) * standard_normal::<T>(&mut rng)).collect() };
        let mut pv = ParamVector::new();
        let (kx, ky) = self.kernel_dims();
        let depth = self.spec.effective_depth();
        for p in 0..self.spec.parts() {
            match self.spec.mode {
                Mode::Direct => {
                    pv.push(format!("h{p}.lambda"), vec![T::zero(); 2 * self.grid.ext_len()])
                        .expect("unique");
                    for j in 0..depth {
                        let mut w = normal(KERNEL_INIT_NOISE, 2 * kx * ky);
                        let c = (ky / 2) * kx + kx / 2;
                        w[2 * c] = w[2 * c] + T::one();
                        pv.push(format!("h{p}.kernel{j}"), w).expect("unique");
                    }
                }
                Mode::Meta => {
                    let ls = self.lambda_shape();
                    let [l1, lb1, l2, lb2] = ls.lens();
                    let he = (2.0 / (META_CHANNELS * ls.first.kx * ls.first.ky) as f64).sqrt();
                    pv.push(format!("h{p}.meta_lambda.w1"), normal(he, l1)).expect("unique");
                    pv.push(format!("h{p}.meta_lambda.b1"), vec![T::zero(); lb1])
                        .expect("unique");
                    pv.push(format!("h{p}.meta_lambda.w2"), normal(KERNEL_INIT_NOISE, l2))
                        .expect("unique");
                    pv.push(format!("h{p}.meta_lambda.b2"), vec![T::zero(); lb2])
                        .expect("unique");
                    if depth > 0 {
                        let ts = self.t_shape();
                        let [t1, tb1, ta, tba] = ts.lens();
                        pv.push(format!("h{p}.meta_t.w1"), normal(he, t1)).expect("unique");
                        pv.push(format!("h{p}.meta_t.b1"), vec![T::zero(); tb1])
                            .expect("unique");
                        pv.push(format!("h{p}.meta_t.wa"), normal(KERNEL_INIT_NOISE, ta))
                            .expect("unique");
                        pv.push(format!("h{p}.meta_t.ba"), vec![T::zero(); tba])
                            .expect("unique");
                    }
                }
            }
        }
        pv
    }

    fn check_grid(&self, grid: Grid) -> Result<()> {
        match self.spec.mode {
            Mode::Direct => self.grid.ensure_same(&grid),
            Mode::Meta if grid.dim() != self.grid.dim() => Err(Error::GridMismatch {
                expected: self.grid.describe(),
                found: grid.describe(),
            }),
            Mode::Meta => grid.check_fft(),
        }
    }

    /// Reference symbols and meta inputs for one instance.
    pub fn prepare<T: Real>(&self, inst: &Instance<T>) -> Result<Prepared<T>> {
        let grid = inst.grid();
        self.check_grid(grid)?;
        let split = self.spec.variant == Variant::RegionSplit;
        if split && inst.mask.is_none() {
            return Err(Error::InvalidConfig(
                "the region-split corrector needs a region mask".into(),
            ));
        }
        let parts = (0..self.spec.parts())
            .map(|p| {
                let region = if split {
                    inst.mask.as_ref().map(|m| (m, p as u8 + 1))
                } else {
                    None
                };
                let coeffs = inst.stencil.average(region);
                let sym = coeffs_symbol(&coeffs, grid);
                let rho = reciprocal_symbol(sym.values());
                let features = match self.spec.mode {
                    Mode::Direct => Vec::new(),
                    Mode::Meta => {
                        let smooth = smoother_symbol_of_coeffs(self.spec.smoother, &coeffs, grid)?;
                        vec![coefficient_plane(inst, &sym.modulus()), smooth.modulus()]
                    }
                };
                Ok(PartData { rho, features })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            stencil: inst.stencil.clone(),
            mask: inst.mask.clone(),
            parts,
        })
    }

    /// Builds the corrector for a prepared instance.
    pub fn build<T: Real>(&self, params: &ParamVector<T>, prep: &Prepared<T>) -> Result<Built<T>> {
        let grid = prep.grid();
        self.check_grid(grid)?;
        let (ex, ey) = (grid.ext_nx(), grid.ext_ny());
        let (kx, ky) = self.kernel_dims();
        let depth = self.spec.effective_depth();
        let mut parts = Vec::with_capacity(self.spec.parts());
        let mut caches = Vec::with_capacity(self.spec.parts());
        for (p, data) in prep.parts.iter().enumerate() {
            let (gain, lcache) = match self.spec.mode {
                Mode::Direct => (deinterleave(params.get(&format!("h{p}.lambda"))?), None),
                Mode::Meta => {
                    let pl = self.meta_params(params, p, "meta_lambda", ["w1", "b1", "w2", "b2"])?;
                    let (out, cache) = meta_lambda_forward(self.lambda_shape(), pl, &data.features, ex, ey);
                    let gain = out[0].iter().zip(&out[1]).map(|(&a, &b)| C::new(a, b)).collect();
                    (gain, Some(cache))
                }
            };
            let gain = mirror_average(&gain, ex, ey);
            let lambda: Vec<C<T>> = data.rho.iter().zip(&gain).map(|(r, g)| r * g).collect();
            let (kernels, tcache) = match (self.spec.mode, depth) {
                (_, 0) => (Vec::new(), None),
                (Mode::Direct, _) => {
                    let ks = (0..depth)
                        .map(|j| Kernel::new(kx, ky, deinterleave(params.get(&format!("h{p}.kernel{j}"))?)))
                        .collect::<Result<Vec<_>>>()?;
                    (ks, None)
                }
                (Mode::Meta, _) => {
                    let pt = self.meta_params(params, p, "meta_t", ["w1", "b1", "wa", "ba"])?;
                    let (out, cache) = meta_t_forward(self.t_shape(), pt, &data.features, ex, ey);
                    let per = 2 * kx * ky;
                    let ks = (0..depth)
                        .map(|j| {
                            let mut k = Kernel::identity(kx, ky)?;
                            for (w, d) in k
                                .weights_mut()
                                .iter_mut()
                                .zip(deinterleave(&out[j * per..(j + 1) * per]))
                            {
                                *w = *w + d;
                            }
                            Ok(k)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (ks, Some(cache))
                }
            };
            parts.push(SpectralCorrector::new(grid, lambda, kernels)?);
            caches.push(PartCache {
                lambda: lcache,
                t: tcache,
            });
        }
        let corrector = if self.spec.variant == Variant::RegionSplit {
            let mask = prep
                .mask
                .clone()
                .ok_or_else(|| Error::InvalidConfig("the region-split corrector needs a region mask".into()))?;
            let second = parts.pop().expect("two parts");
            let first = parts.pop().expect("two parts");
            Corrector::Split(RegionSplit {
                parts: [first, second],
                mask,
                mask_inputs: self.spec.mask_inputs,
            })
        } else {
            Corrector::Spectral(parts.pop().expect("one part"))
        };
        Ok(Built { corrector, caches })
    }

    fn meta_params<'a, T: Real>(
        &self,
        params: &'a ParamVector<T>,
        part: usize,
        net: &str,
        names: [&str; 4],
    ) -> Result<[&'a [T]; 4]> {
        let g = |n: &str| params.get(&format!("h{part}.{net}.{n}"));
        Ok([g(names[0])?, g(names[1])?, g(names[2])?, g(names[3])?])
    }

    /// Maps per-part corrector gradients to a full-length parameter gradient.
    pub fn param_grad<T: Real>(
        &self,
        params: &ParamVector<T>,
        prep: &Prepared<T>,
        built: &Built<T>,
        grads: &[CorrectorGrad<T>],
    ) -> Result<Vec<T>> {
        let mut out = params.zeros_like();
        let grid = prep.grid();
        let (ex, ey) = (grid.ext_nx(), grid.ext_ny());
        for (p, ((data, cache), g)) in prep.parts.iter().zip(&built.caches).zip(grads).enumerate() {
            let g_gain: Vec<C<T>> = data.rho.iter().zip(&g.lambda).map(|(r, gl)| r.conj() * gl).collect();
            let g_gain = mirror_average(&g_gain, ex, ey);
            match self.spec.mode {
                Mode::Direct => {
                    out.get_mut(&format!("h{p}.lambda"))?
                        .copy_from_slice(&interleave(&g_gain));
                    for (j, gk) in g.kernels.iter().enumerate() {
                        out.get_mut(&format!("h{p}.kernel{j}"))?
                            .copy_from_slice(&interleave(gk));
                    }
                }
                Mode::Meta => {
                    let pl = self.meta_params(params, p, "meta_lambda", ["w1", "b1", "w2", "b2"])?;
                    let planes = [
                        g_gain.iter().map(|z| z.re).collect(),
                        g_gain.iter().map(|z| z.im).collect(),
                    ];
                    let lc = cache.lambda.as_ref().expect("meta cache");
                    let gl = meta_lambda_backward(self.lambda_shape(), pl, &data.features, lc, planes, ex, ey);
                    for (name, v) in ["w1", "b1", "w2", "b2"].iter().zip(gl) {
                        out.get_mut(&format!("h{p}.meta_lambda.{name}"))?.copy_from_slice(&v);
                    }
                    if let Some(tc) = cache.t.as_ref() {
                        let pt = self.meta_params(params, p, "meta_t", ["w1", "b1", "wa", "ba"])?;
                        let g_out: Vec<T> = g.kernels.iter().flat_map(|k| interleave(k)).collect();
                        let gt = meta_t_backward(self.t_shape(), pt, &data.features, tc, &g_out, ex, ey);
                        for (name, v) in ["w1", "b1", "wa", "ba"].iter().zip(gt) {
                            out.get_mut(&format!("h{p}.meta_t.{name}"))?.copy_from_slice(&v);
                        }
                    }
                }
            }
        }
        Ok(out.values().to_vec())
    }

    /// Re-targets direct-mode parameters to another grid by periodic
    /// bilinear interpolation of the gains on the normalized frequency
    /// lattice; kernels and meta weights carry over unchanged.
    pub fn transfer<T: Real>(&self, params: &ParamVector<T>, grid: Grid) -> Result<(Model, ParamVector<T>)> {
        if grid.dim() != self.grid.dim() {
            return Err(Error::GridMismatch {
                expected: self.grid.describe(),
                found: grid.describe(),
            });
        }
        let target = Model::new(self.spec, grid)?;
        if self.spec.mode == Mode::Meta || grid == self.grid {
            return Ok((target, params.clone()));
        }
        let mut out = ParamVector::new();
        for seg in params.segments() {
            let vals = &params.values()[seg.range()];
            let moved = if seg.name.ends_with(".lambda") {
                interleave(&resample_lattice(self.grid, &deinterleave(vals), grid))
            } else {
                vals.to_vec()
            };
            out.push(seg.name.clone(), moved)?;
        }
        Ok((target, out))
    }
}

/// Periodic bilinear resampling of a lattice field between grids.
pub fn resample_lattice<T: Real>(from: Grid, v: &[C<T>], to: Grid) -> Vec<C<T>> {
    let (sx, sy) = (from.ext_nx(), from.ext_ny());
    let (tx, ty) = (to.ext_nx(), to.ext_ny());
    let pos = |m: usize, tn: usize, sn: usize| -> (usize, usize, T) {
        let theta: T = bin_frequency(m, tn);
        let s = (theta / (T::lit(2.0) * T::PI()) * T::from_usize_lossy(sn)).to_f64_lossy();
        let s = s.rem_euclid(sn as f64);
        let i0 = s.floor() as usize % sn;
        (i0, (i0 + 1) % sn, T::lit(s - s.floor()))
    };
    let mut out = Vec::with_capacity(tx * ty);
    for my in 0..ty {
        let (y0, y1, fy) = if sy == 1 { (0, 0, T::zero()) } else { pos(my, ty, sy) };
        for mx in 0..tx {
            let (x0, x1, fx) = pos(mx, tx, sx);
            let a = v[y0 * sx + x0] * (T::one() - fx) + v[y0 * sx + x1] * fx;
            let b = v[y1 * sx + x0] * (T::one() - fx) + v[y1 * sx + x1] * fx;
            out.push(a * (T::one() - fy) + b * fy);
        }
    }
    out
}

/// First meta input plane: log10 of the coefficient resampled to the
/// lattice by nearest neighbour, or the normalized operator symbol modulus
/// for coefficient-free families.
fn coefficient_plane<T: Real>(inst: &Instance<T>, sym_modulus: &[T]) -> Vec<T> {
    let grid = inst.grid();
    let (ex, ey) = (grid.ext_nx(), grid.ext_ny());
    let n = grid.n();
    let lg = |a: T| a.max(T::min_positive_value()).log10();
    match &inst.coefficient {
        Coefficient::Element(a) => (0..ex * ey)
            .map(|m| lg(a.get(((m % ex) / 2).min(n), ((m / ex) / 2).min(n))))
            .collect(),
        Coefficient::Nodal(a) => (0..ex * ey)
            .map(|m| lg(a.get((m % ex).div_ceil(2).min(n + 1), (m / ex).div_ceil(2).min(n + 1))))
            .collect(),
        Coefficient::None => {
            let max = sym_modulus.iter().fold(T::zero(), |m, &v| m.max(v));
            sym_modulus
                .iter()
                .map(|&v| if max > T::zero() { v / max } else { T::zero() })
                .collect()
        }
    }
}
