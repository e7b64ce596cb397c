//! Reverse-mode training of correctors inside the hybrid iteration.
//!
//! The loss of one item is the relative residual `||f - A u_K|| / ||f||`
//! after `K` outer steps from a zero guess. Every stage is linear in the
//! iterate, so the backward pass only needs the recorded corrector
//! activations and adjoint applications of `A`, the smoother and `H`.
//!
//! Gradients of complex quantities follow `g = dL/dRe + i dL/dIm`.

pub mod meta;
pub mod model;
pub mod params;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::corrector::CorrectorGrad;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::pde::Instance;
use crate::relax::Smoother;
use crate::rng::{normal_field, stream_rng};
use crate::scalar::{czero, Real};

pub use model::{reciprocal_symbol, resample_lattice, Built, Mode, Model, ModelSpec, PartData, Prepared};
pub use params::{adam_step, AdamState, ParamVector, Segment};

/// Relative residuals below this multiple of machine epsilon count as zero.
pub const ROUNDING_FLOOR: f64 = 1e3;

/// One training pair: a prepared operator and its right-hand side.
#[derive(Clone, Debug)]
pub struct TrainItem<T> {
    pub prepared: Prepared<T>,
    pub rhs: Field<T>,
}

impl<T: Real> TrainItem<T> {
    /// Prepares `inst` and draws `f ~ N(0, I)` from `(rhs_seed, 0)`.
    pub fn new(model: &Model, inst: &Instance<T>, rhs_seed: u64) -> Result<Self> {
        Ok(Self {
            prepared: model.prepare(inst)?,
            rhs: normal_field(inst.grid(), rhs_seed, 0),
        })
    }
}

fn accumulate<T: Real>(acc: &mut Vec<CorrectorGrad<T>>, g: Vec<CorrectorGrad<T>>) {
    if acc.is_empty() {
        *acc = g;
        return;
    }
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.lambda.iter_mut().zip(&b.lambda) {
            *x = *x + y;
        }
        for (ka, kb) in a.kernels.iter_mut().zip(&b.kernels) {
            for (x, y) in ka.iter_mut().zip(kb) {
                *x = *x + y;
            }
        }
    }
}

/// Loss of one item and, if requested, its full parameter gradient.
pub fn item_loss<T: Real>(
    model: &Model,
    params: &ParamVector<T>,
    item: &TrainItem<T>,
    k: usize,
    want_grad: bool,
) -> Result<(T, Option<Vec<T>>)> {
    let f = &item.rhs;
    let fnorm = f.norm();
    if fnorm == T::zero() {
        return Err(Error::ZeroRhs);
    }
    let built = model.build(params, &item.prepared)?;
    let hc = &built.corrector;
    let stencil = &item.prepared.stencil;
    let smoother = Smoother::new(model.spec().smoother, stencil)?;
    let n = f.grid().len();

    let mut u = Field::zeros(f.grid());
    let mut tape = Vec::with_capacity(k);
    for _ in 0..k {
        smoother.smooth_in_place(u.values_mut(), f.values());
        let r = stencil.residual(&u, f)?;
        let c = if want_grad {
            let (c, rec) = hc.apply_recorded(&r)?;
            tape.push(rec);
            c
        } else {
            hc.apply(&r)?
        };
        u = u.add(&c);
    }
    let r = stencil.residual(&u, f)?;
    let rnorm = r.norm();
    let loss = rnorm / fnorm;
    if !want_grad {
        return Ok((loss, None));
    }
    // `||r||` is not differentiable at zero; residuals at rounding level are
    // treated as exact and get the zero subgradient.
    if loss <= T::lit(ROUNDING_FLOOR) * T::epsilon() {
        return Ok((loss, Some(vec![T::zero(); params.len()])));
    }

    let gr = r.map(|v| v / (rnorm * fnorm));
    let mut gu = stencil.apply_adjoint(&gr)?.map(|v| -v);
    let mut acc: Vec<CorrectorGrad<T>> = Vec::new();
    let mut tmp = vec![czero(); n];
    let mut scratch = vec![czero(); n];
    for rec in tape.iter().rev() {
        let (g_in, pg) = hc.backward(rec, &gu)?;
        accumulate(&mut acc, pg);
        let mut gv = gu.sub(&stencil.apply_adjoint(&g_in)?);
        for _ in 0..model.spec().smoother.sweeps {
            smoother.sweep_adjoint(gv.values_mut(), &mut tmp, &mut scratch);
        }
        gu = gv;
    }
    let grad = if acc.is_empty() {
        vec![T::zero(); params.len()]
    } else {
        model.param_grad(params, &item.prepared, &built, &acc)?
    };
    Ok((loss, Some(grad)))
}

/// Mean loss over `items`.
pub fn loss<T: Real>(model: &Model, params: &ParamVector<T>, items: &[TrainItem<T>], k: usize) -> Result<T> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let losses = items
        .par_iter()
        .map(|it| item_loss(model, params, it, k, false).map(|(l, _)| l))
        .collect::<Result<Vec<T>>>()?;
    Ok(losses.into_iter().fold(T::zero(), |a, b| a + b) / T::from_usize_lossy(items.len()))
}

/// Mean loss and its gradient; per-item results are reduced in index order
/// so the result does not depend on the thread count.
pub fn grad<T: Real>(model: &Model, params: &ParamVector<T>, items: &[TrainItem<T>], k: usize) -> Result<(T, Vec<T>)> {
    let refs: Vec<&TrainItem<T>> = items.iter().collect();
    grad_of(model, params, &refs, k)
}

fn grad_of<T: Real>(model: &Model, params: &ParamVector<T>, items: &[&TrainItem<T>], k: usize) -> Result<(T, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let per_item = items
        .par_iter()
        .map(|it| item_loss(model, params, it, k, true))
        .collect::<Result<Vec<_>>>()?;
    let scale = T::one() / T::from_usize_lossy(items.len());
    let mut total = T::zero();
    let mut g = vec![T::zero(); params.len()];
    for (l, gi) in per_item {
        total = total + l;
        for (a, b) in g.iter_mut().zip(gi.expect("gradient requested")) {
            *a = *a + b;
        }
    }
    g.iter_mut().for_each(|v| *v = *v * scale);
    Ok((total * scale, g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Outer iterations in the loss during the first period.
    pub k0: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_halving_period: usize,
    pub k_increase_period: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k0: 1,
            batch_size: 10,
            epochs: 100,
            lr: 1e-4,
            lr_halving_period: 100,
            k_increase_period: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k0", self.k0),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("lr_halving_period", self.lr_halving_period),
            ("k_increase_period", self.k_increase_period),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    /// Learning rate and loss depth `K` of 1-based `epoch`.
    pub fn schedule(&self, epoch: usize) -> (f64, usize) {
        let e = epoch.saturating_sub(1);
        let halvings = (e / self.lr_halving_period) as i32;
        (self.lr * 0.5f64.powi(halvings), self.k0 + e / self.k_increase_period)
    }

    /// Optimizer steps per epoch for a dataset of `len` items.
    pub fn steps_per_epoch(&self, len: usize) -> usize {
        len.div_ceil(self.batch_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean pre-update batch loss over the epoch.
    pub loss: f64,
    pub lr: f64,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct TrainResult<T> {
    pub params: ParamVector<T>,
    pub history: Vec<EpochRecord>,
}

/// Adam over shuffled mini-batches with the halving / `K` schedule.
/// `on_epoch` sees every finished epoch (e.g. for checkpoints).
pub fn train<T: Real>(
    model: &Model,
    init: ParamVector<T>,
    items: &[TrainItem<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &ParamVector<T>) -> Result<()>,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut params = init;
    let mut state = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (lr, k) = cfg.schedule(epoch);
        let mut rng = stream_rng(cfg.seed, 1 << 32 | epoch as u64);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainItem<T>> = chunk.iter().map(|&i| &items[i]).collect();
            let (l, g) = grad_of(model, &params, &batch, k)?;
            let lf = l.to_f64_lossy();
            if !lf.is_finite() {
                return Err(Error::Diverged {
                    iterations: epoch,
                    relative_residual: lf,
                });
            }
            weighted += lf * chunk.len() as f64;
            adam_step(params.values_mut(), &g, &mut state, lr)?;
        }
        let rec = EpochRecord {
            epoch,
            loss: weighted / items.len() as f64,
            lr,
            k,
        };
        on_epoch(&rec, &params)?;
        history.push(rec);
    }
    Ok(TrainResult { params, history })
}

#[cfg(test)]
mod tests;
