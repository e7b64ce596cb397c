//! The outer hybrid iteration: `M` smoothing sweeps followed by one
//! learned correction, plus the iteration-count studies built on it.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::corrector::Corrector;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::pde::{system_rhs, Family, Instance, RhsKind, Stencil9Field};
use crate::relax::{Smoother, SmootherSpec};
use crate::rng::normal_field;
use crate::scalar::{Real, C};

pub const DEFAULT_MAXIT: usize = 500;
/// Relative residual above which a step counts towards divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Consecutive steps above [`DIVERGENCE_FACTOR`] before giving up.
pub const DIVERGENCE_PATIENCE: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Absolute residual norms, starting with `||f||`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub status: Status,
    /// Geometric mean of the last (up to) five residual ratios.
    pub contraction_estimate: f64,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        let r0 = self.residual_history[0];
        let last = *self.residual_history.last().expect("non-empty history");
        if r0 == 0.0 {
            0.0
        } else {
            last / r0
        }
    }

    pub fn relative_history(&self) -> Vec<f64> {
        let r0 = self.residual_history[0];
        self.residual_history
            .iter()
            .map(|r| if r0 == 0.0 { 0.0 } else { r / r0 })
            .collect()
    }
}

/// Geometric mean of the last `window` ratios of consecutive entries.
pub fn tail_contraction(history: &[f64], window: usize) -> f64 {
    let ratios: Vec<f64> = history.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect();
    if ratios.is_empty() {
        return 0.0;
    }
    let tail = &ratios[ratios.len().saturating_sub(window)..];
    if tail.contains(&0.0) {
        return 0.0;
    }
    (tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp()
}

/// One outer step `u <- S^M u; u <- u + H (f - A u)`.
pub fn hybrid_step<T: Real>(
    stencil: &Stencil9Field<T>,
    smoother: &Smoother<'_, T>,
    hc: &Corrector<T>,
    u: &mut Field<T>,
    f: &Field<T>,
) -> Result<()> {
    smoother.smooth_in_place(u.values_mut(), f.values());
    let r = stencil.residual(u, f)?;
    let c = hc.apply(&r)?;
    u.axpy(crate::scalar::cone(), &c);
    Ok(())
}

/// Runs the iteration from a zero guess without turning non-convergence
/// into an error.
pub fn hybrid_run<T: Real>(
    stencil: &Stencil9Field<T>,
    f: &Field<T>,
    smoother: SmootherSpec,
    hc: &Corrector<T>,
    tol: f64,
    maxit: usize,
) -> Result<(SolveReport, Field<T>)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let grid = stencil.grid();
    grid.ensure_same(&f.grid())?;
    grid.ensure_same(&hc.grid())?;
    let start = Instant::now();
    let sm = Smoother::new(smoother, stencil)?;
    let fnorm = f.norm().to_f64_lossy();
    let mut u = Field::zeros(grid);
    let mut history = vec![fnorm];
    let mut status = Status::MaxIterations;
    let mut above = 0usize;
    if fnorm == 0.0 {
        status = Status::Converged;
    } else {
        for _ in 0..maxit {
            hybrid_step(stencil, &sm, hc, &mut u, f)?;
            let r = stencil.residual(&u, f)?.norm().to_f64_lossy();
            history.push(r);
            let rel = r / fnorm;
            if !rel.is_finite() {
                status = Status::Diverged;
                break;
            }
            if rel < tol {
                status = Status::Converged;
                break;
            }
            above = if rel > DIVERGENCE_FACTOR { above + 1 } else { 0 };
            if above >= DIVERGENCE_PATIENCE {
                status = Status::Diverged;
                break;
            }
        }
    }
    let report = SolveReport {
        iterations: history.len() - 1,
        contraction_estimate: tail_contraction(&history, 5),
        residual_history: history,
        converged: status == Status::Converged,
        status,
        wall_time: start.elapsed(),
    };
    Ok((report, u))
}

/// Solves `A u = f` to relative residual `tol`; non-convergence is an error.
pub fn hybrid_solve<T: Real>(
    stencil: &Stencil9Field<T>,
    f: &Field<T>,
    smoother: SmootherSpec,
    hc: &Corrector<T>,
    tol: f64,
    maxit: usize,
) -> Result<(SolveReport, Field<T>)> {
    let (report, u) = hybrid_run(stencil, f, smoother, hc, tol, maxit)?;
    match report.status {
        Status::Converged => Ok((report, u)),
        Status::MaxIterations => Err(Error::MaxIterations {
            iterations: report.iterations,
            relative_residual: report.relative_residual(),
        }),
        Status::Diverged => Err(Error::Diverged {
            iterations: report.iterations,
            relative_residual: report.relative_residual(),
        }),
    }
}

/// Runs exactly `steps` outer iterations and returns the iterates' residuals.
pub fn hybrid_fixed_steps<T: Real>(
    stencil: &Stencil9Field<T>,
    f: &Field<T>,
    smoother: SmootherSpec,
    hc: &Corrector<T>,
    u0: Field<T>,
    steps: usize,
) -> Result<(Vec<Field<T>>, Field<T>)> {
    let sm = Smoother::new(smoother, stencil)?;
    let mut u = u0;
    let mut iterates = Vec::with_capacity(steps + 1);
    iterates.push(u.clone());
    for _ in 0..steps {
        hybrid_step(stencil, &sm, hc, &mut u, f)?;
        iterates.push(u.clone());
    }
    Ok((iterates, u))
}

/// Outer steps used by [`residual_contraction`] in the RHS study.
pub const ASYMPTOTIC_STEPS: usize = 40;

/// Asymptotic per-step rate of the residual recurrence
/// `r <- (I - A H)(I - A B)^M r` started from `f`.
///
/// The recurrence is linear and independent of the right-hand side, so it is
/// renormalized every step and can run past the rounding floor that ends an
/// actual solve. Returns the geometric mean of the last `window` ratios.
pub fn residual_contraction<T: Real>(
    stencil: &Stencil9Field<T>,
    f: &Field<T>,
    smoother: SmootherSpec,
    hc: &Corrector<T>,
    steps: usize,
    window: usize,
) -> Result<f64> {
    let grid = stencil.grid();
    grid.ensure_same(&f.grid())?;
    grid.ensure_same(&hc.grid())?;
    let sm = Smoother::new(smoother, stencil)?;
    let mut r = f.clone();
    let n0 = r.norm();
    if n0 == T::zero() {
        return Ok(0.0);
    }
    r.scale(C::new(T::one() / n0, T::zero()));
    let mut ratios = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut d = Field::zeros(grid);
        hybrid_step(stencil, &sm, hc, &mut d, &r)?;
        let next = stencil.residual(&d, &r)?;
        let q = next.norm();
        ratios.push(q.to_f64_lossy());
        if q == T::zero() || !q.to_f64_lossy().is_finite() {
            break;
        }
        r = next;
        r.scale(C::new(T::one() / q, T::zero()));
    }
    let tail = &ratios[ratios.len().saturating_sub(window)..];
    if tail.is_empty() || tail.contains(&0.0) {
        return Ok(0.0);
    }
    Ok((tail.iter().map(|q| q.ln()).sum::<f64>() / tail.len() as f64).exp())
}

/// One cell of a scale sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub scale: usize,
    pub mu_id: u64,
    pub iterations: usize,
    pub converged: bool,
    pub contraction: f64,
}

/// Mean and standard deviation of the iteration counts at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSummary {
    pub scale: usize,
    pub mean: f64,
    pub std: f64,
    pub converged: usize,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub family: Family,
    pub scales: Vec<usize>,
    pub samples: u64,
    pub seed: u64,
    pub smoother: SmootherSpec,
    pub tol: f64,
    pub maxit: usize,
}

/// Solves `samples` sampled problems at every scale with correctors produced
/// by `build` (which may retrain, transfer, or re-emit parameters).
///
/// Non-converged cells are counted at the iterations actually spent.
pub fn sweep_scales<T, B>(spec: &SweepSpec, build: B) -> Result<Vec<SweepRow>>
where
    T: Real,
    B: Fn(&Instance<T>) -> Result<Corrector<T>> + Sync,
{
    let cells: Vec<(usize, u64)> = spec
        .scales
        .iter()
        .flat_map(|&n| (0..spec.samples).map(move |i| (n, i)))
        .collect();
    cells
        .par_iter()
        .map(|&(n, i)| {
            let inst: Instance<T> = spec.family.sample(spec.seed, i).realize(n)?;
            let hc = build(&inst)?;
            let f = normal_field::<T>(inst.grid(), spec.seed ^ 0x5eed, 1000 + i);
            let (rep, _) = hybrid_run(&inst.stencil, &f, spec.smoother, &hc, spec.tol, spec.maxit)?;
            Ok(SweepRow {
                scale: n,
                mu_id: i,
                iterations: rep.iterations,
                converged: rep.converged,
                contraction: rep.contraction_estimate,
            })
        })
        .collect()
}

pub fn summarize(rows: &[SweepRow]) -> Vec<ScaleSummary> {
    let mut scales: Vec<usize> = rows.iter().map(|r| r.scale).collect();
    scales.dedup();
    scales.sort_unstable();
    scales.dedup();
    scales
        .into_iter()
        .map(|scale| {
            let counts: Vec<f64> = rows
                .iter()
                .filter(|r| r.scale == scale)
                .map(|r| r.iterations as f64)
                .collect();
            let k = counts.len() as f64;
            let mean = counts.iter().sum::<f64>() / k;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / k;
            ScaleSummary {
                scale,
                mean,
                std: var.sqrt(),
                converged: rows.iter().filter(|r| r.scale == scale && r.converged).count(),
                samples: counts.len(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhsRow {
    pub kind: RhsKind,
    pub iterations: usize,
    pub converged: bool,
    /// Tail rate of the solve itself.
    pub contraction: f64,
    /// [`residual_contraction`] over [`ASYMPTOTIC_STEPS`] steps.
    pub asymptotic: f64,
}

/// Contraction estimates for several right-hand sides on one operator.
pub fn rhs_independence_study<T: Real>(
    stencil: &Stencil9Field<T>,
    smoother: SmootherSpec,
    hc: &Corrector<T>,
    kinds: &[RhsKind],
    seed: u64,
    tol: f64,
    maxit: usize,
) -> Result<Vec<RhsRow>> {
    let grid: Grid = stencil.grid();
    kinds
        .iter()
        .map(|&kind| {
            let f = system_rhs(kind, grid, stencil, seed)?;
            let (rep, _) = hybrid_run(stencil, &f, smoother, hc, tol, maxit)?;
            Ok(RhsRow {
                kind,
                iterations: rep.iterations,
                converged: rep.converged,
                contraction: rep.contraction_estimate,
                asymptotic: residual_contraction(stencil, &f, smoother, hc, ASYMPTOTIC_STEPS, 5)?,
            })
        })
        .collect()
}

/// Largest pairwise relative difference `(max - min) / max`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if values.is_empty() || max <= 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::SpectralCorrector;
    use crate::lfa::stencil_symbol;
    use crate::pde::{laplacian_5pt, poisson_1d};

    fn exact_1d(g: Grid) -> Corrector<f64> {
        let sym = stencil_symbol(&poisson_1d::<f64>(g)).unwrap();
        let lambda = sym
            .values()
            .iter()
            .map(|v| if v.norm() > 1e-12 { v.inv() } else { C::new(0.0, 0.0) })
            .collect();
        Corrector::Spectral(SpectralCorrector::diagonal(g, lambda).unwrap())
    }

    #[test]
    fn exact_corrector_converges_in_one_step() {
        let g = Grid::line(31).unwrap();
        let s = poisson_1d::<f64>(g);
        let f = normal_field::<f64>(g, 1, 0);
        let (rep, _) = hybrid_solve(&s, &f, SmootherSpec::jacobi(0.5, 0).unwrap(), &exact_1d(g), 1e-10, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.relative_residual() < 1e-10);
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let g = Grid::square(7).unwrap();
        let s = laplacian_5pt::<f64>(g);
        let hc = Corrector::zero(g).unwrap();
        let (rep, u) = hybrid_solve(
            &s,
            &Field::zeros(g),
            SmootherSpec::jacobi(0.75, 1).unwrap(),
            &hc,
            1e-6,
            10,
        )
        .unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.residual_history, vec![0.0]);
        assert_eq!(u, Field::zeros(g));
    }

    #[test]
    fn jacobi_alone_is_slow() {
        let g = Grid::square(31).unwrap();
        let s = laplacian_5pt::<f64>(g);
        let f = normal_field::<f64>(g, 2, 0);
        let hc = Corrector::zero(g).unwrap();
        let spec = SmootherSpec::jacobi(0.75, 10).unwrap();
        let (rep, _) = hybrid_run(&s, &f, spec, &hc, 1e-6, 500).unwrap();
        assert!(!rep.converged || rep.iterations > 200, "{}", rep.iterations);
        assert!(matches!(
            hybrid_solve(&s, &f, spec, &hc, 1e-6, 20),
            Err(Error::MaxIterations { iterations: 20, .. })
        ));
    }

    #[test]
    fn divergence_is_detected() {
        let g = Grid::square(7).unwrap();
        let s = laplacian_5pt::<f64>(g);
        let f = normal_field::<f64>(g, 3, 0);
        let hc = Corrector::Spectral(SpectralCorrector::diagonal(g, vec![C::new(5.0, 0.0); g.ext_len()]).unwrap());
        let err = hybrid_solve(&s, &f, SmootherSpec::jacobi(0.5, 0).unwrap(), &hc, 1e-6, 100).unwrap_err();
        assert!(matches!(err, Error::Diverged { iterations: 5, .. }), "{err:?}");
    }

    #[test]
    fn scale_equivariant_iteration_counts() {
        let g = Grid::square(15).unwrap();
        let s = laplacian_5pt::<f64>(g);
        let sym = stencil_symbol(&s).unwrap();
        let lambda = sym
            .values()
            .iter()
            .map(|v| {
                if v.norm() > 1e-12 {
                    v.inv() * 0.8
                } else {
                    C::new(0.0, 0.0)
                }
            })
            .collect();
        let hc = Corrector::Spectral(SpectralCorrector::diagonal(g, lambda).unwrap());
        let spec = SmootherSpec::jacobi(0.75, 2).unwrap();
        let rows = rhs_independence_study(&s, spec, &hc, &[RhsKind::F3], 0, 1e-8, 200).unwrap();
        let f = system_rhs(RhsKind::F3, g, &s, 0).unwrap().map(|v| v * 1e6);
        let (rep, _) = hybrid_run(&s, &f, spec, &hc, 1e-8, 200).unwrap();
        assert_eq!(rows[0].iterations, rep.iterations);
    }

    #[test]
    fn tail_contraction_of_geometric_sequence() {
        let h: Vec<f64> = (0..10).map(|k| 0.3f64.powi(k)).collect();
        assert!((tail_contraction(&h, 5) - 0.3).abs() < 1e-12);
        assert_eq!(tail_contraction(&[1.0], 5), 0.0);
    }

    #[test]
    fn spread_and_summary() {
        assert!((relative_spread(&[0.5, 0.45, 0.48]) - 0.1).abs() < 1e-12);
        let rows = vec![
            SweepRow {
                scale: 31,
                mu_id: 0,
                iterations: 10,
                converged: true,
                contraction: 0.1,
            },
            SweepRow {
                scale: 15,
                mu_id: 0,
                iterations: 4,
                converged: true,
                contraction: 0.1,
            },
            SweepRow {
                scale: 31,
                mu_id: 1,
                iterations: 14,
                converged: true,
                contraction: 0.1,
            },
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].scale, 15);
        assert_eq!(s[1].mean, 12.0);
        assert_eq!(s[1].std, 2.0);
    }

    #[test]
    fn residual_rate_matches_the_jacobi_spectral_radius() {
        // H = 0, one Jacobi sweep on -u'' : rate -> max_j |1 - w (1 - cos(j pi h))|.
        let g = Grid::line(7).unwrap();
        let s = poisson_1d::<f64>(g);
        let w = 2.0 / 3.0;
        let rho = (1..=7)
            .map(|j| (1.0 - w * (1.0 - (j as f64 * std::f64::consts::PI / 8.0).cos())).abs())
            .fold(0.0, f64::max);
        let f = normal_field::<f64>(g, 3, 0);
        let spec = SmootherSpec::jacobi(w, 1).unwrap();
        let q = residual_contraction(&s, &f, spec, &Corrector::zero(g).unwrap(), 300, 5).unwrap();
        assert!((q - rho).abs() < 1e-9, "{q} vs {rho}");
    }

    #[test]
    fn residual_rate_follows_the_solve_before_the_floor() {
        let g = Grid::square(15).unwrap();
        let s = laplacian_5pt::<f64>(g);
        let spec = SmootherSpec::jacobi(0.75, 2).unwrap();
        let hc = Corrector::zero(g).unwrap();
        let f = normal_field::<f64>(g, 1, 0);
        let (rep, _) = hybrid_run(&s, &f, spec, &hc, 1e-300, 12).unwrap();
        let q = residual_contraction(&s, &f, spec, &hc, 12, 5).unwrap();
        assert!((q - rep.contraction_estimate).abs() < 1e-12 * q);
        assert_eq!(
            residual_contraction(&s, &Field::zeros(g), spec, &hc, 5, 5).unwrap(),
            0.0
        );
    }
}
