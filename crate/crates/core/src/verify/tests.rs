use std::f64::consts::PI;

use super::*;
use crate::corrector::SpectralCorrector;
use crate::lfa::stencil_symbol;
use crate::pde::{laplacian_5pt, poisson_1d, ProblemParams, CENTER};
use crate::rng::{normal_field, standard_normal, stream_rng};

fn exact_poisson_corrector(g: Grid) -> Corrector<f64> {
    let sym = stencil_symbol(&poisson_1d::<f64>(g)).unwrap();
    let lambda = sym
        .values()
        .iter()
        .map(|v| if v.norm() > 1e-12 { v.inv() } else { ZERO })
        .collect();
    Corrector::Spectral(SpectralCorrector::diagonal(g, lambda).unwrap())
}

fn poisson_eigs_1d(n: usize) -> Vec<f64> {
    let h = 1.0 / (n + 1) as f64;
    (1..=n)
        .map(|j| 4.0 / (h * h) * (PI * h * j as f64 / 2.0).sin().powi(2))
        .collect()
}

#[test]
fn lu_solves_random_system() {
    let n = 12;
    let mut rng = stream_rng(1, 0);
    let mut a = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, C64::new(standard_normal(&mut rng), standard_normal(&mut rng)));
        }
    }
    let x: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
    let b = a.matvec(&x);
    let got = a.lu().unwrap().solve(&b);
    for (p, q) in got.iter().zip(&x) {
        assert!((p - q).norm() < 1e-10);
    }
    assert!(matches!(DenseMatrix::zeros(3).lu(), Err(Error::SingularMatrix)));
}

#[test]
fn poisson_1d_eigenpairs_are_analytic() {
    let g = Grid::line(7).unwrap();
    let eig = dense_eig(&poisson_1d::<f64>(g)).unwrap();
    let want = poisson_eigs_1d(7);
    let h: f64 = 1.0 / 8.0;
    for (j, (lam, w)) in eig.values.iter().zip(&want).enumerate() {
        assert!((lam.re - w).abs() < 1e-10 && lam.im.abs() < 1e-10, "{lam} vs {w}");
        let xi: Vec<f64> = (1..=7)
            .map(|k| (2.0 * h).sqrt() * (PI * h * ((j + 1) * k) as f64).sin())
            .collect();
        let v = eig.vector(j);
        let dot: C64 = v.values().iter().zip(&xi).map(|(a, b)| a * b).sum();
        let sign = dot.re.signum();
        for (a, b) in v.values().iter().zip(&xi) {
            assert!((a - sign * b).norm() < 1e-8);
        }
    }
    assert!(eig.residual < 1e-12);
    assert!(eig.is_reliable());
}

#[test]
fn laplacian_2d_is_tensor_sum() {
    let g = Grid::square(7).unwrap();
    let eig = dense_eig(&laplacian_5pt::<f64>(g)).unwrap();
    // h^2-scaled 1D values, summed over both axes
    let one: Vec<f64> = (1..=7).map(|j| 4.0 * (PI * j as f64 / 16.0).sin().powi(2)).collect();
    let mut want: Vec<f64> = one.iter().flat_map(|a| one.iter().map(move |b| a + b)).collect();
    want.sort_by(f64::total_cmp);
    for (lam, w) in eig.values.iter().zip(&want) {
        assert!((lam.re - w).abs() < 1e-9 && lam.im.abs() < 1e-9);
    }
    assert!(eig.residual < 1e-8);
}

#[test]
fn diagonal_stencil_eigenvalues_are_its_entries() {
    let g = Grid::square(5).unwrap();
    let coeffs = (0..g.len())
        .map(|i| {
            let mut c = [ZERO; 9];
            c[CENTER] = C64::new(1.0 + (i * 7 % 25) as f64, 0.0);
            c
        })
        .collect();
    let st = Stencil9Field::from_coeffs(g, coeffs).unwrap();
    let eig = dense_eig(&st).unwrap();
    for (i, lam) in eig.values.iter().enumerate() {
        assert!((lam - C64::new(1.0 + i as f64, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn nonsymmetric_operators_satisfy_the_residual_bound() {
    for p in [
        ProblemParams::ConvectionDiffusion {
            eps: 0.05,
            wx: 1.0,
            wy: 0.5,
        },
        ProblemParams::RandomDiffusion { seed: 3 },
        ProblemParams::Anisotropic { xi: 1e-2, theta: 0.6 },
    ] {
        let st = p.realize::<f64>(7).unwrap().stencil;
        let eig = dense_eig(&st).unwrap();
        assert!(eig.residual < 1e-8, "{p:?}: {}", eig.residual);
        assert!(eig.condition.is_finite());
        for w in eig.values.windows(2) {
            assert!(w[0].norm() <= w[1].norm() + 1e-12);
        }
    }
}

#[test]
fn random_complex_stencil_is_diagonalized() {
    let g = Grid::square(5).unwrap();
    let mut rng = stream_rng(9, 1);
    let coeffs = (0..g.len())
        .map(|_| std::array::from_fn(|_| C64::new(standard_normal(&mut rng), standard_normal(&mut rng))))
        .collect();
    let st = Stencil9Field::from_coeffs(g, coeffs).unwrap();
    let eig = dense_eig(&st).unwrap();
    assert!(eig.residual < 1e-8, "{}", eig.residual);
    // trace is preserved
    let tr: C64 = st.diagonal().iter().sum();
    let sum: C64 = eig.values.iter().sum();
    assert!((tr - sum).norm() < 1e-9 * tr.norm().max(1.0));
}

#[test]
fn too_large_grids_are_rejected() {
    let g = Grid::square(63).unwrap();
    assert!(dense_eig(&laplacian_5pt::<f64>(g)).is_err());
    // the cap counts unknowns, so long 1D lines are fine
    let line = Grid::line(63).unwrap();
    let f = Field::from_fn(line, |x, _| C64::new(x, 0.0));
    assert!(dense_solve(&poisson_1d::<f64>(line), &f).is_ok());
}

#[test]
fn sine_eigenfrequency_has_single_support() {
    let g = Grid::line(15).unwrap();
    let eig = dense_eig(&poisson_1d::<f64>(g)).unwrap();
    for j in 1..=15 {
        let e = expansion_coefficients(&eig, (j, 1), SUPPORT_TAU).unwrap();
        assert_eq!(e.support, vec![j - 1], "mode {j}");
        assert!((e.coeffs[j - 1].norm() - 1.0).abs() < 1e-10);
    }
    let all = expansion_coefficients(&eig, (3, 1), 0.0).unwrap();
    assert_eq!(all.support.len(), 15);
    assert!(expansion_coefficients(&eig, (3, 1), -1.0).is_err());
    assert!(expansion_coefficients(&eig, (16, 1), SUPPORT_TAU).is_err());
}

#[test]
fn constant_stencil_support_is_a_quartet_at_most() {
    let g = Grid::square(7).unwrap();
    let st = ProblemParams::Anisotropic { xi: 0.3, theta: 0.0 }
        .realize::<f64>(7)
        .unwrap()
        .stencil;
    let eig = dense_eig(&st).unwrap();
    for (j, k) in sine_modes(g) {
        let e = expansion_coefficients(&eig, (j, k), SUPPORT_TAU).unwrap();
        assert!(e.support.len() <= 4, "({j},{k}): {}", e.support.len());
    }
}

#[test]
fn degenerate_eigenspace_bounds_the_support() {
    // 4 - 2cos(a) - 2cos(b) equals 4 on the whole anti-diagonal j + k = N + 1
    let g = Grid::square(7).unwrap();
    let eig = dense_eig(&laplacian_5pt::<f64>(g)).unwrap();
    for (j, k) in sine_modes(g) {
        let lam = 4.0 - 2.0 * (PI * j as f64 / 8.0).cos() - 2.0 * (PI * k as f64 / 8.0).cos();
        let e = expansion_coefficients(&eig, (j, k), SUPPORT_TAU).unwrap();
        let mult = eig.values.iter().filter(|v| (v.re - lam).abs() < 1e-9).count();
        assert!(e.support.len() <= mult, "({j},{k})");
        assert!(e.support.iter().all(|&i| (eig.values[i].re - lam).abs() < 1e-9));
    }
}

#[test]
fn mixed_derivative_spreads_the_support() {
    let st = ProblemParams::Anisotropic { xi: 0.3, theta: 0.4 }
        .realize::<f64>(7)
        .unwrap()
        .stencil;
    let eig = dense_eig(&st).unwrap();
    let e = expansion_coefficients(&eig, (1, 1), SUPPORT_TAU).unwrap();
    assert!(e.support.len() > 4);
}

#[test]
fn exact_poisson_corrector_has_no_eigen_error() {
    let g = Grid::line(31).unwrap();
    let eig = dense_eig(&poisson_1d::<f64>(g)).unwrap();
    let l = corrector_eigen_errors(&exact_poisson_corrector(g), &eig).unwrap();
    assert!(l.iter().all(|&v| v < 1e-9), "{l:?}");
}

#[test]
fn zero_corrector_eigen_errors_are_one() {
    let g = Grid::square(7).unwrap();
    let st = ProblemParams::RandomDiffusion { seed: 1 }
        .realize::<f64>(7)
        .unwrap()
        .stencil;
    let eig = dense_eig(&st).unwrap();
    let l = corrector_eigen_errors(&Corrector::zero(g).unwrap(), &eig).unwrap();
    assert!(l.iter().all(|&v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn eta_matches_direct_evaluation() {
    let eta = eta_formula(0.5, 0.01, 10, 4.0, 0.01);
    let want = (2.0 * 1.01f64.powi(20) * 0.01).max(2.0 * 0.5f64.powi(20) * 4.0).sqrt();
    assert_eq!(eta, want);
    assert!((eta - 0.1563).abs() < 1e-4);
}

#[test]
fn contraction_of_a_geometric_sequence() {
    let e: Vec<f64> = (0..=20).map(|k| 0.3f64.powi(k)).collect();
    assert!((geometric_contraction(&e, (5, 20), 1e-12) - 0.3).abs() < 1e-12);
    let fast: Vec<f64> = (0..=20).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
    assert_eq!(geometric_contraction(&fast, (5, 20), 1e-12), 0.0);
}

#[test]
fn audit_of_exact_poisson_corrector() {
    let g = Grid::line(31).unwrap();
    let st = poisson_1d::<f64>(g);
    let sm = SmootherSpec::jacobi(2.0 / 3.0, 2).unwrap();
    let rep = audit(&st, sm, &exact_poisson_corrector(g), &AuditConfig::default()).unwrap();
    assert!(rep.mu_h < 1e-15, "{}", rep.mu_h);
    assert!(rep.c_bound < 1e-15);
    assert_eq!(rep.max_support, 1);
    assert_eq!(rep.index_h.len() + rep.index_b.len(), 31);
    assert!(rep.eps_v.unwrap() < 1e-10);
    assert!(rep.eps_lambda.unwrap() > 0.0);
    assert!(rep.bound_honored);
    assert!(rep.to_text().contains("eta"));
}

#[test]
fn audit_index_sets_partition_and_bound_formula() {
    let g = Grid::square(7).unwrap();
    let inst = ProblemParams::RandomDiffusion { seed: 2 }.realize::<f64>(7).unwrap();
    let sm = SmootherSpec::jacobi(0.75, 3).unwrap();
    let rep = audit(&inst.stencil, sm, &Corrector::zero(g).unwrap(), &AuditConfig::default()).unwrap();
    let mut all: Vec<usize> = rep.index_h.iter().chain(&rep.index_b).copied().collect();
    all.sort();
    assert_eq!(all, (0..49).collect::<Vec<_>>());
    assert!(rep.index_h.iter().all(|i| !rep.index_b.contains(i)));
    assert_eq!(rep.eta, eta_formula(rep.mu_b, rep.eps_b, 3, rep.c_bound, rep.mu_h));
    assert_eq!(rep.thetas.len(), 49);
    // H = 0 leaves every l_i a unit vector, so each theta sum is its support size
    for t in &rep.thetas {
        assert!((t.sum_l2 - t.support as f64).abs() < 1e-9);
    }
}

#[test]
fn audit_rejects_bad_window() {
    let g = Grid::line(7).unwrap();
    let cfg = AuditConfig {
        window: (5, 30),
        ..AuditConfig::default()
    };
    let sm = SmootherSpec::jacobi(0.5, 1).unwrap();
    assert!(audit(&poisson_1d::<f64>(g), sm, &Corrector::zero(g).unwrap(), &cfg).is_err());
}

#[test]
fn dense_solve_matches_operator() {
    let g = Grid::square(7).unwrap();
    let st = ProblemParams::ConvectionDiffusion {
        eps: 0.1,
        wx: 1.0,
        wy: -1.0,
    }
    .realize::<f64>(7)
    .unwrap()
    .stencil;
    let f = normal_field::<f64>(g, 4, 0);
    let u = dense_solve(&st, &f).unwrap();
    assert!(st.residual(&u, &f).unwrap().norm() < 1e-12 * f.norm());
}
