//! Property tests for the structural invariants of the numeric kernels.

use fns_core::corrector::{Corrector, Kernel, SpectralCorrector};
use fns_core::fft::{fft2, Direction};
use fns_core::grid::{odd_extend, restrict};
use fns_core::hybrid::hybrid_step;
use fns_core::lfa::{jacobi_symbol, partition_frequencies, Label, PartitionMode};
use fns_core::pde::{
    assemble_anisotropic, assemble_random_diffusion, laplacian_5pt, ElementCoefficient, ProblemParams, Stencil9Field,
};
use fns_core::relax::{error_propagation_apply, Smoother, SmootherSpec};
use fns_core::rng::{normal_field, standard_normal, stream_rng};
use fns_core::train::{loss, Mode, Model, ModelSpec, ParamVector, TrainItem};
use fns_core::verify::{dense_eig, sine_mode, DenseMatrix};
use fns_core::{Dim, Field, Grid, C};
use proptest::prelude::*;

type C64 = C<f64>;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (prop_oneof![Just(3usize), Just(7), Just(15)], any::<bool>()).prop_map(|(n, two)| {
        if two {
            Grid::square(n).unwrap()
        } else {
            Grid::line(n).unwrap()
        }
    })
}

fn params_strategy() -> impl Strategy<Value = ProblemParams> {
    prop_oneof![
        (0u64..1000).prop_map(|seed| ProblemParams::RandomDiffusion { seed }),
        (1e-4f64..1.0, 0.0f64..std::f64::consts::PI).prop_map(|(xi, theta)| ProblemParams::Anisotropic { xi, theta }),
        (1e-2f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(eps, wx, wy)| ProblemParams::ConvectionDiffusion {
            eps,
            wx,
            wy
        }),
        (0u64..1000, 1usize..4, 0.0f64..4.0).prop_map(|(seed, b, m)| ProblemParams::Jumping {
            seed,
            blocks: 1 << b,
            m
        }),
    ]
}

fn rel(a: &Field<f64>, b: &Field<f64>) -> f64 {
    a.sub(b).norm() / b.norm().max(1e-300)
}

fn random_corrector(g: Grid, depth: usize, seed: u64) -> Corrector<f64> {
    let mut rng = stream_rng(seed, 77);
    let mut cn = || C64::new(standard_normal(&mut rng), standard_normal(&mut rng));
    let lambda = (0..g.ext_len()).map(|_| cn()).collect();
    let ky = if g.dim() == Dim::One { 1 } else { 3 };
    let kernels = (0..depth)
        .map(|_| Kernel::new(3, ky, (0..3 * ky).map(|_| cn()).collect()).unwrap())
        .collect();
    Corrector::Spectral(SpectralCorrector::new(g, lambda, kernels).unwrap())
}

fn dense_of(g: Grid, op: impl Fn(&Field<f64>) -> Field<f64>) -> DenseMatrix {
    let n = g.len();
    let mut m = DenseMatrix::zeros(n);
    for j in 0..n {
        let mut e = Field::zeros(g);
        e.values_mut()[j] = C64::new(1.0, 0.0);
        for (i, v) in op(&e).values().iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    m
}

fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = a.n();
    let mut c = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            c.set(i, j, (0..n).map(|k| a.get(i, k) * b.get(k, j)).sum());
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_preserves_norm(g in grid_strategy(), seed in any::<u64>()) {
        let fe = odd_extend(&normal_field::<f64>(g, seed, 0));
        for dir in [Direction::Forward, Direction::Inverse] {
            let out = fft2(&fe, dir).unwrap();
            prop_assert!((out.norm() - fe.norm()).abs() <= 1e-12 * fe.norm());
        }
    }

    #[test]
    fn extension_round_trips(g in grid_strategy(), seed in any::<u64>()) {
        let f = normal_field::<f64>(g, seed, 1);
        let fe = odd_extend(&f);
        prop_assert_eq!(&restrict(&fe), &f);
        prop_assert!(fe.is_odd_symmetric(0.0));
        prop_assert_eq!(odd_extend(&restrict(&fe)), fe);
    }

    #[test]
    fn stencils_are_linear(p in params_strategy(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let st = p.realize::<f64>(7).unwrap().stencil;
        let g = st.grid();
        let (u, v) = (normal_field::<f64>(g, seed, 0), normal_field::<f64>(g, seed, 1));
        let (ca, cb) = (C64::new(a, 0.5), C64::new(b, -1.0));
        let mut comb = u.map(|x| x * ca);
        comb.axpy(cb, &v);
        let lhs = st.apply(&comb).unwrap();
        let mut rhs = st.apply(&u).unwrap().map(|x| x * ca);
        rhs.axpy(cb, &st.apply(&v).unwrap());
        prop_assert!(rel(&lhs, &rhs) < 1e-13);
    }

    #[test]
    fn symmetric_families_assemble_symmetric_matrices(p in params_strategy()) {
        let st = p.realize::<f64>(7).unwrap().stencil;
        let a = DenseMatrix::from_stencil(&st);
        let n = a.n();
        let asym = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (a.get(i, j) - a.get(j, i)).norm())
            .fold(0.0, f64::max);
        match p {
            ProblemParams::ConvectionDiffusion { wx, wy, .. } => {
                if wx.abs() + wy.abs() > 1e-3 {
                    prop_assert!(asym > 0.0);
                }
            }
            ProblemParams::Anisotropic { .. } | ProblemParams::Jumping { .. } => prop_assert!(asym < 1e-13),
            _ => {}
        }
        if matches!(p, ProblemParams::Anisotropic { .. } | ProblemParams::ConvectionDiffusion { .. }) {
            prop_assert!(st.is_constant());
        }
    }

    #[test]
    fn smoothing_error_map_is_linear(p in params_strategy(), seed in any::<u64>(), sweeps in 1usize..4) {
        let st = p.realize::<f64>(7).unwrap().stencil;
        let g = st.grid();
        let spec = SmootherSpec::jacobi(0.6, sweeps).unwrap();
        let (u, v) = (normal_field::<f64>(g, seed, 2), normal_field::<f64>(g, seed, 3));
        let c = C64::new(-0.7, 2.0);
        let mut comb = u.clone();
        comb.axpy(c, &v);
        let lhs = error_propagation_apply(spec, &st, &comb).unwrap();
        let mut rhs = error_propagation_apply(spec, &st, &u).unwrap();
        rhs.axpy(c, &error_propagation_apply(spec, &st, &v).unwrap());
        prop_assert!(rel(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn sine_modes_diagonalize_axis_aligned_smoothers(
        xi in 1e-3f64..1.0,
        omega in 0.2f64..1.2,
        j in 1usize..=7,
        k in 1usize..=7,
    ) {
        let g = Grid::square(7).unwrap();
        for st in [laplacian_5pt::<f64>(g), assemble_anisotropic(xi, 0.0, g).unwrap()] {
            let spec = SmootherSpec::jacobi(omega, 2).unwrap();
            let sym = jacobi_symbol(spec, &st).unwrap();
            let lam = sym.values()[k * g.ext_nx() + j];
            let phi = sine_mode(g, j, k).unwrap();
            let got = error_propagation_apply(spec, &st, &phi).unwrap();
            let want = phi.map(|v| v * lam);
            prop_assert!(got.sub(&want).norm() < 1e-10 * want.norm().max(1.0));
        }
    }

    #[test]
    fn smoother_symbol_is_even_for_symmetric_stencils(seed in 0u64..50, omega in 0.2f64..1.2) {
        let p = ProblemParams::Anisotropic { xi: 0.01 + (seed as f64) / 60.0, theta: seed as f64 * 0.1 };
        let st = p.realize::<f64>(7).unwrap().stencil;
        let sym = jacobi_symbol(SmootherSpec::jacobi(omega, 3).unwrap(), &st).unwrap();
        let (ex, ey) = (st.grid().ext_nx(), st.grid().ext_ny());
        for my in 0..ey {
            for mx in 0..ex {
                let a = sym.values()[my * ex + mx].norm();
                let b = sym.values()[((ey - my) % ey) * ex + (ex - mx) % ex].norm();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partition_labels_cover_and_bound(omega in 0.3f64..1.0, t in 0.2f64..0.8) {
        let g = Grid::square(7).unwrap();
        let sym = jacobi_symbol(SmootherSpec::jacobi(omega, 1).unwrap(), &laplacian_5pt::<f64>(g)).unwrap();
        for mode in [PartitionMode::Box, PartitionMode::Threshold(t)] {
            let Ok(mask) = partition_frequencies(&sym, mode) else { continue };
            prop_assert_eq!(mask.count(Label::B) + mask.count(Label::H), g.ext_len());
            let max_b = sym.values().iter().zip(mask.labels()).filter(|(_, l)| **l == Label::B)
                .map(|(v, _)| v.norm()).fold(0.0, f64::max);
            prop_assert_eq!(mask.mu_b, max_b);
        }
    }

    #[test]
    fn corrector_is_scale_equivariant(g in grid_strategy(), seed in any::<u64>(), depth in 0usize..3, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        let hc = random_corrector(g, depth, seed);
        let r = normal_field::<f64>(g, seed, 4);
        let c = C64::new(re, im);
        let lhs = hc.apply(&r.map(|v| v * c)).unwrap();
        let rhs = hc.apply(&r).unwrap().map(|v| v * c);
        prop_assert!(lhs.sub(&rhs).norm() <= 1e-13 * rhs.norm().max(1e-300));
        // powers of two scale exactly
        let two = C64::new(4.0, 0.0);
        prop_assert_eq!(hc.apply(&r.map(|v| v * two)).unwrap(), hc.apply(&r).unwrap().map(|v| v * two));
    }

    #[test]
    fn corrector_adjoint_identity(g in grid_strategy(), seed in any::<u64>(), depth in 0usize..3) {
        let hc = random_corrector(g, depth, seed);
        let (x, y) = (normal_field::<f64>(g, seed, 5), normal_field::<f64>(g, seed, 6));
        let lhs = y.dot(&hc.apply(&x).unwrap());
        let rhs = hc.adjoint_apply(&y).unwrap().dot(&x);
        prop_assert!((lhs - rhs).norm() < 1e-11 * lhs.norm().max(1.0));
    }

    #[test]
    fn parameter_registry_is_a_partition(lens in prop::collection::vec(0usize..20, 1..8)) {
        let mut p = ParamVector::<f64>::new();
        for (i, &l) in lens.iter().enumerate() {
            p.push(format!("s{i}"), vec![i as f64; l]).unwrap();
        }
        prop_assert!(p.check_registry().is_ok());
        prop_assert_eq!(p.len(), lens.iter().sum::<usize>());
        let mut next = 0;
        for s in p.segments() {
            prop_assert_eq!(s.offset, next);
            next += s.len;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eigenpairs_satisfy_residual_bound(p in params_strategy()) {
        let st = p.realize::<f64>(7).unwrap().stencil;
        let eig = dense_eig(&st).unwrap();
        prop_assert!(eig.residual <= 1e-8, "{:?}: {}", p, eig.residual);
        prop_assert!(eig.condition.is_finite());
    }

    #[test]
    fn hybrid_step_matches_dense_error_propagator(p in params_strategy(), seed in any::<u64>(), sweeps in 0usize..3) {
        let st: Stencil9Field<f64> = p.realize::<f64>(7).unwrap().stencil;
        let g = st.grid();
        let hc = random_corrector(g, 1, seed);
        let spec = SmootherSpec::jacobi(0.7, sweeps).unwrap();
        let sm = Smoother::new(spec, &st).unwrap();
        let zero = Field::zeros(g);
        let got = dense_of(g, |e| {
            let mut u = e.clone();
            hybrid_step(&st, &sm, &hc, &mut u, &zero).unwrap();
            u
        });
        // independent oracle: dense (I - H A)(I - w D^-1 A)^M
        let a = DenseMatrix::from_stencil(&st);
        let h = dense_of(g, |x| hc.apply(x).unwrap());
        let n = g.len();
        let diag = st.diagonal();
        let mut eb = DenseMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                eb.set(i, j, eb.get(i, j) - a.get(i, j) * 0.7 / diag[i]);
            }
        }
        let mut want = DenseMatrix::identity(n);
        for _ in 0..sweeps {
            want = matmul(&eb, &want);
        }
        let ha = matmul(&h, &a);
        let mut ih = DenseMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                ih.set(i, j, ih.get(i, j) - ha.get(i, j));
            }
        }
        let want = matmul(&ih, &want);
        let scale = want.frobenius().max(1.0);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((got.get(i, j) - want.get(i, j)).norm() < 1e-11 * scale);
            }
        }
    }

    #[test]
    fn loss_is_invariant_to_rhs_scaling(seed in 0u64..100, re in -50.0f64..50.0, im in -50.0f64..50.0) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        let g = Grid::square(7).unwrap();
        let spec = ModelSpec::new(fns_core::corrector::Variant::Conv, Mode::Direct, SmootherSpec::jacobi(0.7, 2).unwrap());
        let m = Model::new(spec, g).unwrap();
        let mut p = m.init_params::<f64>(seed);
        p.values_mut().iter_mut().step_by(2).for_each(|v| *v += 0.5);
        let inst = ProblemParams::RandomDiffusion { seed }.realize::<f64>(7).unwrap();
        let mut items = vec![TrainItem::new(&m, &inst, seed).unwrap()];
        let a = loss(&m, &p, &items, 2).unwrap();
        let c = C64::new(re, im);
        items[0].rhs = items[0].rhs.map(|v| v * c);
        let b = loss(&m, &p, &items, 2).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * a.max(1e-300));
    }
}

#[test]
fn unit_anisotropy_equals_unit_diffusion() {
    let g = Grid::square(15).unwrap();
    let a = assemble_anisotropic::<f64>(1.0, 0.3, g).unwrap();
    let b = assemble_random_diffusion(&ElementCoefficient::constant(15, 1.0), g).unwrap();
    for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).norm() < 1e-14);
        }
    }
}
