use super::*;
use crate::corrector::Variant;
use crate::grid::Grid;
use crate::pde::{PdeKind, ProblemParams};
use crate::relax::SmootherSpec;
use crate::rng::standard_normal;

fn poisson_item(model: &Model, n: usize, seed: u64) -> TrainItem<f64> {
    let inst = ProblemParams::Poisson1d.realize::<f64>(n).unwrap();
    TrainItem::new(model, &inst, seed).unwrap()
}

fn model(variant: Variant, mode: Mode, grid: Grid, sweeps: usize) -> Model {
    let mut spec = ModelSpec::new(variant, mode, SmootherSpec::jacobi(2.0 / 3.0, sweeps).unwrap());
    spec.kernel_size = 3;
    spec.hidden = 4;
    Model::new(spec, grid).unwrap()
}

fn perturbed(m: &Model, seed: u64, gain: f64) -> ParamVector<f64> {
    let mut p = m.init_params::<f64>(seed);
    let mut rng = stream_rng(seed, 99);
    for s in p.segments().to_vec() {
        let bump = if s.name.ends_with(".lambda") { gain } else { 0.0 };
        for (j, v) in p.values_mut()[s.range()].iter_mut().enumerate() {
            let re_part = if j % 2 == 0 { bump } else { 0.0 };
            *v += re_part + 0.1 * standard_normal::<f64>(&mut rng);
        }
        if s.name.ends_with("meta_lambda.b2") {
            p.values_mut()[s.offset] += 0.7;
        }
    }
    p
}

fn fd_check(m: &Model, items: &[TrainItem<f64>], p: &ParamVector<f64>, k: usize) {
    let (_, g) = grad(m, p, items, k).unwrap();
    let mut rng = stream_rng(5, 5);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d: Vec<f64> = (0..p.len()).map(|_| standard_normal(&mut rng)).collect();
        let shift = |s: f64| {
            let v = p.values().iter().zip(&d).map(|(a, b)| a + s * b).collect();
            p.with_values(v).unwrap()
        };
        let fd = (loss(m, &shift(eps), items, k).unwrap() - loss(m, &shift(-eps), items, k).unwrap()) / (2.0 * eps);
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        worst = worst.max((fd - an).abs() / an.abs().max(1e-8));
    }
    assert!(worst < 1e-5, "worst relative mismatch {worst}");
}

fn diffusion_items(m: &Model, n: usize, count: u64) -> Vec<TrainItem<f64>> {
    let fam = crate::pde::Family::new(PdeKind::RandomDiffusion);
    (0..count)
        .map(|i| {
            let inst = fam.sample(3, i).realize::<f64>(n).unwrap();
            TrainItem::new(m, &inst, 100 + i).unwrap()
        })
        .collect()
}

fn jumping_items(m: &Model, n: usize) -> Vec<TrainItem<f64>> {
    let inst = ProblemParams::Jumping {
        seed: 4,
        blocks: 4,
        m: 2.0,
    }
    .realize::<f64>(n)
    .unwrap();
    vec![TrainItem::new(m, &inst, 7).unwrap()]
}

#[test]
fn exact_gain_gives_zero_loss_and_stationarity() {
    let g = Grid::line(31).unwrap();
    let m = model(Variant::Diagonal, Mode::Direct, g, 0);
    let mut p = m.init_params::<f64>(0);
    for (j, v) in p.get_mut("h0.lambda").unwrap().iter_mut().enumerate() {
        *v = if j % 2 == 0 { 1.0 } else { 0.0 };
    }
    let items = vec![poisson_item(&m, 31, 1)];
    let (l, gr) = grad(&m, &p, &items, 1).unwrap();
    assert!(l < 1e-9, "{l}");
    let gn = gr.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(gn < 1e-7, "{gn}");
}

#[test]
fn zero_corrector_without_smoothing_has_unit_loss() {
    let g = Grid::line(15).unwrap();
    let m = model(Variant::Diagonal, Mode::Direct, g, 0);
    let p = m.init_params::<f64>(0);
    let items = vec![poisson_item(&m, 15, 2)];
    for k in [1, 3] {
        assert!((loss(&m, &p, &items, k).unwrap() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn loss_ignores_rhs_scale() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::Conv, Mode::Direct, g, 2);
    let p = perturbed(&m, 1, 0.8);
    let mut items = diffusion_items(&m, 15, 1);
    let a = loss(&m, &p, &items, 2).unwrap();
    items[0].rhs = items[0].rhs.map(|v| v * -250.0);
    let b = loss(&m, &p, &items, 2).unwrap();
    assert!((a - b).abs() < 1e-12 * a);
}

#[test]
fn zero_rhs_rejected() {
    let g = Grid::line(7).unwrap();
    let m = model(Variant::Diagonal, Mode::Direct, g, 1);
    let mut it = poisson_item(&m, 7, 0);
    it.rhs = Field::zeros(g);
    assert!(matches!(loss(&m, &m.init_params(0), &[it], 1), Err(Error::ZeroRhs)));
}

#[test]
fn gradient_diagonal_direct() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::Diagonal, Mode::Direct, g, 2);
    fd_check(&m, &diffusion_items(&m, 15, 2), &perturbed(&m, 2, 0.8), 2);
}

#[test]
fn gradient_conv_direct() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::Conv, Mode::Direct, g, 2);
    fd_check(&m, &diffusion_items(&m, 15, 1), &perturbed(&m, 3, 0.8), 2);
}

#[test]
fn gradient_region_split_direct() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::RegionSplit, Mode::Direct, g, 2);
    fd_check(&m, &jumping_items(&m, 15), &perturbed(&m, 4, 0.8), 2);
}

#[test]
fn gradient_meta_conv() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::Conv, Mode::Meta, g, 2);
    fd_check(&m, &diffusion_items(&m, 15, 1), &perturbed(&m, 5, 0.0), 2);
}

#[test]
fn gradient_meta_region_split() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::RegionSplit, Mode::Meta, g, 1);
    fd_check(&m, &jumping_items(&m, 15), &perturbed(&m, 6, 0.0), 1);
}

#[test]
fn gain_gradient_vanishes_where_symbol_is_cut() {
    let g = Grid::line(15).unwrap();
    let m = model(Variant::Diagonal, Mode::Direct, g, 1);
    let items = vec![poisson_item(&m, 15, 3)];
    let p = perturbed(&m, 7, 0.5);
    let (_, gr) = grad(&m, &p, &items, 2).unwrap();
    // bin 0 has a zero symbol for the 1D Laplacian
    assert_eq!(gr[0], 0.0);
    assert_eq!(gr[1], 0.0);
}

#[test]
fn schedule_halves_and_deepens() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.schedule(1), (1e-4, 1));
    assert_eq!(cfg.schedule(100), (1e-4, 1));
    assert_eq!(cfg.schedule(101), (0.5e-4, 2));
    assert_eq!(cfg.schedule(201), (0.25e-4, 3));
    assert_eq!(cfg.steps_per_epoch(25), 3);
    assert!(TrainConfig {
        batch_size: 0,
        ..cfg.clone()
    }
    .validate()
    .is_err());
}

fn poisson_training(seed: u64) -> (Model, TrainResult<f64>) {
    let g = Grid::line(31).unwrap();
    let m = model(Variant::Diagonal, Mode::Direct, g, 2);
    let items: Vec<_> = (0..10).map(|i| poisson_item(&m, 31, 40 + i)).collect();
    let cfg = TrainConfig {
        batch_size: 5,
        epochs: 250,
        lr: 2e-2,
        seed,
        ..TrainConfig::default()
    };
    let res = train(&m, m.init_params(seed), &items, &cfg, |_, _| Ok(())).unwrap();
    (m, res)
}

#[test]
fn poisson_training_learns_reciprocal_eigenvalues() {
    let (m, res) = poisson_training(11);
    let last = res.history.last().unwrap();
    assert!(last.loss < 0.1, "{}", last.loss);
    assert_eq!(res.history[100].k, 2);
    // corrector-side modes (|theta| < pi/2) carry gains near one
    let g = m.grid();
    let gains = res.params.get("h0.lambda").unwrap();
    for j in 1..g.n().div_ceil(2) {
        let gain = (gains[2 * j].powi(2) + gains[2 * j + 1].powi(2)).sqrt();
        assert!((gain - 1.0).abs() < 0.2, "mode {j}: gain {gain}");
    }
}

#[test]
fn training_is_deterministic() {
    let (_, a) = poisson_training(12);
    let (_, b) = poisson_training(12);
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn transfer_keeps_layout_and_interpolates() {
    let g = Grid::square(15).unwrap();
    let m = model(Variant::Conv, Mode::Direct, g, 1);
    let mut p = m.init_params::<f64>(0);
    for (j, v) in p.get_mut("h0.lambda").unwrap().iter_mut().enumerate() {
        *v = if j % 2 == 0 { 2.0 } else { -1.0 };
    }
    let (m2, p2) = m.transfer(&p, Grid::square(31).unwrap()).unwrap();
    assert_eq!(m2.grid().n(), 31);
    assert_eq!(p2.get("h0.lambda").unwrap().len(), 2 * 64 * 64);
    assert!(p2
        .get("h0.lambda")
        .unwrap()
        .chunks(2)
        .all(|c| (c[0] - 2.0).abs() < 1e-14 && (c[1] + 1.0).abs() < 1e-14));
    assert_eq!(p2.get("h0.kernel0").unwrap(), p.get("h0.kernel0").unwrap());
}
