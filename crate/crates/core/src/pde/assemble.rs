use crate::error::{Error, Result};
use crate::grid::{Dim, Grid};
use crate::scalar::{czero, Real, C};

use super::coefficient::{ElementCoefficient, NodalCoefficient};
use super::stencil::{from_rows, Coeffs, Stencil9Field};

fn check_2d(grid: Grid) -> Result<()> {
    match grid.dim() {
        Dim::Two => Ok(()),
        Dim::One => Err(Error::InvalidGrid("assembly needs a 2D grid".into())),
    }
}

fn check_positive<T: Real>(values: &[T]) -> Result<()> {
    match values.iter().position(|&v| !(v > T::zero())) {
        Some(index) => Err(Error::NonPositiveCoefficient {
            index,
            value: values[index].to_f64_lossy(),
        }),
        None => Ok(()),
    }
}

fn re<T: Real>(v: T) -> C<T> {
    C::new(v, T::zero())
}

/// Bilinear FEM stencil of `-div(a grad u)` with element-wise `a`.
pub fn assemble_random_diffusion<T: Real>(a: &ElementCoefficient<T>, grid: Grid) -> Result<Stencil9Field<T>> {
    check_2d(grid)?;
    if a.n() != grid.n() {
        return Err(Error::GridMismatch {
            expected: grid.describe(),
            found: format!("element coefficient for n={}", a.n()),
        });
    }
    check_positive(a.values())?;
    let third = T::one() / T::lit(3.0);
    let sixth = T::one() / T::lit(6.0);
    let two_thirds = T::lit(2.0) * third;
    let coeffs = (0..grid.len())
        .map(|idx| {
            let (ix, iy) = grid.position(idx);
            let a1 = a.get(ix + 1, iy); // lower right
            let a2 = a.get(ix + 1, iy + 1); // upper right
            let a3 = a.get(ix, iy); // lower left
            let a4 = a.get(ix, iy + 1); // upper left
            let mut c: Coeffs<T> = [czero(); 9];
            c[0] = re(-a4 * third);
            c[1] = re(-(a2 + a4) * sixth);
            c[2] = re(-a2 * third);
            c[3] = re(-(a3 + a4) * sixth);
            c[4] = re(two_thirds * (a1 + a2 + a3 + a4));
            c[5] = re(-(a1 + a2) * sixth);
            c[6] = re(-a3 * third);
            c[7] = re(-(a1 + a3) * sixth);
            c[8] = re(-a1 * third);
            c
        })
        .collect();
    Stencil9Field::from_coeffs(grid, coeffs)
}

/// Entries `(c1, c2, c3, c4)` of `R(theta) diag(1, xi) R(theta)^T`.
pub fn anisotropy_tensor<T: Real>(xi: T, theta: T) -> (T, T, T, T) {
    let (s, c) = theta.sin_cos();
    let c1 = c * c + xi * s * s;
    let off = c * s * (T::one() - xi);
    let c4 = s * s + xi * c * c;
    (c1, off, off, c4)
}

/// Bilinear FEM stencil of the rotated anisotropic diffusion operator.
pub fn assemble_anisotropic<T: Real>(xi: T, theta: T, grid: Grid) -> Result<Stencil9Field<T>> {
    check_2d(grid)?;
    if !(xi > T::zero()) || !xi.is_finite() {
        return Err(Error::DomainError(format!(
            "anisotropy strength must be positive, got {xi}"
        )));
    }
    if !theta.is_finite() {
        return Err(Error::DomainError("anisotropy angle must be finite".into()));
    }
    let (c1, c2, c3, c4) = anisotropy_tensor(xi, theta);
    let l = T::lit;
    let sx = [
        [l(-1.0 / 6.0), l(1.0 / 3.0), l(-1.0 / 6.0)],
        [l(-2.0 / 3.0), l(4.0 / 3.0), l(-2.0 / 3.0)],
        [l(-1.0 / 6.0), l(1.0 / 3.0), l(-1.0 / 6.0)],
    ];
    let sxy = [
        [l(-0.25), T::zero(), l(0.25)],
        [T::zero(), T::zero(), T::zero()],
        [l(0.25), T::zero(), l(-0.25)],
    ];
    let sy = [
        [l(-1.0 / 6.0), l(-2.0 / 3.0), l(-1.0 / 6.0)],
        [l(1.0 / 3.0), l(4.0 / 3.0), l(1.0 / 3.0)],
        [l(-1.0 / 6.0), l(-2.0 / 3.0), l(-1.0 / 6.0)],
    ];
    let mut rows = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for k in 0..3 {
            rows[r][k] = c1 * sx[r][k] + (c2 + c3) * sxy[r][k] + c4 * sy[r][k];
        }
    }
    Ok(Stencil9Field::constant(grid, from_rows(rows)))
}

/// Element Peclet number `|w| h / (2 eps)`.
pub fn peclet<T: Real>(eps: T, wx: T, wy: T, h: T) -> T {
    wx.hypot(wy) * h / (T::lit(2.0) * eps)
}

/// Streamline-diffusion parameter for one element.
pub fn streamline_delta<T: Real>(eps: T, wx: T, wy: T, h: T) -> T {
    let p = peclet(eps, wx, wy, h);
    if p > T::one() {
        h / (T::lit(2.0) * wx.hypot(wy)) * (T::one() - T::one() / p)
    } else {
        T::zero()
    }
}

/// Streamline-diffusion bilinear FEM stencil with constant wind.
///
/// The Galerkin convection block carries the factor `h/12` of the element
/// integrals; diffusion and stabilization blocks are scale free.
pub fn assemble_convection_diffusion<T: Real>(eps: T, wx: T, wy: T, grid: Grid) -> Result<Stencil9Field<T>> {
    check_2d(grid)?;
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::DomainError(format!("viscosity must be positive, got {eps}")));
    }
    let h = grid.h::<T>();
    let delta = streamline_delta(eps, wx, wy, h);
    let l = T::lit;
    let e3 = eps / l(3.0);
    let diff = [[-e3, -e3, -e3], [-e3, l(8.0) * e3, -e3], [-e3, -e3, -e3]];
    let s = h / l(12.0);
    let four = l(4.0);
    let conv = [
        [s * (-wx + wy), s * four * wy, s * (wx + wy)],
        [-s * four * wx, T::zero(), s * four * wx],
        [-s * (wx + wy), -s * four * wy, s * (wx - wy)],
    ];
    let (xx, yy, xy) = (wx * wx, wy * wy, wx * wy);
    let corner_a = l(-1.0 / 6.0) * (xx + yy) + l(0.5) * xy;
    let corner_b = l(-1.0 / 6.0) * (xx + yy) - l(0.5) * xy;
    let ns = l(1.0 / 3.0) * xx - l(2.0 / 3.0) * yy;
    let ew = l(-2.0 / 3.0) * xx + l(1.0 / 3.0) * yy;
    let sd = [
        [corner_a, ns, corner_b],
        [ew, l(4.0 / 3.0) * (xx + yy), ew],
        [corner_b, ns, corner_a],
    ];
    let mut rows = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for k in 0..3 {
            rows[r][k] = diff[r][k] + conv[r][k] + delta * sd[r][k];
        }
    }
    Ok(Stencil9Field::constant(grid, from_rows(rows)))
}

/// Harmonic-average edge weight `-2ab/(a+b)`.
pub fn harmonic_weight<T: Real>(a: T, b: T) -> T {
    -(T::lit(2.0) * a * b) / (a + b)
}

/// Cell-centred finite-volume 5-point stencil with harmonic face averages.
pub fn assemble_jumping<T: Real>(a: &NodalCoefficient<T>, grid: Grid) -> Result<Stencil9Field<T>> {
    check_2d(grid)?;
    if a.n() != grid.n() {
        return Err(Error::GridMismatch {
            expected: grid.describe(),
            found: format!("nodal coefficient for n={}", a.n()),
        });
    }
    check_positive(a.values())?;
    let coeffs = (0..grid.len())
        .map(|idx| {
            let (ix, iy) = grid.position(idx);
            let (px, py) = (ix + 1, iy + 1);
            let here = a.get(px, py);
            let sw = harmonic_weight(a.get(px - 1, py), here);
            let se = harmonic_weight(a.get(px + 1, py), here);
            let sn = harmonic_weight(a.get(px, py + 1), here);
            let ss = harmonic_weight(a.get(px, py - 1), here);
            let mut c: Coeffs<T> = [czero(); 9];
            c[1] = re(sn);
            c[3] = re(sw);
            c[4] = re(-(sn + ss + se + sw));
            c[5] = re(se);
            c[7] = re(ss);
            c
        })
        .collect();
    Stencil9Field::from_coeffs(grid, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;

    fn grid7() -> Grid {
        Grid::square(7).unwrap()
    }

    fn bilinear_unit() -> [f64; 9] {
        let t = -1.0 / 3.0;
        [t, t, t, t, 8.0 / 3.0, t, t, t, t]
    }

    fn assert_coeffs(c: &Coeffs<f64>, want: &[f64; 9], tol: f64) {
        for k in 0..9 {
            assert!(
                (c[k] - C::new(want[k], 0.0)).norm() < tol,
                "entry {k}: {} vs {}",
                c[k],
                want[k]
            );
        }
    }

    #[test]
    fn unit_diffusion_stencil() {
        let a = ElementCoefficient::constant(7, 1.0);
        let s = assemble_random_diffusion(&a, grid7()).unwrap();
        assert!(s.is_constant());
        assert_coeffs(s.at(0), &bilinear_unit(), 1e-15);
    }

    #[test]
    fn diffusion_scales_linearly_and_rows_sum_to_zero() {
        let a = ElementCoefficient::constant(7, 2.5);
        let s = assemble_random_diffusion(&a, grid7()).unwrap();
        let want = bilinear_unit().map(|v| 2.5 * v);
        assert_coeffs(s.at(10), &want, 1e-14);
        let vals: Vec<f64> = (0..64).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        let a = ElementCoefficient::new(7, vals).unwrap();
        let s = assemble_random_diffusion(&a, grid7()).unwrap();
        let sum: C<f64> = s.at(grid7().index(3, 3)).iter().sum();
        assert!(sum.norm() < 1e-14);
    }

    #[test]
    fn diffusion_rejects_non_positive() {
        let mut vals = vec![1.0; 64];
        vals[5] = 0.0;
        let a = ElementCoefficient::new(7, vals).unwrap();
        assert!(matches!(
            assemble_random_diffusion(&a, grid7()),
            Err(Error::NonPositiveCoefficient { index: 5, .. })
        ));
    }

    #[test]
    fn isotropic_limit_matches_bilinear_laplacian() {
        for theta in [0.0, 0.3, 1.2, 3.0] {
            let s = assemble_anisotropic(1.0, theta, grid7()).unwrap();
            assert_coeffs(s.at(0), &bilinear_unit(), 1e-15);
        }
    }

    #[test]
    fn anisotropy_tensor_at_zero_angle() {
        let (c1, c2, c3, c4) = anisotropy_tensor(0.3f64, 0.0);
        assert_eq!((c1, c2, c3, c4), (1.0, 0.0, 0.0, 0.3));
    }

    #[test]
    fn quarter_turn_transposes_stencil() {
        let a = assemble_anisotropic(1e-3, 0.0, grid7()).unwrap();
        let b = assemble_anisotropic(1e-3, std::f64::consts::FRAC_PI_2, grid7()).unwrap();
        let (ca, cb) = (a.at(0), b.at(0));
        // transpose: (r, k) -> (k, r) with rows north-first and columns west-first
        for r in 0..3 {
            for k in 0..3 {
                let t = 3 * (2 - k) + (2 - r);
                assert!((ca[3 * r + k] - cb[t]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn anisotropic_rejects_bad_strength() {
        assert!(matches!(
            assemble_anisotropic(0.0, 0.1, grid7()),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn stabilization_off_for_small_peclet() {
        assert_eq!(streamline_delta(1.0, 1.0, 0.0, 1.0 / 64.0), 0.0);
        assert!((peclet(1.0f64, 1.0, 0.0, 1.0 / 64.0) - 1.0 / 128.0).abs() < 1e-16);
    }

    #[test]
    fn stabilization_for_convection_dominated() {
        let h = 1.0 / 64.0;
        let p = peclet(1e-8f64, 1.0, 0.0, h);
        assert!((p - 781_250.0).abs() < 1e-6);
        let d = streamline_delta(1e-8f64, 1.0, 0.0, h);
        let want = (h / 2.0) * (1.0 - 1.0 / 781_250.0);
        assert!((d - want).abs() < 1e-15);
        assert!((d - 7.81249e-3).abs() < 1e-8);
    }

    #[test]
    fn zero_wind_is_pure_diffusion() {
        let s = assemble_convection_diffusion(0.5, 0.0, 0.0, grid7()).unwrap();
        let want = bilinear_unit().map(|v| 0.5 * v);
        assert_coeffs(s.at(0), &want, 1e-15);
        assert!(matches!(
            assemble_convection_diffusion(0.0, 1.0, 0.0, grid7()),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn unit_jumping_is_five_point() {
        let a = NodalCoefficient::constant(7, 1.0);
        let s = assemble_jumping(&a, grid7()).unwrap();
        assert_coeffs(s.at(9), &[0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0], 1e-15);
    }

    #[test]
    fn harmonic_weight_across_jump() {
        let w: f64 = harmonic_weight(1.0, 1e-8);
        assert!((w - (-2e-8 / (1.0 + 1e-8))).abs() < 1e-22);
    }

    #[test]
    fn jumping_centre_balances_edges() {
        let g = grid7();
        let vals: Vec<f64> = (0..81).map(|i| if (i / 3) % 2 == 0 { 1.0 } else { 1e-6 }).collect();
        let a = NodalCoefficient::new(7, vals).unwrap();
        let s = assemble_jumping(&a, g).unwrap();
        for c in s.coeffs() {
            let edges = c[1] + c[3] + c[5] + c[7];
            assert!((c[4] + edges).norm() <= 1e-15 * c[4].norm());
            assert_eq!(c[0] + c[2] + c[6] + c[8], C::new(0.0, 0.0));
        }
        let u = Field::from_fn(g, |x, _| C::new(x, 0.0));
        assert!(s.apply(&u).is_ok());
    }
}
