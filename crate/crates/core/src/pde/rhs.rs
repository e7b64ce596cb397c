use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::rng::normal_field;
use crate::scalar::{Real, C};

use super::stencil::Stencil9Field;

/// Right-hand sides used for the generalization study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RhsKind {
    /// `sin(pi x) sin(3 pi y)`
    F1,
    /// `exp(-200 ((x - 0.6)^2 + (y - 0.55)^2))`
    F2,
    /// constant one
    F3,
    /// `A u` for a standard normal `u`
    F4,
}

impl RhsKind {
    pub const ALL: [RhsKind; 4] = [RhsKind::F1, RhsKind::F2, RhsKind::F3, RhsKind::F4];

    pub fn name(&self) -> &'static str {
        match self {
            RhsKind::F1 => "f1",
            RhsKind::F2 => "f2",
            RhsKind::F3 => "f3",
            RhsKind::F4 => "f4",
        }
    }
}

impl FromStr for RhsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(RhsKind::F1),
            "f2" => Ok(RhsKind::F2),
            "f3" => Ok(RhsKind::F3),
            "f4" => Ok(RhsKind::F4),
            other => Err(Error::InvalidConfig(format!("unknown right-hand side '{other}'"))),
        }
    }
}

/// Pointwise source values (f4 is already a discrete operator image).
pub fn make_rhs<T: Real>(kind: RhsKind, grid: Grid, stencil: Option<&Stencil9Field<T>>, seed: u64) -> Result<Field<T>> {
    let l = T::lit;
    let re = |v: T| C::new(v, T::zero());
    match kind {
        RhsKind::F1 => Ok(Field::from_fn(grid, |x, y| {
            re((T::PI() * x).sin() * (l(3.0) * T::PI() * y).sin())
        })),
        RhsKind::F2 => Ok(Field::from_fn(grid, |x, y| {
            let (dx, dy) = (x - l(0.6), y - l(0.55));
            re((l(-200.0) * (dx * dx + dy * dy)).exp())
        })),
        RhsKind::F3 => Ok(Field::from_fn(grid, |_, _| re(T::one()))),
        RhsKind::F4 => {
            let a =
                stencil.ok_or_else(|| Error::InvalidConfig("the random right-hand side needs an operator".into()))?;
            a.apply(&normal_field(grid, seed, 0))
        }
    }
}

/// Right-hand side of the stored system `S u = h^2 f`.
pub fn system_rhs<T: Real>(kind: RhsKind, grid: Grid, stencil: &Stencil9Field<T>, seed: u64) -> Result<Field<T>> {
    let f = make_rhs(kind, grid, Some(stencil), seed)?;
    Ok(match kind {
        RhsKind::F4 => f,
        _ => {
            let h = grid.h::<T>();
            f.map(|v| v * (h * h))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::stencil::laplacian_5pt;

    #[test]
    fn single_frequency_at_centre() {
        let g = Grid::square(7).unwrap();
        let f = make_rhs::<f64>(RhsKind::F1, g, None, 0).unwrap();
        let centre = f.values()[g.index(3, 3)];
        assert!((centre.re + 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_and_gaussian_peak() {
        let g = Grid::square(19).unwrap(); // h = 0.05, node (11, 10) at (0.6, 0.55)
        let f3 = make_rhs::<f64>(RhsKind::F3, g, None, 0).unwrap();
        assert!(f3.values().iter().all(|v| *v == C::new(1.0, 0.0)));
        let f2 = make_rhs::<f64>(RhsKind::F2, g, None, 0).unwrap();
        assert!((f2.values()[g.index(11, 10)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_rhs_needs_operator_and_is_seeded() {
        let g = Grid::square(7).unwrap();
        assert!(make_rhs::<f64>(RhsKind::F4, g, None, 0).is_err());
        let s = laplacian_5pt::<f64>(g);
        let a = make_rhs(RhsKind::F4, g, Some(&s), 4).unwrap();
        let b = make_rhs(RhsKind::F4, g, Some(&s), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parses_names() {
        for k in RhsKind::ALL {
            assert_eq!(k.name().parse::<RhsKind>().unwrap(), k);
        }
        assert!("f5".parse::<RhsKind>().is_err());
    }
}
