//! Counter-style random streams: every `(seed, stream)` pair is independent
//! and reproducible regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::{Field, Grid};
use crate::scalar::{Real, C};

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Real field with i.i.d. standard normal node values.
pub fn normal_field<T: Real>(grid: Grid, seed: u64, stream: u64) -> Field<T> {
    let mut rng = stream_rng(seed, stream);
    let values = (0..grid.len())
        .map(|_| C::new(standard_normal(&mut rng), T::zero()))
        .collect();
    Field::from_values(grid, values).expect("length matches grid")
}
