//! Compact parameter-to-corrector networks on the frequency lattice.
//!
//! Both maps start with a periodic `k x k` real convolution (with bias)
//! followed by a softplus. Meta-λ then applies a `1 x 1` convolution to two
//! output planes read as a complex gain; Meta-T averages the hidden planes
//! and maps them affinely to kernel corrections.

use crate::scalar::Real;

/// Shape of one periodic real convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub kx: usize,
    pub ky: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.kx * self.ky
    }

    #[inline]
    fn w_index(&self, o: usize, i: usize, t: usize) -> usize {
        (o * self.c_in + i) * self.kx * self.ky + t
    }

    fn tap(&self, t: usize) -> (isize, isize) {
        let (rx, ry) = ((self.kx / 2) as isize, (self.ky / 2) as isize);
        ((t % self.kx) as isize - rx, (t / self.kx) as isize - ry)
    }
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// `out[o][m] = b[o] + sum_{i,d} w[o][i][d] x[i][m + d]` with periodic wrap.
pub fn conv_forward<T: Real>(shape: ConvShape, w: &[T], b: &[T], x: &[Vec<T>], nx: usize, ny: usize) -> Vec<Vec<T>> {
    let mut out = vec![vec![T::zero(); nx * ny]; shape.c_out];
    for (o, plane) in out.iter_mut().enumerate() {
        plane.iter_mut().for_each(|v| *v = b[o]);
        for (i, xi) in x.iter().enumerate() {
            for t in 0..shape.kx * shape.ky {
                let wv = w[shape.w_index(o, i, t)];
                if wv == T::zero() {
                    continue;
                }
                let (dx, dy) = shape.tap(t);
                for my in 0..ny {
                    let qy = wrap(my as isize + dy, ny);
                    for mx in 0..nx {
                        let q = qy * nx + wrap(mx as isize + dx, nx);
                        plane[my * nx + mx] = plane[my * nx + mx] + wv * xi[q];
                    }
                }
            }
        }
    }
    out
}

/// Weight, bias and (optionally) input gradients of [`conv_forward`].
pub fn conv_backward<T: Real>(
    shape: ConvShape,
    w: &[T],
    x: &[Vec<T>],
    g_out: &[Vec<T>],
    nx: usize,
    ny: usize,
    want_input: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<Vec<T>>>) {
    let mut gw = vec![T::zero(); shape.weight_len()];
    let gb: Vec<T> = g_out.iter().map(|g| g.iter().copied().sum()).collect();
    let mut gx = want_input.then(|| vec![vec![T::zero(); nx * ny]; shape.c_in]);
    for (o, go) in g_out.iter().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            for t in 0..shape.kx * shape.ky {
                let (dx, dy) = shape.tap(t);
                let widx = shape.w_index(o, i, t);
                let mut acc = T::zero();
                for my in 0..ny {
                    let qy = wrap(my as isize + dy, ny);
                    for mx in 0..nx {
                        let q = qy * nx + wrap(mx as isize + dx, nx);
                        let g = go[my * nx + mx];
                        acc = acc + g * xi[q];
                        if let Some(gx) = gx.as_mut() {
                            gx[i][q] = gx[i][q] + g * w[widx];
                        }
                    }
                }
                gw[widx] = acc;
            }
        }
    }
    (gw, gb, gx)
}

/// `ln(1 + e^x)`, evaluated without overflow.
fn softplus_scalar<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

// A smooth rectifier keeps the loss differentiable everywhere, so central
// differences check the gradient at any point instead of near ReLU kinks.
fn softplus<T: Real>(planes: &[Vec<T>]) -> Vec<Vec<T>> {
    planes
        .iter()
        .map(|p| p.iter().map(|&v| softplus_scalar(v)).collect())
        .collect()
}

fn softplus_backward<T: Real>(pre: &[Vec<T>], g: &mut [Vec<T>]) {
    for (p, gp) in pre.iter().zip(g.iter_mut()) {
        for (v, gv) in p.iter().zip(gp.iter_mut()) {
            *gv = *gv * sigmoid(*v);
        }
    }
}

/// Layer shapes of the gain network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaLambdaShape {
    pub first: ConvShape,
    pub hidden: usize,
}

impl MetaLambdaShape {
    pub fn new(c_in: usize, hidden: usize, kx: usize, ky: usize) -> Self {
        Self {
            first: ConvShape {
                c_in,
                c_out: hidden,
                kx,
                ky,
            },
            hidden,
        }
    }

    /// `(w1, b1, w2, b2)` lengths.
    pub fn lens(&self) -> [usize; 4] {
        [self.first.weight_len(), self.hidden, 2 * self.hidden, 2]
    }
}

/// Forward cache of the gain network.
#[derive(Clone, Debug)]
pub struct MetaLambdaCache<T> {
    pre: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
}

/// Returns the two output planes (real and imaginary gain).
pub fn meta_lambda_forward<T: Real>(
    shape: MetaLambdaShape,
    p: [&[T]; 4],
    x: &[Vec<T>],
    nx: usize,
    ny: usize,
) -> ([Vec<T>; 2], MetaLambdaCache<T>) {
    let pre = conv_forward(shape.first, p[0], p[1], x, nx, ny);
    let hidden = softplus(&pre);
    let second = ConvShape {
        c_in: shape.hidden,
        c_out: 2,
        kx: 1,
        ky: 1,
    };
    let mut out = conv_forward(second, p[2], p[3], &hidden, nx, ny);
    let im = out.pop().expect("two planes");
    let re = out.pop().expect("two planes");
    ([re, im], MetaLambdaCache { pre, hidden })
}

/// Gradients `(w1, b1, w2, b2)` given gradients of both output planes.
pub fn meta_lambda_backward<T: Real>(
    shape: MetaLambdaShape,
    p: [&[T]; 4],
    x: &[Vec<T>],
    cache: &MetaLambdaCache<T>,
    g_out: [Vec<T>; 2],
    nx: usize,
    ny: usize,
) -> [Vec<T>; 4] {
    let second = ConvShape {
        c_in: shape.hidden,
        c_out: 2,
        kx: 1,
        ky: 1,
    };
    let g_out = g_out.to_vec();
    let (gw2, gb2, gh) = conv_backward(second, p[2], &cache.hidden, &g_out, nx, ny, true);
    let mut gh = gh.expect("input gradient requested");
    softplus_backward(&cache.pre, &mut gh);
    let (gw1, gb1, _) = conv_backward(shape.first, p[0], x, &gh, nx, ny, false);
    [gw1, gb1, gw2, gb2]
}

/// Layer shapes of the kernel network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaTShape {
    pub first: ConvShape,
    pub hidden: usize,
    pub outputs: usize,
}

impl MetaTShape {
    pub fn new(c_in: usize, hidden: usize, kx: usize, ky: usize, outputs: usize) -> Self {
        Self {
            first: ConvShape {
                c_in,
                c_out: hidden,
                kx,
                ky,
            },
            hidden,
            outputs,
        }
    }

    /// `(w1, b1, wa, ba)` lengths.
    pub fn lens(&self) -> [usize; 4] {
        [
            self.first.weight_len(),
            self.hidden,
            self.outputs * self.hidden,
            self.outputs,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct MetaTCache<T> {
    pre: Vec<Vec<T>>,
    pooled: Vec<T>,
}

/// Returns the affine outputs (kernel corrections).
pub fn meta_t_forward<T: Real>(
    shape: MetaTShape,
    p: [&[T]; 4],
    x: &[Vec<T>],
    nx: usize,
    ny: usize,
) -> (Vec<T>, MetaTCache<T>) {
    let pre = conv_forward(shape.first, p[0], p[1], x, nx, ny);
    let inv = T::one() / T::from_usize_lossy(nx * ny);
    let pooled: Vec<T> = softplus(&pre)
        .iter()
        .map(|h| h.iter().copied().sum::<T>() * inv)
        .collect();
    let out = (0..shape.outputs)
        .map(|o| {
            let row = &p[2][o * shape.hidden..(o + 1) * shape.hidden];
            row.iter().zip(&pooled).fold(p[3][o], |acc, (w, s)| acc + *w * *s)
        })
        .collect();
    (out, MetaTCache { pre, pooled })
}

pub fn meta_t_backward<T: Real>(
    shape: MetaTShape,
    p: [&[T]; 4],
    x: &[Vec<T>],
    cache: &MetaTCache<T>,
    g_out: &[T],
    nx: usize,
    ny: usize,
) -> [Vec<T>; 4] {
    let mut gwa = vec![T::zero(); shape.outputs * shape.hidden];
    let mut gs = vec![T::zero(); shape.hidden];
    for (o, &g) in g_out.iter().enumerate() {
        for c in 0..shape.hidden {
            gwa[o * shape.hidden + c] = g * cache.pooled[c];
            gs[c] = gs[c] + g * p[2][o * shape.hidden + c];
        }
    }
    let inv = T::one() / T::from_usize_lossy(nx * ny);
    let mut gh: Vec<Vec<T>> = gs.iter().map(|&g| vec![g * inv; nx * ny]).collect();
    softplus_backward(&cache.pre, &mut gh);
    let (gw1, gb1, _) = conv_backward(shape.first, p[0], x, &gh, nx, ny, false);
    [gw1, gb1, gwa, g_out.to_vec()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planes(c: usize, len: usize, seed: f64) -> Vec<Vec<f64>> {
        (0..c)
            .map(|i| (0..len).map(|m| ((m as f64 + 1.3 * i as f64) * seed).sin()).collect())
            .collect()
    }

    fn params(lens: [usize; 4], seed: f64) -> Vec<Vec<f64>> {
        lens.iter()
            .enumerate()
            .map(|(k, &l)| {
                (0..l)
                    .map(|j| 0.5 * ((j as f64 + 7.0 * k as f64) * seed).cos())
                    .collect()
            })
            .collect()
    }

    fn view(p: &[Vec<f64>]) -> [&[f64]; 4] {
        [&p[0], &p[1], &p[2], &p[3]]
    }

    #[test]
    fn identity_tap_copies_input() {
        let shape = ConvShape {
            c_in: 1,
            c_out: 1,
            kx: 3,
            ky: 3,
        };
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let x = planes(1, 16, 0.7);
        let y = conv_forward(shape, &w, &[0.5], &x, 4, 4);
        for (a, b) in y[0].iter().zip(&x[0]) {
            assert_eq!(*a, b + 0.5);
        }
    }

    #[test]
    fn conv_input_gradient_is_adjoint() {
        let shape = ConvShape {
            c_in: 2,
            c_out: 3,
            kx: 3,
            ky: 3,
        };
        let (nx, ny) = (5, 4);
        let w: Vec<f64> = (0..shape.weight_len()).map(|j| (j as f64 * 0.37).sin()).collect();
        let b = vec![0.0; 3];
        let x = planes(2, nx * ny, 0.3);
        let g = planes(3, nx * ny, 0.9);
        let y = conv_forward(shape, &w, &b, &x, nx, ny);
        let (_, _, gx) = conv_backward(shape, &w, &x, &g, nx, ny, true);
        let lhs: f64 = y
            .iter()
            .zip(&g)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q))
            .sum();
        let rhs: f64 = gx
            .unwrap()
            .iter()
            .zip(&x)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q))
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn meta_lambda_gradient_matches_differences() {
        let (nx, ny) = (6, 6);
        let shape = MetaLambdaShape::new(2, 4, 3, 3);
        let x = planes(2, nx * ny, 0.41);
        let p = params(shape.lens(), 0.23);
        let gsel = planes(2, nx * ny, 1.7);
        let loss = |p: &[Vec<f64>]| {
            let (out, _) = meta_lambda_forward(shape, view(p), &x, nx, ny);
            out.iter()
                .zip(&gsel)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v))
                .sum::<f64>()
        };
        let (_, cache) = meta_lambda_forward(shape, view(&p), &x, nx, ny);
        let grads = meta_lambda_backward(shape, view(&p), &x, &cache, [gsel[0].clone(), gsel[1].clone()], nx, ny);
        let eps = 1e-6;
        for seg in 0..4 {
            for j in [0, p[seg].len() / 2, p[seg].len() - 1] {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[seg][j] += eps;
                pm[seg][j] -= eps;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * eps);
                assert!(
                    (fd - grads[seg][j]).abs() < 1e-6 * fd.abs().max(1.0),
                    "seg {seg} idx {j}"
                );
            }
        }
    }

    #[test]
    fn meta_t_gradient_matches_differences() {
        let (nx, ny) = (8, 1);
        let shape = MetaTShape::new(2, 3, 3, 1, 5);
        let x = planes(2, nx * ny, 0.77);
        let p = params(shape.lens(), 0.31);
        let gsel: Vec<f64> = (0..5).map(|j| (j as f64).cos()).collect();
        let loss = |p: &[Vec<f64>]| {
            let (out, _) = meta_t_forward(shape, view(p), &x, nx, ny);
            out.iter().zip(&gsel).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = meta_t_forward(shape, view(&p), &x, nx, ny);
        let grads = meta_t_backward(shape, view(&p), &x, &cache, &gsel, nx, ny);
        let eps = 1e-6;
        for seg in 0..4 {
            for j in 0..p[seg].len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[seg][j] += eps;
                pm[seg][j] -= eps;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * eps);
                assert!(
                    (fd - grads[seg][j]).abs() < 1e-6 * fd.abs().max(1.0),
                    "seg {seg} idx {j}"
                );
            }
        }
    }
}
