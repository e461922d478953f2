//! Hand-built linearized platoon used as ground truth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: DVector<f64>,
    pub c: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
}

/// Straight-road OVM gains at v* = 0.3, where s* = 0.8 and V'(s*) = π/2.
pub const V_STAR: f64 = 0.3;
pub const S_STAR: f64 = 0.8;

/// Forward-Euler platoon of `n` followers with CAVs at the given 1-based
/// positions. States are `[ṽ_1, s̃_1, …]`.
pub fn platoon(n: usize, cavs: &[usize], dt: f64) -> Plant {
    let (alpha, beta) = (1.2, 1.8);
    let slope = core::f64::consts::PI / 2.0;
    let m = cavs.len();
    let mut a = DMatrix::identity(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, m);
    let mut h = DVector::zeros(2 * n);
    for i in 0..n {
        let (v, s) = (2 * i, 2 * i + 1);
        a[(s, v)] -= dt;
        if i == 0 {
            h[s] += dt;
        } else {
            a[(s, v - 2)] += dt;
        }
        if let Some(k) = cavs.iter().position(|&c| c == i + 1) {
            b[(v, k)] = dt;
        } else {
            a[(v, s)] += dt * alpha * slope;
            a[(v, v)] -= dt * (alpha + beta);
            if i == 0 {
                h[v] += dt * beta;
            } else {
                a[(v, v - 2)] += dt * beta;
            }
        }
    }
    let mut c = DMatrix::zeros(n + m, 2 * n);
    for i in 0..n {
        c[(i, 2 * i)] = 1.0;
    }
    for (k, &i) in cavs.iter().enumerate() {
        c[(n + k, 2 * (i - 1) + 1)] = 1.0;
    }
    Plant { a, b, h, c, n, m }
}

impl Plant {
    /// Outputs `y(0..T)` for inputs applied from `x0`; `y(k)` is read before
    /// `u(k)` acts.
    pub fn run(
        &self,
        x0: &DVector<f64>,
        u: &DMatrix<f64>,
        eps: &[f64],
    ) -> (DMatrix<f64>, DVector<f64>) {
        let t = eps.len();
        let mut x = x0.clone();
        let mut y = DMatrix::zeros(self.c.nrows(), t);
        for (k, &e) in eps.iter().enumerate() {
            y.set_column(k, &(&self.c * &x));
            x = &self.a * &x + &self.b * u.column(k) + &self.h * e;
        }
        (y, x)
    }

    /// Random excitation `(x0, u, ε)` of length `t`.
    pub fn random_inputs(
        &self,
        t: usize,
        rng: &mut ChaCha8Rng,
    ) -> (DVector<f64>, DMatrix<f64>, Vec<f64>) {
        let x0 = DVector::from_fn(2 * self.n, |_, _| rng.random_range(-0.1..0.1));
        let u = DMatrix::from_fn(self.m, t, |_, _| rng.random_range(-1.0..1.0));
        let eps = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x0, u, eps)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stacks the columns of `m` into one vector.
pub fn stack(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}
