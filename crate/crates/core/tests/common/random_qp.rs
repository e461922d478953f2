//! Random convex QPs with mixed equality, one-sided and box rows.

use deeplcc_core::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex QP with a known feasible point.
pub fn random_qp(seed: u64) -> (QpProblem, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=50);
    let m = rng.random_range(1..=n + n / 2);
    let mut unif = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let f = DMatrix::from_fn(n, n, |_, _| unif(-1.0, 1.0));
    let p = f.tr_mul(&f) + DMatrix::identity(n, n) * 0.1;
    let q = DVector::from_fn(n, |_, _| unif(-5.0, 5.0));
    let a = DMatrix::from_fn(m, n, |_, _| unif(-1.0, 1.0));
    let x0 = DVector::from_fn(n, |_, _| unif(-0.5, 0.5));
    let ax0 = &a * &x0;
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    for i in 0..m {
        match unif(0.0, 1.0) {
            r if r < 0.1 => {
                l[i] = ax0[i];
                u[i] = ax0[i];
            }
            r if r < 0.4 => {
                l[i] = ax0[i] - unif(0.0, 1.0);
                u[i] = f64::INFINITY;
            }
            r if r < 0.6 => {
                l[i] = f64::NEG_INFINITY;
                u[i] = ax0[i] + unif(0.0, 1.0);
            }
            _ => {
                l[i] = ax0[i] - unif(0.0, 1.0);
                u[i] = ax0[i] + unif(0.0, 1.0);
            }
        }
    }
    (QpProblem::new(p, q, a, l, u).unwrap(), x0)
}
