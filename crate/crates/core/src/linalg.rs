//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for numerical rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Rank of `m`, counting singular values above `max(rows, cols) · σ_max · 1e-10`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    rank_from_singular_values(sv.as_slice(), m.nrows().max(m.ncols()))
}

pub fn rank_from_singular_values(sv: &[f64], max_dim: usize) -> usize {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = max_dim as f64 * smax * RANK_RTOL;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Minimum-norm least-squares solution of `a x ≈ b` through a truncated SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = a.nrows().max(a.ncols()) as f64 * smax * RANK_RTOL;
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut coeff = u.tr_mul(b);
    for (c, &s) in coeff.iter_mut().zip(svd.singular_values.iter()) {
        *c = if s > cutoff { *c / s } else { 0.0 };
    }
    vt.tr_mul(&coeff)
}

/// `‖a x − b‖ / max(‖b‖, tiny)`.
pub fn relative_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = a * x - b;
    r.norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// `x` modulo `c`, in `[0, c)`.
pub(crate) fn wrap(x: f64, c: f64) -> f64 {
    let r = libm::fmod(x, c);
    if r < 0.0 {
        r + c
    } else {
        r
    }
}

pub(crate) fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
