use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

/// Guessed role of each constraint row at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Inactive,
    Lower,
    Upper,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ActiveSet {
    roles: Vec<Role>,
}

impl ActiveSet {
    /// Reads the active set off an ADMM iterate.
    pub fn guess(z: &DVector<f64>, y: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> Self {
        let roles = (0..z.len())
            .map(|i| {
                if l[i] == u[i] {
                    Role::Fixed
                } else if z[i] - l[i] < -y[i] {
                    Role::Lower
                } else if u[i] - z[i] < y[i] {
                    Role::Upper
                } else {
                    Role::Inactive
                }
            })
            .collect();
        Self { roles }
    }
}

/// Lower Cholesky factor of `P + δI`, built on first use.
#[derive(Default)]
pub(crate) struct Cache {
    factor: Option<Option<DMatrix<f64>>>,
}

impl Cache {
    fn factor(&mut self, p: &DMatrix<f64>, delta: f64) -> Option<&DMatrix<f64>> {
        self.factor
            .get_or_insert_with(|| {
                let mut k = p.clone();
                for i in 0..k.nrows() {
                    k[(i, i)] += delta;
                }
                Cholesky::new(k).map(|c| c.l())
            })
            .as_ref()
    }
}

/// Solves the equality-constrained QP on the guessed active set,
/// `[P Aₐᵀ; Aₐ 0] [x; yₐ] = [−q; b]`, through a `δ`-regularized Schur
/// complement and iterative refinement against the exact system.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_reduced_kkt(
    cache: &mut Cache,
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q: &DVector<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    set: &ActiveSet,
    delta: f64,
    refine_iter: usize,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.nrows();
    let rows: Vec<usize> = (0..set.roles.len())
        .filter(|&i| set.roles[i] != Role::Inactive)
        .collect();
    let k = rows.len();
    let mut a_act = DMatrix::zeros(k, n);
    let mut b = DVector::zeros(k);
    for (r, &i) in rows.iter().enumerate() {
        a_act.row_mut(r).copy_from(&a.row(i));
        b[r] = match set.roles[i] {
            Role::Upper => u[i],
            _ => l[i],
        };
    }

    let lfac = cache.factor(p, delta)?.clone();
    // W = L⁻¹ Aₐᵀ, S = W ᵀW + δI = Aₐ (P + δI)⁻¹ Aₐᵀ + δI
    let mut w = a_act.transpose();
    if !lfac.solve_lower_triangular_mut(&mut w) {
        return None;
    }
    let mut schur = w.tr_mul(&w);
    for i in 0..k {
        schur[(i, i)] += delta;
    }
    let schur = Cholesky::new(schur)?;

    let solve_reg = |r1: &DVector<f64>,
                     r2: &DVector<f64>|
     -> Option<(DVector<f64>, DVector<f64>)> {
        let mut t = r1.clone();
        if !lfac.solve_lower_triangular_mut(&mut t) {
            return None;
        }
        // yₐ = S⁻¹ (Aₐ K⁻¹ r1 − r2)
        let mut ya = w.tr_mul(&t) - r2;
        schur.solve_mut(&mut ya);
        // x = K⁻¹ (r1 − Aₐᵀ yₐ)
        let mut x = r1 - a_act.tr_mul(&ya);
        if !lfac.solve_lower_triangular_mut(&mut x) || !lfac.tr_solve_lower_triangular_mut(&mut x) {
            return None;
        }
        Some((x, ya))
    };

    let r1 = -q;
    let (mut x, mut ya) = solve_reg(&r1, &b)?;
    for _ in 0..refine_iter {
        let e1 = &r1 - (p * &x + a_act.tr_mul(&ya));
        let e2 = &b - &a_act * &x;
        if e1.amax().max(e2.amax()) < 1e-15 {
            break;
        }
        let (dx, dy) = solve_reg(&e1, &e2)?;
        x += dx;
        ya += dy;
    }
    if x.iter().chain(ya.iter()).any(|v| !v.is_finite()) {
        return None;
    }

    let mut y = DVector::zeros(set.roles.len());
    for (r, &i) in rows.iter().enumerate() {
        y[i] = ya[r];
    }
    Some((x, y))
}
