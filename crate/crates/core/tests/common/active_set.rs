//! Primal active-set solver for strictly convex QPs, used as a test oracle.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, PartialEq, Debug)]
enum Side {
    Lower,
    Upper,
    Equal,
}

/// Solves `min ½xᵀPx + qᵀx, l ≤ Ax ≤ u` from a feasible `x0`.
/// Returns `(x, y)` with `y` positive on upper and negative on lower bounds.
pub fn solve(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    x0: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.nrows();
    let m = a.nrows();
    let mut x = x0.clone();
    let mut work: Vec<(usize, Side)> = (0..m)
        .filter(|&i| l[i] == u[i])
        .map(|i| (i, Side::Equal))
        .collect();
    for _ in 0..10 * (n + m) + 100 {
        let k = work.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(p);
        for (r, &(i, _)) in work.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[(i, j)];
                kkt[(j, n + r)] = a[(i, j)];
            }
        }
        let grad = p * &x + q;
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        let sol = kkt.lu().solve(&rhs)?;
        let step = sol.rows(0, n).into_owned();
        let lam = sol.rows(n, k).into_owned();

        if step.amax() < 1e-12 * (1.0 + x.amax()) {
            // multipliers of the working set at x
            let mut worst = None;
            let mut worst_val = 1e-12;
            for (r, &(_, side)) in work.iter().enumerate() {
                let bad = match side {
                    Side::Upper => -lam[r],
                    Side::Lower => lam[r],
                    Side::Equal => 0.0,
                };
                if bad > worst_val {
                    worst_val = bad;
                    worst = Some(r);
                }
            }
            match worst {
                Some(r) => {
                    work.remove(r);
                }
                None => {
                    let mut y = DVector::zeros(m);
                    for (r, &(i, _)) in work.iter().enumerate() {
                        y[i] = lam[r];
                    }
                    return Some((x, y));
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut block = None;
        let ax = a * &x;
        let ap = a * &step;
        for i in 0..m {
            if work.iter().any(|&(j, _)| j == i) {
                continue;
            }
            if ap[i] > 1e-14 && u[i].is_finite() {
                let t = (u[i] - ax[i]) / ap[i];
                if t < alpha {
                    alpha = t.max(0.0);
                    block = Some((i, Side::Upper));
                }
            } else if ap[i] < -1e-14 && l[i].is_finite() {
                let t = (l[i] - ax[i]) / ap[i];
                if t < alpha {
                    alpha = t.max(0.0);
                    block = Some((i, Side::Lower));
                }
            }
        }
        x += step * alpha;
        if let Some(b) = block {
            work.push(b);
        }
    }
    None
}
