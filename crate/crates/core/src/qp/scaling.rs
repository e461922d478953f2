use nalgebra::{DMatrix, DVector};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;

/// Ruiz equilibration of the KKT matrix `[P Aᵀ; A 0]` plus a cost scale.
///
/// The scaled problem uses `P̂ = c D P D`, `q̂ = c D q`, `Â = E A D`,
/// `l̂ = E l`, `û = E u`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub c: f64,
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            d: DVector::from_element(n, 1.0),
            e: DVector::from_element(m, 1.0),
            c: 1.0,
        }
    }

    /// Equilibrates `p` and `a` in place and returns the accumulated scaling.
    pub fn equilibrate(p: &mut DMatrix<f64>, a: &mut DMatrix<f64>, iters: usize) -> Self {
        let (n, m) = (p.nrows(), a.nrows());
        let mut s = Self::identity(n, m);
        for _ in 0..iters {
            let mut dd = DVector::zeros(n);
            for j in 0..n {
                let pcol = p.column(j).amax();
                let acol = if m > 0 { a.column(j).amax() } else { 0.0 };
                dd[j] = limit(pcol.max(acol));
            }
            let mut ee = DVector::zeros(m);
            for i in 0..m {
                ee[i] = limit(a.row(i).amax());
            }
            let dd = dd.map(|v| 1.0 / libm::sqrt(v));
            let ee = ee.map(|v| 1.0 / libm::sqrt(v));
            scale_sym(p, &dd);
            scale_rows_cols(a, &ee, &dd);
            s.d.component_mul_assign(&dd);
            s.e.component_mul_assign(&ee);
        }
        if iters > 0 && n > 0 {
            let mean_col: f64 = (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64;
            s.c = 1.0 / limit(mean_col);
            *p *= s.c;
        }
        s
    }
}

fn limit(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

fn scale_sym(p: &mut DMatrix<f64>, d: &DVector<f64>) {
    let n = p.nrows();
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] *= d[i] * d[j];
        }
    }
}

fn scale_rows_cols(a: &mut DMatrix<f64>, e: &DVector<f64>, d: &DVector<f64>) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] *= e[i] * d[j];
        }
    }
}
