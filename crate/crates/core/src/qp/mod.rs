//! Dense convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! with `P` symmetric positive semidefinite. Rows with `l_i = u_i` are
//! equalities; infinite bounds are allowed. [`AdmmSolver`] keeps the scaling
//! and matrix factorization for a fixed `(P, A)` so that a sequence of
//! problems differing only in `(q, l, u)` is solved without refactoring.

mod admm;
mod polish;
mod scaling;

use nalgebra::{DMatrix, DVector};

pub use admm::AdmmSolver;

use crate::error::{check_len, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self> {
        let n = q.len();
        check_len("QP Hessian rows", n, p.nrows())?;
        check_len("QP Hessian cols", n, p.ncols())?;
        check_len("QP constraint cols", n, a.ncols())?;
        check_len("QP lower bound", a.nrows(), l.len())?;
        check_len("QP upper bound", a.nrows(), u.len())?;
        Ok(Self { p, q, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn kkt_residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> KktResiduals {
        kkt_residuals(&self.p, &self.q, &self.a, &self.l, &self.u, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct QpSettings {
    /// Initial ADMM step size for inequality rows.
    pub rho: f64,
    /// Proximal regularization of the x-update.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Absolute KKT tolerance.
    pub eps_abs: f64,
    /// Relative KKT tolerance (scaled by the magnitude of the terms).
    pub eps_rel: f64,
    /// Tolerance of the primal infeasibility certificate.
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    /// Ruiz equilibration passes; zero disables scaling.
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    /// Residual checks happen every this many iterations.
    pub check_interval: usize,
    /// Try to recover an exact solution from the ADMM active set.
    pub polish: bool,
    /// ADMM residual level (relative) at which polishing is attempted.
    pub polish_trigger: f64,
    pub polish_delta: f64,
    pub polish_refine_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 1e-9,
            eps_prim_inf: 1e-6,
            max_iter: 4000,
            scaling_iters: 10,
            adaptive_rho: true,
            adaptive_rho_interval: 25,
            check_interval: 5,
            polish: true,
            polish_trigger: 1e-3,
            polish_delta: 1e-9,
            polish_refine_iter: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Solved => "solved",
            QpStatus::MaxIterations => "max_iter",
            QpStatus::PrimalInfeasible => "infeasible",
        }
    }
}

/// Infinity norms of the KKT conditions at a primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖P x + q + Aᵀ y‖∞`
    pub stationarity: f64,
    /// Distance of `A x` from `[l, u]`.
    pub primal: f64,
    /// Largest multiplier times slack product, plus sign violations.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Primal solution; absent when the problem is infeasible.
    pub x: Option<DVector<f64>>,
    /// Constraint multipliers (positive on upper, negative on lower bounds).
    pub y: Option<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// One-shot solve of a QP.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    let mut solver = AdmmSolver::new(&problem.p, &problem.a, *settings)?;
    solver.solve(&problem.q, &problem.l, &problem.u)
}

pub fn kkt_residuals(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> KktResiduals {
    let grad = p * x + q + a.tr_mul(y);
    let ax = a * x;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..ax.len() {
        let v = ax[i];
        primal = primal.max(l[i] - v).max(v - u[i]);
        let yi = y[i];
        if yi > 0.0 {
            let slack = if u[i].is_finite() {
                (u[i] - v).abs()
            } else {
                1.0
            };
            comp = comp.max(yi * slack);
        } else if yi < 0.0 {
            let slack = if l[i].is_finite() {
                (v - l[i]).abs()
            } else {
                1.0
            };
            comp = comp.max(-yi * slack);
        }
    }
    KktResiduals {
        stationarity: crate::linalg::inf_norm(&grad),
        primal,
        complementarity: comp,
    }
}
