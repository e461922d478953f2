use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::polish::{self, ActiveSet};
use super::scaling::Scaling;
use super::{kkt_residuals, KktResiduals, QpSettings, QpSolution, QpStatus};
use crate::error::{check_len, Error, Result};
use crate::linalg::inf_norm;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_ADAPT_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

fn row_kind(l: f64, u: f64) -> RowKind {
    if l == u {
        RowKind::Equality
    } else if l == f64::NEG_INFINITY && u == f64::INFINITY {
        RowKind::Free
    } else {
        RowKind::Inequality
    }
}

/// Operator-splitting QP solver with cached scaling and factorization.
///
/// `P` and `A` are fixed at construction; each call to [`solve`](Self::solve)
/// supplies `(q, l, u)` and warm-starts from the previous iterate.
pub struct AdmmSolver {
    settings: QpSettings,
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    p_scaled: DMatrix<f64>,
    a_scaled: DMatrix<f64>,
    scaling: Scaling,
    rho: f64,
    rho_vec: DVector<f64>,
    kinds: Vec<RowKind>,
    kkt: Option<Cholesky<f64, Dyn>>,
    polish_cache: polish::Cache,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
    factorizations: usize,
}

impl AdmmSolver {
    pub fn new(p: &DMatrix<f64>, a: &DMatrix<f64>, settings: QpSettings) -> Result<Self> {
        let n = p.nrows();
        check_len("QP Hessian cols", n, p.ncols())?;
        check_len("QP constraint cols", n, a.ncols())?;
        if !(settings.alpha > 0.0 && settings.alpha < 2.0) || settings.rho <= 0.0 {
            return Err(Error::Config(format!(
                "ADMM needs rho > 0 and 0 < alpha < 2, got {settings:?}"
            )));
        }
        let m = a.nrows();
        let mut p_scaled = p.clone();
        let mut a_scaled = a.clone();
        let scaling = Scaling::equilibrate(&mut p_scaled, &mut a_scaled, settings.scaling_iters);
        Ok(Self {
            settings,
            p: p.clone(),
            a: a.clone(),
            p_scaled,
            a_scaled,
            scaling,
            rho: settings.rho,
            rho_vec: DVector::zeros(m),
            kinds: Vec::new(),
            kkt: None,
            polish_cache: polish::Cache::default(),
            x: DVector::zeros(n),
            z: DVector::zeros(m),
            y: DVector::zeros(m),
            factorizations: 0,
        })
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    pub fn num_vars(&self) -> usize {
        self.p.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    /// Number of KKT factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Sets the starting point of the next solve (unscaled primal and dual).
    pub fn warm_start(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        check_len("warm-start primal", self.num_vars(), x.len())?;
        check_len("warm-start dual", self.num_constraints(), y.len())?;
        let s = &self.scaling;
        self.x = x.component_div(&s.d);
        self.y = y.component_div(&s.e) * s.c;
        self.z = &self.a_scaled * &self.x;
        Ok(())
    }

    /// Forgets the previous iterate.
    pub fn cold_start(&mut self) {
        self.x.fill(0.0);
        self.z.fill(0.0);
        self.y.fill(0.0);
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.num_vars();
        let mut k = self.p_scaled.clone();
        for i in 0..n {
            k[(i, i)] += self.settings.sigma;
        }
        let weighted = DMatrix::from_fn(self.a_scaled.nrows(), n, |i, j| {
            self.a_scaled[(i, j)] * self.rho_vec[i]
        });
        k += self.a_scaled.tr_mul(&weighted);
        self.kkt = Some(Cholesky::new(k).ok_or_else(|| {
            Error::Solver("ADMM system matrix is not positive definite (is P PSD?)".into())
        })?);
        self.factorizations += 1;
        Ok(())
    }

    fn set_rho(&mut self, rho: f64) {
        self.rho = rho.clamp(RHO_MIN, RHO_MAX);
        for (r, kind) in self.rho_vec.iter_mut().zip(&self.kinds) {
            *r = match kind {
                RowKind::Free => RHO_MIN,
                RowKind::Inequality => self.rho,
                RowKind::Equality => (RHO_EQ_FACTOR * self.rho).min(RHO_MAX),
            };
        }
    }

    pub fn solve(
        &mut self,
        q: &DVector<f64>,
        l: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<QpSolution> {
        let (n, m) = (self.num_vars(), self.num_constraints());
        check_len("QP linear term", n, q.len())?;
        check_len("QP lower bound", m, l.len())?;
        check_len("QP upper bound", m, u.len())?;
        if l.iter()
            .zip(u.iter())
            .any(|(lo, hi)| lo > hi || lo.is_nan() || hi.is_nan())
        {
            return Ok(infeasible(0));
        }

        let kinds: Vec<RowKind> = l
            .iter()
            .zip(u.iter())
            .map(|(&a, &b)| row_kind(a, b))
            .collect();
        if kinds != self.kinds || self.kkt.is_none() {
            self.kinds = kinds;
            self.set_rho(self.rho);
            self.refactor()?;
        }

        let s = self.scaling.clone();
        let qs = q.component_mul(&s.d) * s.c;
        let ls = l.component_mul(&s.e);
        let us = u.component_mul(&s.e);
        for i in 0..m {
            self.z[i] = self.z[i].clamp(ls[i], us[i]);
        }

        let alpha = self.settings.alpha;
        let sigma = self.settings.sigma;
        let mut last_polish: Option<ActiveSet> = None;
        let mut y_prev = self.y.clone();
        let mut iter = 0;
        let mut outcome = None;

        while iter < self.settings.max_iter {
            iter += 1;
            y_prev.copy_from(&self.y);

            // x-update through the cached factorization
            let mut rhs = &self.x * sigma - &qs;
            let zr = self.z.component_mul(&self.rho_vec) - &self.y;
            rhs += self.a_scaled.tr_mul(&zr);
            self.kkt
                .as_ref()
                .expect("factorized above")
                .solve_mut(&mut rhs);
            let x_tilde = rhs;
            let z_tilde = &self.a_scaled * &x_tilde;

            self.x = &x_tilde * alpha + &self.x * (1.0 - alpha);
            let z_relaxed = &z_tilde * alpha + &self.z * (1.0 - alpha);
            for i in 0..m {
                let v = z_relaxed[i] + self.y[i] / self.rho_vec[i];
                self.z[i] = v.clamp(ls[i], us[i]);
                self.y[i] += self.rho_vec[i] * (z_relaxed[i] - self.z[i]);
            }

            let check =
                iter % self.settings.check_interval.max(1) == 0 || iter == self.settings.max_iter;
            if !check {
                continue;
            }

            let r = self.residuals(q, &s);
            if r.prim <= r.eps_prim && r.dual <= r.eps_dual {
                outcome = Some(QpStatus::Solved);
                break;
            }
            if self.primal_infeasible(&y_prev, l, u, &s) {
                return Ok(infeasible(iter));
            }
            if self.settings.polish
                && r.rel_prim <= self.settings.polish_trigger
                && r.rel_dual <= self.settings.polish_trigger
            {
                let set = ActiveSet::guess(&self.z, &self.y, &ls, &us);
                if last_polish.as_ref() != Some(&set) {
                    if let Some(sol) = self.try_polish(&set, q, l, u, &qs, &ls, &us, iter, &r) {
                        return Ok(sol);
                    }
                    last_polish = Some(set);
                }
            }
            if self.settings.adaptive_rho && iter % self.settings.adaptive_rho_interval.max(1) == 0
            {
                self.adapt_rho(&qs)?;
            }
        }

        let status = outcome.unwrap_or(QpStatus::MaxIterations);
        let r = self.residuals(q, &s);
        if self.settings.polish {
            let set = ActiveSet::guess(&self.z, &self.y, &ls, &us);
            if let Some(sol) = self.try_polish(&set, q, l, u, &qs, &ls, &us, iter, &r) {
                return Ok(sol);
            }
        }
        let x = self.x.component_mul(&s.d);
        let y = self.y.component_mul(&s.e) / s.c;
        let residuals = kkt_residuals(&self.p, q, &self.a, l, u, &x, &y);
        let objective = 0.5 * x.dot(&(&self.p * &x)) + q.dot(&x);
        Ok(QpSolution {
            status,
            x: Some(x),
            y: Some(y),
            objective,
            iterations: iter,
            residuals,
            polished: false,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn try_polish(
        &mut self,
        set: &ActiveSet,
        q: &DVector<f64>,
        l: &DVector<f64>,
        u: &DVector<f64>,
        qs: &DVector<f64>,
        ls: &DVector<f64>,
        us: &DVector<f64>,
        iter: usize,
        tol: &Residuals,
    ) -> Option<QpSolution> {
        let (xs, ys) = polish::solve_reduced_kkt(
            &mut self.polish_cache,
            &self.p_scaled,
            &self.a_scaled,
            qs,
            ls,
            us,
            set,
            self.settings.polish_delta,
            self.settings.polish_refine_iter,
        )?;
        let s = &self.scaling;
        let x = xs.component_mul(&s.d);
        let y = ys.component_mul(&s.e) / s.c;
        let residuals = kkt_residuals(&self.p, q, &self.a, l, u, &x, &y);
        // primal and dual sides have their own scales; with heavy output
        // penalties the dual tolerance alone would admit visible bound violations
        let accept = residuals.primal <= tol.eps_prim
            && residuals.stationarity <= tol.eps_dual
            && residuals.complementarity <= tol.eps_prim.max(tol.eps_dual);
        if !accept {
            return None;
        }
        // keep the polished point as the next warm start
        self.x = xs;
        self.y = ys;
        self.z = (&self.a_scaled * &self.x).zip_zip_map(ls, us, |v, lo, hi| v.clamp(lo, hi));
        let objective = 0.5 * x.dot(&(&self.p * &x)) + q.dot(&x);
        Some(QpSolution {
            status: QpStatus::Solved,
            x: Some(x),
            y: Some(y),
            objective,
            iterations: iter,
            residuals,
            polished: true,
        })
    }

    fn residuals(&self, q: &DVector<f64>, s: &Scaling) -> Residuals {
        let x = self.x.component_mul(&s.d);
        let y = self.y.component_mul(&s.e) / s.c;
        let z = self.z.component_div(&s.e);
        let ax = &self.a * &x;
        let px = &self.p * &x;
        let aty = self.a.tr_mul(&y);
        let prim = inf_norm(&(&ax - &z));
        let dual = inf_norm(&(&px + q + &aty));
        let prim_scale = inf_norm(&ax).max(inf_norm(&z));
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(q));
        Residuals {
            prim,
            dual,
            eps_prim: self.settings.eps_abs + self.settings.eps_rel * prim_scale,
            eps_dual: self.settings.eps_abs + self.settings.eps_rel * dual_scale,
            rel_prim: prim / (1.0 + prim_scale),
            rel_dual: dual / (1.0 + dual_scale),
        }
    }

    fn adapt_rho(&mut self, qs: &DVector<f64>) -> Result<()> {
        let ax = &self.a_scaled * &self.x;
        let px = &self.p_scaled * &self.x;
        let aty = self.a_scaled.tr_mul(&self.y);
        let prim = inf_norm(&(&ax - &self.z));
        let dual = inf_norm(&(&px + qs + &aty));
        let prim_scale = inf_norm(&ax).max(inf_norm(&self.z)).max(1e-12);
        let dual_scale = inf_norm(&px)
            .max(inf_norm(&aty))
            .max(inf_norm(qs))
            .max(1e-12);
        let ratio = (prim / prim_scale) / (dual / dual_scale).max(1e-30);
        let candidate = (self.rho * libm::sqrt(ratio)).clamp(RHO_MIN, RHO_MAX);
        if candidate > self.rho * RHO_ADAPT_RATIO || candidate < self.rho / RHO_ADAPT_RATIO {
            self.set_rho(candidate);
            self.refactor()?;
        }
        Ok(())
    }

    fn primal_infeasible(
        &self,
        y_prev: &DVector<f64>,
        l: &DVector<f64>,
        u: &DVector<f64>,
        s: &Scaling,
    ) -> bool {
        let dy = (&self.y - y_prev).component_mul(&s.e) / s.c;
        let norm = inf_norm(&dy);
        if norm <= 1e-12 {
            return false;
        }
        let eps = self.settings.eps_prim_inf * norm;
        if inf_norm(&self.a.tr_mul(&dy)) > eps {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            if dy[i] > 0.0 {
                if !u[i].is_finite() {
                    return false;
                }
                support += u[i] * dy[i];
            } else if dy[i] < 0.0 {
                if !l[i].is_finite() {
                    return false;
                }
                support += l[i] * dy[i];
            }
        }
        support < -eps
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    rel_prim: f64,
    rel_dual: f64,
}

fn infeasible(iterations: usize) -> QpSolution {
    QpSolution {
        status: QpStatus::PrimalInfeasible,
        x: None,
        y: None,
        objective: f64::INFINITY,
        iterations,
        residuals: KktResiduals::default(),
        polished: false,
    }
}
