//! Receding-horizon DeeP-LCC controller.
//!
//! Each control step estimates the equilibrium from the head vehicle's recent
//! velocity, designs the CAV equilibrium spacing, assembles the regularized
//! data-driven predictive control problem and applies the first `N_c` inputs.
//!
//! The decision variable `g` only enters the problem through the stacked
//! Hankel matrix `H`, so an optimal `g` always lies in the row space of `H`.
//! [`DeepLccSolver`] exploits this: with `Hᵀ = Q R` it optimizes over
//! `g = Q c`, eliminates `u`, `y` and `σ_y`, and solves a QP whose size is the
//! number of Hankel rows instead of the number of columns.
//! [`DeepLccProblem::full_qp`] keeps all variables explicit and serves as the
//! reference formulation.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fleet::{raw_to_error_output, EquilibriumState, OvmParams};
use crate::hankel::{HankelBlocks, HankelDims};
use crate::hdv::{equilibrium_spacing_inverse, ovm_acceleration};
use crate::qp::{AdmmSolver, KktResiduals, QpProblem, QpSettings, QpStatus};

/// Tuning of the predictive controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepLccConfig {
    pub t_ini: usize,
    /// Prediction horizon `N`.
    pub horizon: usize,
    /// Number of planned inputs applied per solve, `N_c ≤ N`.
    pub control_horizon: usize,
    pub w_v: f64,
    pub w_s: f64,
    pub w_u: f64,
    /// Divide `w_s` and `w_u` by the number of CAVs.
    pub normalize_by_cav_count: bool,
    pub lambda_g: f64,
    pub lambda_y: f64,
    pub s_tilde_min: f64,
    pub s_tilde_max: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for DeepLccConfig {
    fn default() -> Self {
        Self {
            t_ini: 20,
            horizon: 50,
            control_horizon: 10,
            w_v: 5.0,
            w_s: 40.0,
            w_u: 2.0,
            normalize_by_cav_count: true,
            lambda_g: 10.0,
            lambda_y: 1e5,
            s_tilde_min: -0.4,
            s_tilde_max: 1.2,
            a_min: -0.4,
            a_max: 0.4,
        }
    }
}

impl DeepLccConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.w_v, self.w_s, self.w_u, self.lambda_g, self.lambda_y];
        if self.t_ini == 0 || self.horizon == 0 || self.control_horizon == 0 {
            return Err(Error::Config("T_ini, N and N_c must be positive".into()));
        }
        if self.control_horizon > self.horizon {
            return Err(Error::Config(format!(
                "N_c = {} exceeds N = {}",
                self.control_horizon, self.horizon
            )));
        }
        if positive.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config(
                "weights and regularizers must be positive".into(),
            ));
        }
        if !(self.s_tilde_min < self.s_tilde_max) || !(self.a_min < self.a_max) {
            return Err(Error::Config("box bounds must satisfy min < max".into()));
        }
        Ok(())
    }

    /// `(w_v, w_s, w_u)` for `m` CAVs.
    pub fn weights(&self, m: usize) -> (f64, f64, f64) {
        let k = if self.normalize_by_cav_count {
            m.max(1) as f64
        } else {
            1.0
        };
        (self.w_v, self.w_s / k, self.w_u / k)
    }

    pub fn dims(&self, n: usize, m: usize) -> HankelDims {
        HankelDims {
            n,
            m,
            t_ini: self.t_ini,
            horizon: self.horizon,
        }
    }
}

/// The last `T_ini` samples of CAV inputs, head velocity and raw output.
#[derive(Debug, Clone, PartialEq)]
pub struct PastBuffer {
    capacity: usize,
    m: usize,
    outputs: usize,
    u: VecDeque<Vec<f64>>,
    v0: VecDeque<f64>,
    y_raw: VecDeque<Vec<f64>>,
}

impl PastBuffer {
    pub fn new(t_ini: usize, m: usize, outputs: usize) -> Self {
        Self {
            capacity: t_ini,
            m,
            outputs,
            u: VecDeque::with_capacity(t_ini + 1),
            v0: VecDeque::with_capacity(t_ini + 1),
            y_raw: VecDeque::with_capacity(t_ini + 1),
        }
    }

    pub fn push(&mut self, u: &[f64], v0: f64, y_raw: &[f64]) -> Result<()> {
        check_len("buffered input", self.m, u.len())?;
        check_len("buffered raw output", self.outputs, y_raw.len())?;
        if self.v0.len() == self.capacity {
            self.u.pop_front();
            self.v0.pop_front();
            self.y_raw.pop_front();
        }
        self.u.push_back(u.to_vec());
        self.v0.push_back(v0);
        self.y_raw.push_back(y_raw.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.v0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v0.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_warm(&self) -> bool {
        self.v0.len() == self.capacity
    }

    fn require_warm(&self) -> Result<()> {
        if self.is_warm() {
            Ok(())
        } else {
            Err(Error::ColdBuffer {
                have: self.len(),
                need: self.capacity,
            })
        }
    }

    pub fn head_velocities(&self) -> impl Iterator<Item = f64> + '_ {
        self.v0.iter().copied()
    }

    pub fn latest(&self) -> Option<(&[f64], f64, &[f64])> {
        Some((
            self.u.back()?.as_slice(),
            *self.v0.back()?,
            self.y_raw.back()?.as_slice(),
        ))
    }
}

/// Mean of the buffered head-vehicle velocities.
pub fn estimate_equilibrium_velocity(buffer: &PastBuffer) -> Result<f64> {
    buffer.require_warm()?;
    Ok(buffer.v0.iter().sum::<f64>() / buffer.len() as f64)
}

/// CAV equilibrium spacing from the human-like spacing policy.
pub fn design_equilibrium_spacing(v_star: f64, p: &OvmParams) -> Result<f64> {
    equilibrium_spacing_inverse(v_star, p)
}

/// One step's regularized predictive-control problem.
#[derive(Debug, Clone)]
pub struct DeepLccProblem<'a> {
    pub blocks: &'a HankelBlocks,
    pub u_ini: DVector<f64>,
    pub eps_ini: DVector<f64>,
    pub y_ini: DVector<f64>,
    /// Predicted head-vehicle velocity error; zero by construction.
    pub eps_future: DVector<f64>,
    /// Per-step output weights, `diag(Q_v, Q_s)`.
    pub q_diag: DVector<f64>,
    /// Per-step input weights.
    pub r_diag: DVector<f64>,
    pub lambda_g: f64,
    pub lambda_y: f64,
    pub input_bounds: (f64, f64),
    pub spacing_bounds: (f64, f64),
    pub equilibrium: EquilibriumState,
}

/// Row indices of the CAV spacing errors inside the stacked future output.
pub fn spacing_rows(dims: HankelDims) -> Vec<usize> {
    let p = dims.output_len();
    (0..dims.horizon)
        .flat_map(|k| (0..dims.m).map(move |j| k * p + dims.n + j))
        .collect()
}

/// Builds the problem for the current buffer contents.
pub fn assemble_problem<'a>(
    blocks: &'a HankelBlocks,
    buffer: &PastBuffer,
    eq: EquilibriumState,
    cfg: &DeepLccConfig,
) -> Result<DeepLccProblem<'a>> {
    let dims = blocks.dims;
    buffer.require_warm()?;
    check_len("buffer length vs T_ini", dims.t_ini, buffer.len())?;
    check_len("Hankel N vs config", cfg.horizon, dims.horizon)?;
    check_len("buffered input width", dims.m, buffer.m)?;
    check_len("buffered output width", dims.output_len(), buffer.outputs)?;

    let u_ini = DVector::from_iterator(
        dims.m * dims.t_ini,
        buffer.u.iter().flat_map(|u| u.iter().copied()),
    );
    let eps_ini = DVector::from_iterator(dims.t_ini, buffer.v0.iter().map(|v| v - eq.v_star));
    let mut y_ini = Vec::with_capacity(dims.output_len() * dims.t_ini);
    for y in &buffer.y_raw {
        y_ini.extend(raw_to_error_output(y, eq, dims.n, dims.m)?);
    }

    let (w_v, w_s, w_u) = cfg.weights(dims.m);
    let q_diag = DVector::from_fn(dims.output_len(), |i, _| if i < dims.n { w_v } else { w_s });
    Ok(DeepLccProblem {
        blocks,
        u_ini,
        eps_ini,
        y_ini: DVector::from_vec(y_ini),
        eps_future: DVector::zeros(dims.horizon),
        q_diag,
        r_diag: DVector::from_element(dims.m, w_u),
        lambda_g: cfg.lambda_g,
        lambda_y: cfg.lambda_y,
        input_bounds: (cfg.a_min, cfg.a_max),
        spacing_bounds: (cfg.s_tilde_min, cfg.s_tilde_max),
        equilibrium: eq,
    })
}

impl DeepLccProblem<'_> {
    pub fn dims(&self) -> HankelDims {
        self.blocks.dims
    }

    /// Cost `Σ ‖y(k)‖²_Q + ‖u(k)‖²_R + λ_g‖g‖² + λ_y‖σ_y‖²`.
    pub fn cost(
        &self,
        g: &DVector<f64>,
        u: &DVector<f64>,
        y: &DVector<f64>,
        sigma: &DVector<f64>,
    ) -> f64 {
        let dims = self.dims();
        let p = dims.output_len();
        let mut j = 0.0;
        for k in 0..dims.horizon {
            for i in 0..p {
                j += self.q_diag[i] * y[k * p + i] * y[k * p + i];
            }
            for i in 0..dims.m {
                j += self.r_diag[i] * u[k * dims.m + i] * u[k * dims.m + i];
            }
        }
        j + self.lambda_g * g.norm_squared() + self.lambda_y * sigma.norm_squared()
    }

    /// The problem as an explicit QP over `z = (g, u, y, σ_y)`.
    pub fn full_qp(&self) -> QpProblem {
        let b = self.blocks;
        let dims = self.dims();
        let (m, p, t, nh) = (dims.m, dims.output_len(), dims.t_ini, dims.horizon);
        let cols = b.columns();
        let (nu, ny, ns) = (m * nh, p * nh, p * t);
        let nv = cols + nu + ny + ns;
        let (og, ou, oy, os) = (0, cols, cols + nu, cols + nu + ny);

        let mut hess = DMatrix::zeros(nv, nv);
        for i in 0..cols {
            hess[(og + i, og + i)] = 2.0 * self.lambda_g;
        }
        for k in 0..nh {
            for i in 0..m {
                hess[(ou + k * m + i, ou + k * m + i)] = 2.0 * self.r_diag[i];
            }
            for i in 0..p {
                hess[(oy + k * p + i, oy + k * p + i)] = 2.0 * self.q_diag[i];
            }
        }
        for i in 0..ns {
            hess[(os + i, os + i)] = 2.0 * self.lambda_y;
        }

        let spacing = spacing_rows(dims);
        let n_eq = m * t + t + ns + nu + nh + ny;
        let nc = n_eq + nu + spacing.len();
        let mut a = DMatrix::zeros(nc, nv);
        let mut l = DVector::zeros(nc);
        let mut r = 0;
        let place = |a: &mut DMatrix<f64>, block: &DMatrix<f64>, r: usize| {
            a.view_mut((r, og), block.shape()).copy_from(block);
        };
        place(&mut a, &b.up, r);
        l.rows_mut(r, m * t).copy_from(&self.u_ini);
        r += m * t;
        place(&mut a, &b.ep, r);
        l.rows_mut(r, t).copy_from(&self.eps_ini);
        r += t;
        place(&mut a, &b.yp, r);
        for i in 0..ns {
            a[(r + i, os + i)] = -1.0;
        }
        l.rows_mut(r, ns).copy_from(&self.y_ini);
        r += ns;
        place(&mut a, &b.uf, r);
        for i in 0..nu {
            a[(r + i, ou + i)] = -1.0;
        }
        r += nu;
        place(&mut a, &b.ef, r);
        l.rows_mut(r, nh).copy_from(&self.eps_future);
        r += nh;
        place(&mut a, &b.yf, r);
        for i in 0..ny {
            a[(r + i, oy + i)] = -1.0;
        }
        r += ny;
        let mut u = l.clone();
        for i in 0..nu {
            a[(r + i, ou + i)] = 1.0;
            l[r + i] = self.input_bounds.0;
            u[r + i] = self.input_bounds.1;
        }
        r += nu;
        for (k, &row) in spacing.iter().enumerate() {
            a[(r + k, oy + row)] = 1.0;
            l[r + k] = self.spacing_bounds.0;
            u[r + k] = self.spacing_bounds.1;
        }
        QpProblem {
            p: hess,
            q: DVector::zeros(nv),
            a,
            l,
            u,
        }
    }

    /// Splits a solution vector of [`full_qp`](Self::full_qp) into `(g, u, y, σ_y)`.
    pub fn split_full(
        &self,
        z: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let dims = self.dims();
        let cols = self.blocks.columns();
        let (nu, ny, ns) = (
            dims.m * dims.horizon,
            dims.output_len() * dims.horizon,
            dims.output_len() * dims.t_ini,
        );
        (
            z.rows(0, cols).into_owned(),
            z.rows(cols, nu).into_owned(),
            z.rows(cols + nu, ny).into_owned(),
            z.rows(cols + nu + ny, ns).into_owned(),
        )
    }
}

/// Optimal plan of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLccSolution {
    pub status: QpStatus,
    /// Stacked `u(t), …, u(t+N−1)`.
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub g: DVector<f64>,
    pub sigma: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub polished: bool,
}

impl DeepLccSolution {
    /// Planned inputs as an `m × N` matrix (column `k` is `u(t+k)`).
    pub fn input_matrix(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(m, self.u.len() / m.max(1), self.u.as_slice())
    }
}

/// Reduced-space solver with a factorization cached across control steps.
pub struct DeepLccSolver {
    dims: HankelDims,
    weights: (DVector<f64>, DVector<f64>, f64, f64),
    basis: DMatrix<f64>,
    m_yp: DMatrix<f64>,
    m_uf: DMatrix<f64>,
    m_yf: DMatrix<f64>,
    spacing: Vec<usize>,
    admm: AdmmSolver,
}

impl DeepLccSolver {
    pub fn new(blocks: &HankelBlocks, cfg: &DeepLccConfig, settings: QpSettings) -> Result<Self> {
        cfg.validate()?;
        let dims = blocks.dims;
        check_len("Hankel N vs config", cfg.horizon, dims.horizon)?;
        check_len("Hankel T_ini vs config", cfg.t_ini, dims.t_ini)?;
        let (m, p, t, nh) = (dims.m, dims.output_len(), dims.t_ini, dims.horizon);

        let stacked = blocks.stacked();
        let qr = stacked.transpose().qr();
        let basis = qr.q();
        let coeffs = qr.r().transpose();
        let r = basis.ncols();
        let mut row = 0;
        let mut take = |rows: usize| {
            let block = coeffs.rows(row, rows).into_owned();
            row += rows;
            block
        };
        let m_up = take(m * t);
        let m_ep = take(t);
        let m_yp = take(p * t);
        let m_uf = take(m * nh);
        let m_ef = take(nh);
        let m_yf = take(p * nh);

        let (w_v, w_s, w_u) = cfg.weights(m);
        let q_diag = DVector::from_fn(p, |i, _| if i < dims.n { w_v } else { w_s });
        let r_diag = DVector::from_element(m, w_u);

        let weighted = |block: &DMatrix<f64>, w: &DVector<f64>| {
            DMatrix::from_fn(block.nrows(), r, |i, j| block[(i, j)] * w[i % w.len()])
        };
        let mut hess = DMatrix::identity(r, r) * cfg.lambda_g;
        hess += m_uf.tr_mul(&weighted(&m_uf, &r_diag));
        hess += m_yf.tr_mul(&weighted(&m_yf, &q_diag));
        hess += m_yp.tr_mul(&m_yp) * cfg.lambda_y;
        hess *= 2.0;
        // symmetrize against round-off
        let hess = (&hess + hess.transpose()) * 0.5;

        let spacing = spacing_rows(dims);
        let n_rows = m * t + t + nh + m * nh + spacing.len();
        let mut a = DMatrix::zeros(n_rows, r);
        let mut at = 0;
        for block in [&m_up, &m_ep, &m_ef, &m_uf] {
            a.rows_mut(at, block.nrows()).copy_from(block);
            at += block.nrows();
        }
        for &s in &spacing {
            a.row_mut(at).copy_from(&m_yf.row(s));
            at += 1;
        }
        let admm = AdmmSolver::new(&hess, &a, settings)?;
        Ok(Self {
            dims,
            weights: (q_diag, r_diag, cfg.lambda_g, cfg.lambda_y),
            basis,
            m_yp,
            m_uf,
            m_yf,
            spacing,
            admm,
        })
    }

    pub fn dims(&self) -> HankelDims {
        self.dims
    }

    /// Dimension of the reduced decision variable.
    pub fn reduced_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn qp(&self) -> &AdmmSolver {
        &self.admm
    }

    pub fn solve(&mut self, problem: &DeepLccProblem<'_>) -> Result<DeepLccSolution> {
        let dims = self.dims;
        if problem.dims() != dims {
            return Err(Error::Config(
                "problem built from different Hankel blocks".into(),
            ));
        }
        let (q_diag, r_diag, lg, ly) = &self.weights;
        if &problem.q_diag != q_diag
            || &problem.r_diag != r_diag
            || problem.lambda_g != *lg
            || problem.lambda_y != *ly
        {
            return Err(Error::Config(
                "problem weights differ from the solver's factorization".into(),
            ));
        }
        let (m, t, nh) = (dims.m, dims.t_ini, dims.horizon);
        let q = self.m_yp.tr_mul(&problem.y_ini) * (-2.0 * ly);
        let n_rows = self.admm.num_constraints();
        let mut l = DVector::zeros(n_rows);
        let mut r = 0;
        for v in [&problem.u_ini, &problem.eps_ini, &problem.eps_future] {
            l.rows_mut(r, v.len()).copy_from(v);
            r += v.len();
        }
        let mut u = l.clone();
        for i in 0..m * nh {
            l[r + i] = problem.input_bounds.0;
            u[r + i] = problem.input_bounds.1;
        }
        r += m * nh;
        for i in 0..self.spacing.len() {
            l[r + i] = problem.spacing_bounds.0;
            u[r + i] = problem.spacing_bounds.1;
        }
        debug_assert_eq!(r + self.spacing.len(), n_rows);
        debug_assert_eq!(problem.u_ini.len(), m * t);

        let sol = self.admm.solve(&q, &l, &u)?;
        let Some(c) = sol.x else {
            return Ok(DeepLccSolution {
                status: sol.status,
                u: DVector::zeros(0),
                y: DVector::zeros(0),
                g: DVector::zeros(0),
                sigma: DVector::zeros(0),
                objective: f64::INFINITY,
                iterations: sol.iterations,
                residuals: sol.residuals,
                polished: false,
            });
        };
        let g = &self.basis * &c;
        let u_opt = &self.m_uf * &c;
        let y_opt = &self.m_yf * &c;
        let sigma = &self.m_yp * &c - &problem.y_ini;
        Ok(DeepLccSolution {
            status: sol.status,
            objective: sol.objective + ly * problem.y_ini.norm_squared(),
            u: u_opt,
            y: y_opt,
            g,
            sigma,
            iterations: sol.iterations,
            residuals: sol.residuals,
            polished: sol.polished,
        })
    }
}

/// Where the inputs of a control step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Optimal,
    /// Solver failed; the remainder of the previous plan is replayed.
    HeldPlan,
    /// Solver failed with no plan left; the CAV drives like a human (OVM).
    OvmFallback,
}

impl InputSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            InputSource::Optimal => "optimal",
            InputSource::HeldPlan => "held_plan",
            InputSource::OvmFallback => "ovm_fallback",
        }
    }
}

/// Per-solve record kept in simulation logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDiagnostics {
    pub time: f64,
    pub v_star: f64,
    pub s_star: f64,
    pub objective: f64,
    pub sigma_norm: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub source: InputSource,
    pub solve_time_ms: f64,
    /// Range of the planned inputs over the whole horizon.
    pub planned_input_range: (f64, f64),
    /// Range of the predicted CAV spacing errors over the horizon.
    pub predicted_spacing_range: (f64, f64),
}

/// Result of [`DeepLccController::control_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    /// `m × N_c` inputs to apply, one column per sample.
    pub inputs: DMatrix<f64>,
    pub source: InputSource,
    pub diagnostics: ControlDiagnostics,
    pub solution: Option<DeepLccSolution>,
}

/// Millisecond clock used to time solves; the core crate has no wall clock.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Stateful controller: past-data buffer, cached solver and remaining plan.
pub struct DeepLccController {
    cfg: DeepLccConfig,
    ovm: OvmParams,
    /// Local 1-based CAV indices within the formulation.
    cav_local: Vec<usize>,
    solver: DeepLccSolver,
    blocks: HankelBlocks,
    buffer: PastBuffer,
    leftover: VecDeque<Vec<f64>>,
}

impl DeepLccController {
    pub fn new(
        blocks: HankelBlocks,
        cfg: DeepLccConfig,
        ovm: OvmParams,
        cav_local: Vec<usize>,
        settings: QpSettings,
    ) -> Result<Self> {
        let dims = blocks.dims;
        check_len("CAV count", dims.m, cav_local.len())?;
        let solver = DeepLccSolver::new(&blocks, &cfg, settings)?;
        Ok(Self {
            buffer: PastBuffer::new(cfg.t_ini, dims.m, dims.output_len()),
            cfg,
            ovm,
            cav_local,
            solver,
            blocks,
            leftover: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &DeepLccConfig {
        &self.cfg
    }

    pub fn dims(&self) -> HankelDims {
        self.blocks.dims
    }

    pub fn blocks(&self) -> &HankelBlocks {
        &self.blocks
    }

    pub fn buffer(&self) -> &PastBuffer {
        &self.buffer
    }

    pub fn solver(&self) -> &DeepLccSolver {
        &self.solver
    }

    /// Appends one sample of applied input, head velocity and raw output.
    pub fn record(&mut self, u: &[f64], v0: f64, y_raw: &[f64]) -> Result<()> {
        self.buffer.push(u, v0, y_raw)
    }

    /// Drops any remaining plan (used when control is switched off).
    pub fn reset_plan(&mut self) {
        self.leftover.clear();
    }

    /// OVM acceleration of each CAV at the latest buffered sample.
    pub fn ovm_inputs(&self) -> Result<Vec<f64>> {
        let (_, v0, y) = self.buffer.latest().ok_or(Error::ColdBuffer {
            have: 0,
            need: self.buffer.capacity(),
        })?;
        let n = self.dims().n;
        Ok(self
            .cav_local
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let v = y[i - 1];
                let v_pred = if i == 1 { v0 } else { y[i - 2] };
                ovm_acceleration(y[n + j], v, v_pred, &self.ovm)
            })
            .collect())
    }

    /// Runs one receding-horizon step: estimate `v*`, design `s*`, solve,
    /// and return the first `N_c` planned inputs.
    pub fn control_step(&mut self, time: f64, clock: &dyn Clock) -> Result<ControlOutcome> {
        let m = self.dims().m;
        let nc = self.cfg.control_horizon;
        let v_star = estimate_equilibrium_velocity(&self.buffer)?.clamp(0.0, self.ovm.v_max);
        let s_star = design_equilibrium_spacing(v_star, &self.ovm)?;
        let eq = EquilibriumState { v_star, s_star };
        let problem = assemble_problem(&self.blocks, &self.buffer, eq, &self.cfg)?;
        let start = clock.now_ms();
        let solution = self.solver.solve(&problem)?;
        let solve_time_ms = clock.now_ms() - start;

        let mut diagnostics = ControlDiagnostics {
            time,
            v_star,
            s_star,
            objective: solution.objective,
            sigma_norm: solution.sigma.norm(),
            iterations: solution.iterations,
            status: solution.status,
            source: InputSource::Optimal,
            solve_time_ms,
            planned_input_range: (f64::NAN, f64::NAN),
            predicted_spacing_range: (f64::NAN, f64::NAN),
        };

        if solution.status == QpStatus::Solved {
            let plan = solution.input_matrix(m);
            diagnostics.planned_input_range = range(solution.u.iter().copied());
            let spacing = spacing_rows(self.dims());
            diagnostics.predicted_spacing_range = range(spacing.iter().map(|&r| solution.y[r]));
            self.leftover = (nc..plan.ncols())
                .map(|k| plan.column(k).iter().copied().collect())
                .collect();
            let inputs = plan
                .columns(0, nc)
                .map(|v| v.clamp(self.cfg.a_min, self.cfg.a_max));
            return Ok(ControlOutcome {
                inputs,
                source: InputSource::Optimal,
                diagnostics,
                solution: Some(solution),
            });
        }

        let mut inputs = DMatrix::zeros(m, nc);
        let source = if self.leftover.len() >= nc {
            for k in 0..nc {
                let u = self.leftover.pop_front().expect("length checked");
                inputs.column_mut(k).copy_from_slice(&u);
            }
            InputSource::HeldPlan
        } else {
            self.leftover.clear();
            let ovm = self.ovm_inputs()?;
            for k in 0..nc {
                inputs.column_mut(k).copy_from_slice(&ovm);
            }
            InputSource::OvmFallback
        };
        diagnostics.source = source;
        Ok(ControlOutcome {
            inputs,
            source,
            diagnostics,
            solution: Some(solution),
        })
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}
