//! Hankel-matrix behavior representation of pre-collected trajectories.
//!
//! Signals are stored as `q × T` matrices whose columns are samples.

use alloc::format;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::fleet::EquilibriumState;
use crate::linalg;

/// Block Hankel matrix of depth `order`: block row `r`, column `c` holds
/// sample `c + r`.
pub fn build_hankel(signal: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    let (q, t) = signal.shape();
    if order == 0 || order > t {
        return Err(Error::Domain(format!(
            "Hankel depth {order} needs 1 <= depth <= {t} samples"
        )));
    }
    let cols = t - order + 1;
    let mut h = DMatrix::zeros(q * order, cols);
    for r in 0..order {
        h.view_mut((r * q, 0), (q, cols))
            .copy_from(&signal.columns(r, cols));
    }
    Ok(h)
}

/// Why a persistent-excitation check could not succeed regardless of data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeShortfall {
    /// Fewer Hankel columns than rows; at least `needed` samples are required.
    TooFewSamples { needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeDiagnostic {
    pub satisfied: bool,
    pub rank: usize,
    pub required_rank: usize,
    pub shortfall: Option<PeShortfall>,
}

/// Checks whether `signal` is persistently exciting of order `order`,
/// i.e. whether its depth-`order` Hankel matrix has full row rank.
pub fn check_persistent_excitation(signal: &DMatrix<f64>, order: usize) -> PeDiagnostic {
    let (q, t) = signal.shape();
    let required_rank = q * order;
    let needed = required_rank + order - 1;
    if order == 0 || t < needed {
        return PeDiagnostic {
            satisfied: false,
            rank: 0,
            required_rank,
            shortfall: Some(PeShortfall::TooFewSamples { needed, have: t }),
        };
    }
    let h = build_hankel(signal, order).expect("depth checked above");
    let rank = linalg::numerical_rank(&h);
    PeDiagnostic {
        satisfied: rank == required_rank,
        rank,
        required_rank,
        shortfall: None,
    }
}

/// Horizon dimensions of the data-driven representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HankelDims {
    pub n: usize,
    pub m: usize,
    pub t_ini: usize,
    pub horizon: usize,
}

impl HankelDims {
    pub fn depth(&self) -> usize {
        self.t_ini + self.horizon
    }

    pub fn output_len(&self) -> usize {
        self.n + self.m
    }

    /// Number of Hankel columns produced by `samples` data points.
    pub fn columns(&self, samples: usize) -> usize {
        (samples + 1).saturating_sub(self.depth())
    }
}

/// Pre-collected input/output record `(u^d, ε^d, y_raw^d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub dt: f64,
    pub n: usize,
    pub m: usize,
    /// `m × T` control inputs.
    pub u: DMatrix<f64>,
    /// `T` external inputs `v_0 − v*`.
    pub eps: DVector<f64>,
    /// `(n+m) × T` raw outputs: velocities then CAV spacings.
    pub y_raw: DMatrix<f64>,
    /// Equilibrium around which the data were collected.
    pub equilibrium: EquilibriumState,
}

impl TrajectoryDataset {
    pub fn new(
        dt: f64,
        n: usize,
        m: usize,
        u: DMatrix<f64>,
        eps: DVector<f64>,
        y_raw: DMatrix<f64>,
        equilibrium: EquilibriumState,
    ) -> Result<Self> {
        let t = eps.len();
        check_len("dataset control rows", m, u.nrows())?;
        check_len("dataset control samples", t, u.ncols())?;
        check_len("dataset output rows", n + m, y_raw.nrows())?;
        check_len("dataset output samples", t, y_raw.ncols())?;
        Ok(Self {
            dt,
            n,
            m,
            u,
            eps,
            y_raw,
            equilibrium,
        })
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// Combined input `col(u(1), ε(1), …, u(T), ε(T))` as an `(m+1) × T` signal.
    pub fn combined_input(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.m + 1, self.len());
        w.rows_mut(0, self.m).copy_from(&self.u);
        w.row_mut(self.m).copy_from(&self.eps.transpose());
        w
    }

    /// Outputs centered with the collection equilibrium.
    pub fn error_output(&self) -> DMatrix<f64> {
        centered_output(&self.y_raw, self.equilibrium, self.n)
    }
}

fn centered_output(y_raw: &DMatrix<f64>, eq: EquilibriumState, n: usize) -> DMatrix<f64> {
    let mut y = y_raw.clone();
    for (r, mut row) in y.row_iter_mut().enumerate() {
        let offset = if r < n { eq.v_star } else { eq.s_star };
        row.add_scalar_mut(-offset);
    }
    y
}

/// Verifies that the combined input is persistently exciting of order
/// `T_ini + N + 2n`.
pub fn check_assumption_1(dataset: &TrajectoryDataset, dims: HankelDims) -> PeDiagnostic {
    let order = dims.depth() + 2 * dims.n;
    check_persistent_excitation(&dataset.combined_input(), order)
}

/// Past/future partition of the data Hankel matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlocks {
    pub dims: HankelDims,
    /// Number of samples the blocks were built from.
    pub samples: usize,
    pub up: DMatrix<f64>,
    pub uf: DMatrix<f64>,
    pub ep: DMatrix<f64>,
    pub ef: DMatrix<f64>,
    pub yp: DMatrix<f64>,
    pub yf: DMatrix<f64>,
}

impl HankelBlocks {
    pub fn columns(&self) -> usize {
        self.up.ncols()
    }

    /// All six blocks stacked as `[U_p; E_p; Y_p; U_f; E_f; Y_f]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let parts = [&self.up, &self.ep, &self.yp, &self.uf, &self.ef, &self.yf];
        let rows = parts.iter().map(|p| p.nrows()).sum();
        let mut h = DMatrix::zeros(rows, self.columns());
        let mut r = 0;
        for p in parts {
            h.rows_mut(r, p.nrows()).copy_from(p);
            r += p.nrows();
        }
        h
    }
}

/// Builds `U_p/U_f`, `E_p/E_f`, `Y_p/Y_f` from a dataset, centering the raw
/// outputs with `eq`.
pub fn partition(
    dataset: &TrajectoryDataset,
    eq: EquilibriumState,
    dims: HankelDims,
) -> Result<HankelBlocks> {
    check_len("dataset n", dims.n, dataset.n)?;
    check_len("dataset m", dims.m, dataset.m)?;
    if dims.t_ini == 0 || dims.horizon == 0 {
        return Err(Error::Config("T_ini and N must be positive".into()));
    }
    let t = dataset.len();
    if t < dims.depth() {
        return Err(Error::Dimension {
            what: "dataset length (needs at least T_ini + N)",
            expected: dims.depth(),
            got: t,
        });
    }
    let depth = dims.depth();
    let hu = build_hankel(&dataset.u, depth)?;
    let he = build_hankel(
        &DMatrix::from_row_slice(1, t, dataset.eps.as_slice()),
        depth,
    )?;
    let y = centered_output(&dataset.y_raw, eq, dims.n);
    let hy = build_hankel(&y, depth)?;
    let (m, p) = (dims.m, dims.output_len());
    let split = |h: &DMatrix<f64>, q: usize| {
        (
            h.rows(0, q * dims.t_ini).into_owned(),
            h.rows(q * dims.t_ini, q * dims.horizon).into_owned(),
        )
    };
    let (up, uf) = split(&hu, m);
    let (ep, ef) = split(&he, 1);
    let (yp, yf) = split(&hy, p);
    Ok(HankelBlocks {
        dims,
        samples: t,
        up,
        uf,
        ep,
        ef,
        yp,
        yf,
    })
}
