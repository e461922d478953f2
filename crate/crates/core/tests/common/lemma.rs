//! Fundamental-lemma check on data from the hand-built plant.

use deeplcc_core::controller::DeepLccConfig;
use deeplcc_core::fleet::EquilibriumState;
use deeplcc_core::hankel::{check_assumption_1, partition, HankelBlocks, TrajectoryDataset};
use deeplcc_core::linalg::{lstsq, relative_residual};
use nalgebra::{DMatrix, DVector};

use super::lti::{platoon, rng, stack, Plant, S_STAR, V_STAR};

pub struct LemmaReport {
    pub pe_satisfied: bool,
    pub worst_residual: f64,
    pub worst_prediction: f64,
    pub trials: usize,
}

pub fn dataset(plant: &Plant, samples: usize, seed: u64) -> TrajectoryDataset {
    let mut r = rng(seed);
    let (x0, u, eps) = plant.random_inputs(samples, &mut r);
    let (y, _) = plant.run(&x0, &u, &eps);
    let mut y_raw = y;
    for (row, mut line) in y_raw.row_iter_mut().enumerate() {
        line.add_scalar_mut(if row < plant.n { V_STAR } else { S_STAR });
    }
    TrajectoryDataset::new(
        0.05,
        plant.n,
        plant.m,
        u,
        DVector::from_vec(eps),
        y_raw,
        EquilibriumState {
            v_star: V_STAR,
            s_star: S_STAR,
        },
    )
    .unwrap()
}

fn rows(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks[0].ncols();
    let total = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Past/future split of one fresh trajectory: `(u_p, e_p, y_p, u_f, e_f, y_f)`.
fn window(plant: &Plant, blocks: &HankelBlocks, seed: u64) -> [DVector<f64>; 6] {
    let d = blocks.dims;
    let len = d.t_ini + d.horizon;
    let mut r = rng(seed);
    let (x0, u, eps) = plant.random_inputs(len, &mut r);
    let (y, _) = plant.run(&x0, &u, &eps);
    let e = DMatrix::from_row_slice(1, len, &eps);
    let split = |m: &DMatrix<f64>| {
        (
            stack(&m.columns(0, d.t_ini).into_owned()),
            stack(&m.columns(d.t_ini, d.horizon).into_owned()),
        )
    };
    let (up, uf) = split(&u);
    let (ep, ef) = split(&e);
    let (yp, yf) = split(&y);
    [up, ep, yp, uf, ef, yf]
}

/// n = 3 followers, CAV at 2, T_ini = 6, N = 10, T = 300, 50 trials.
pub fn run() -> LemmaReport {
    let plant = platoon(3, &[2], 0.05);
    let cfg = DeepLccConfig {
        t_ini: 6,
        horizon: 10,
        control_horizon: 1,
        ..Default::default()
    };
    let dims = cfg.dims(3, 1);
    let data = dataset(&plant, 300, 1);
    let pe = check_assumption_1(&data, dims);
    let blocks = partition(&data, data.equilibrium, dims).unwrap();
    let full = blocks.stacked();
    let known = rows(&[&blocks.up, &blocks.ep, &blocks.yp, &blocks.uf, &blocks.ef]);
    let mut worst_residual: f64 = 0.0;
    let mut worst_prediction: f64 = 0.0;
    let trials = 50;
    for trial in 0..trials {
        let w = window(&plant, &blocks, 1000 + trial);
        let all = DVector::from_iterator(full.nrows(), w.iter().flat_map(|v| v.iter().copied()));
        let g = lstsq(&full, &all);
        worst_residual = worst_residual.max(relative_residual(&full, &g, &all));

        let rhs =
            DVector::from_iterator(known.nrows(), w[..5].iter().flat_map(|v| v.iter().copied()));
        let g = lstsq(&known, &rhs);
        let y_hat = &blocks.yf * g;
        worst_prediction = worst_prediction.max((&y_hat - &w[5]).norm() / w[5].norm());
    }
    LemmaReport {
        pe_satisfied: pe.satisfied,
        worst_residual,
        worst_prediction,
        trials: trials as usize,
    }
}
