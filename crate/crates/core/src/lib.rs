//! Data-driven leading cruise control (DeeP-LCC) for mixed traffic.
//!
//! The crate is `no_std` with `alloc`. It contains the optimal-velocity
//! car-following model and its linearized state-space oracle, Hankel-matrix
//! behavior representation with persistent-excitation checks, a dense
//! operator-splitting QP solver, the receding-horizon controller, a
//! longitudinal mixed-traffic simulator with measurement imperfections, and
//! evaluation metrics. File formats and the command line live in the
//! companion `deeplcc` crate.

#![no_std]
// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controller;
pub mod error;
pub mod fleet;
pub mod hankel;
pub mod hdv;
pub mod linalg;
pub mod metrics;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};
