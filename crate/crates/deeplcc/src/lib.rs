//! Experiment orchestration for DeeP-LCC on top of [`deeplcc_core`].
//!
//! Scenario files are TOML, datasets and logs are CSV. The `deeplcc` binary
//! wraps [`experiment`] and [`sweep`] behind the `collect`, `run`, `sweep` and
//! `check-pe` verbs.

pub mod clock;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod sweep;

pub use deeplcc_core as core;
pub use error::{Error, Result};
