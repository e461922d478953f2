use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("value outside the admissible domain: {0}")]
    Domain(String),
    #[error("past-data buffer holds {have} of {need} samples")]
    ColdBuffer { have: usize, need: usize },
    #[error("vehicle {vehicle} collided with its predecessor at t = {time:.2} s")]
    Collision { vehicle: usize, time: f64 },
    #[error("data are not persistently exciting: rank {rank} of {required}")]
    NotPersistentlyExciting { rank: usize, required: usize },
    #[error("quadratic program failed: {0}")]
    Solver(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
