use thiserror::Error;

use crate::grid::ScalarGrid2D;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A named cascade constraint failed in strict mode.
    #[error("constraint {constraint} violated: {detail}")]
    Validation { constraint: String, detail: String },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    /// A mixing stage failed its refinement contract; `mismatch` is 1 where the
    /// pulled-back pattern disagrees with the target.
    #[error("construction error: {msg}")]
    Construction {
        msg: String,
        mismatch: Box<ScalarGrid2D>,
    },
    #[error("CFL violation: {0}")]
    Cfl(String),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("memory budget exceeded: {0}")]
    Memory(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
