use thiserror::Error;

/// Errors raised by the simulation, reconstruction and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sideband window: {0}")]
    InvalidWindow(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("window [{n_min}, {n_max}] cannot hold {reach} ladder rungs on each side of the zero-loss line")]
    WindowTooSmall { n_min: i32, n_max: i32, reach: i32 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("not a valid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("phase grid is empty")]
    EmptyGrid,

    #[error("solver stopped after {iterations} steps without converging (kkt residual {kkt:.3e})")]
    NotConverged { iterations: usize, kkt: f64 },

    #[error("residual curve decreases from {prev:.6e} at alpha={alpha_prev:.3e} to {next:.6e} at alpha={alpha_next:.3e}")]
    NonMonotoneDiscrepancy {
        alpha_prev: f64,
        prev: f64,
        alpha_next: f64,
        next: f64,
    },

    #[error("temporal density is flat; pulse metrics are undefined")]
    FlatDensity,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::NonMonotoneDiscrepancy { .. }
                | Error::FlatDensity
                | Error::Fit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
