use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter `{key}`: {msg}")]
    InvalidParam { key: String, msg: String },

    #[error("{context}: no convergence after {iterations} iterations, residual {residual:.3e} (tol {tol:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("CFL violation at t={t:.6}: dt={dt:.3e} exceeds limit {limit:.3e} ({which})")]
    Cfl {
        t: f64,
        dt: f64,
        limit: f64,
        which: String,
    },

    #[error("under-resolved oscillation: {0}")]
    UnderResolved(String),

    #[error("ellipticity violation: {0}")]
    Ellipticity(String),

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
