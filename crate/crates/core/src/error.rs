use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operation outside its domain (bad support, geometry overflow, violated precondition).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("matrix `{what}` is not Hermitian (max |A - A^dag| = {residual:.3e})")]
    NotHermitian { what: String, residual: f64 },

    #[error("bond does not conserve the charge: ||[h, n x 1 + 1 x n]|| = {norm:.3e}")]
    ChargeNotConserved { norm: f64 },

    #[error("Hilbert space dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("insufficient grid: {0}")]
    Grid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
