use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes used by the CLI.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CONVERGENCE: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode dimension {dim}: every truncation must be at least 2")]
    InvalidDimension { dim: usize },

    #[error("mode slot {slot} out of range for a space with {modes} modes")]
    SlotOutOfRange { slot: usize, modes: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error(
        "sensor {index} rejected: coupling {coupling:e} eV exceeds the admissible limit {limit:e} eV \
         (weak-coupling bound {bound:e} eV)"
    )]
    SensorRejected {
        index: usize,
        coupling: f64,
        limit: f64,
        bound: f64,
    },

    #[error("degenerate Liouvillian kernel: {detail}")]
    DegenerateKernel { detail: String },

    #[error("steady-state solve did not converge: residual {residual:e} > tolerance {tolerance:e}")]
    SolverNonConvergence { residual: f64, tolerance: f64 },

    #[error("steady state is not positive: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("integrator failure at tau = {tau:e} (step {step:e}): {detail}")]
    Integrator { tau: f64, step: f64, detail: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("vanishing denominator: |{quantity}| = {value:e} is below the guard {threshold:e}")]
    VanishingDenominator {
        quantity: &'static str,
        value: f64,
        threshold: f64,
    },

    #[error("imaginary residue {residue:e} at tau = {tau:e} exceeds {bound:e} in {quantity}")]
    ImaginaryResidue {
        quantity: &'static str,
        residue: f64,
        tau: f64,
        bound: f64,
    },

    #[error("{quantity} has not decayed at the cutoff: |tail| = {tail:e} > {bound:e}")]
    CutoffNotDecayed {
        quantity: &'static str,
        tail: f64,
        bound: f64,
    },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("truncation did not converge: {detail}")]
    Convergence { detail: String },

    #[error("sweep point {parameter} = {value}: {source}")]
    SweepPoint {
        parameter: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::SensorRejected { .. } => {
                exit_code::CONFIG
            }
            Error::Convergence { .. } => exit_code::CONVERGENCE,
            Error::SweepPoint { source, .. } => source.exit_code(),
            Error::Io { .. } | Error::Json(_) => exit_code::OTHER,
            _ => exit_code::NUMERICAL,
        }
    }
}
