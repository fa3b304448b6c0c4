//! Error type shared by every module.

use thiserror::Error;

/// Which algebraic symmetry of a curvature tensor failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    FirstPairAntisymmetry,
    LastPairAntisymmetry,
    PairInterchange,
    FirstBianchi,
}

impl std::fmt::Display for Symmetry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Symmetry::FirstPairAntisymmetry => "antisymmetry in the first index pair",
            Symmetry::LastPairAntisymmetry => "antisymmetry in the last index pair",
            Symmetry::PairInterchange => "pair-interchange symmetry",
            Symmetry::FirstBianchi => "first Bianchi identity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("curvature tensor violates {symmetry}: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    SymmetryViolation {
        symmetry: Symmetry,
        residual: f64,
        tolerance: f64,
    },

    #[error("[{module}] invalid parameter: {message}")]
    Parameter {
        module: &'static str,
        message: String,
    },

    #[error("[{module}] point outside chart coverage: {message}")]
    ChartCoverage {
        module: &'static str,
        message: String,
    },

    #[error("[models] geodesic shooting did not converge; distance bracket [{lower:.10e}, {upper:.10e}]")]
    NonConvergent { lower: f64, upper: f64 },

    #[error("[{module}] polarization failure: {message}")]
    Polarization {
        module: &'static str,
        message: String,
    },

    #[error("[{module}] empty domain")]
    EmptyDomain { module: &'static str },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(module: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn coverage(module: &'static str, message: impl Into<String>) -> Self {
        Error::ChartCoverage {
            module,
            message: message.into(),
        }
    }

    /// Name of the module that raised the error, when known.
    pub fn module(&self) -> &'static str {
        match self {
            Error::SymmetryViolation { .. } => "tensor4",
            Error::Parameter { module, .. }
            | Error::ChartCoverage { module, .. }
            | Error::Polarization { module, .. }
            | Error::EmptyDomain { module } => module,
            Error::NonConvergent { .. } => "models",
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
