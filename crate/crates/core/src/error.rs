//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FwmError {
    #[error("wavelength {wavelength_um} µm outside material model range [{min_um}, {max_um}] µm")]
    WavelengthOutOfRange {
        wavelength_um: f64,
        min_um: f64,
        max_um: f64,
    },

    #[error("mode {label} not guided: V = {v_number:.4} (cutoff {cutoff:.4})")]
    ModeNotGuided {
        label: &'static str,
        v_number: f64,
        cutoff: f64,
    },

    #[error("process {process} not phase matched in band: scanned Δk range [{dk_min:.4e}, {dk_max:.4e}] 1/m")]
    NotPhaseMatched {
        process: String,
        dk_min: f64,
        dk_max: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("fit did not converge after {iterations} iterations (residual {residual:.6e})")]
    FitNotConverged { iterations: usize, residual: f64 },

    #[error("reconstruction did not converge after {iterations} iterations (log-likelihood {log_likelihood:.6e})")]
    MleNotConverged {
        iterations: usize,
        log_likelihood: f64,
    },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("zero intensity in window {0}")]
    ZeroIntensity(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FwmError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FwmError::Config(_) | FwmError::InvalidParameter(_) => 2,
            FwmError::Io { .. } => 4,
            FwmError::Parse { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        FwmError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FwmError>;
