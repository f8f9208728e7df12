use std::path::PathBuf;

/// Errors raised anywhere in the scattering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input domain error: {0}")]
    InputDomain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("circle fit failed: max radial deviation {deviation:.3e} exceeds 5% of r = {radius}")]
    FitFailure { radius: f64, deviation: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint field `{field}`: {message}")]
    Checkpoint { field: String, message: String },

    #[error("non-finite gradient in layer `{layer}`")]
    NonFiniteGradient { layer: String },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: u64 },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("field pairing error: {0}")]
    Pairing(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InputDomain(msg.into()))
}
