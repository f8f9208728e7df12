use scatter_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Lookup(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Stable identifier of the failure class.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                CoreError::InputDomain(_) => "input-domain",
                CoreError::DegenerateGeometry(_) => "degenerate-geometry",
                CoreError::FitFailure { .. } => "fit-failure",
                CoreError::Parse { .. } => "parse",
                CoreError::Checkpoint { .. } => "checkpoint",
                CoreError::NonFiniteGradient { .. } => "non-finite-gradient",
                CoreError::NonFiniteLoss { .. } => "non-finite-loss",
                CoreError::Solver(_) => "solver",
                CoreError::UndefinedMetric(_) => "undefined-metric",
                CoreError::Pairing(_) => "pairing",
                CoreError::FileNotFound(_) => "file-not-found",
                CoreError::Io(_) => "io",
            },
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Lookup(_) => "lookup",
            CliError::Io(_) => "io",
            CliError::Image(_) => "image",
        }
    }

    /// `error[<kind>]: <message>` on a single line.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.kind())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
