use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model file {0} not found")]
    MissingModel(PathBuf),

    #[error("no expressions in {0}; run `explain` first or pass --expressions")]
    MissingExpressions(PathBuf),

    #[error(transparent)]
    Core(#[from] sede::Error),
}

impl CliError {
    pub const USAGE: u8 = 2;

    /// Stable category names, printed as `error[<category>]` on stderr.
    pub fn category(&self) -> &'static str {
        use sede::Error as E;
        match self {
            CliError::ConfigUnreadable { .. } => "config-unreadable",
            CliError::MissingModel(_) => "missing-model",
            CliError::MissingExpressions(_) => "missing-expressions",
            CliError::Core(e) => match e {
                E::Config(_) | E::Parse { .. } => "config-invalid",
                E::Io { .. } | E::Csv(_) => "io",
                E::InsufficientFailures { .. } => "insufficient-failures",
                E::Training { .. } => "training",
                E::DimensionMismatch { .. } => "model-mismatch",
                E::Unsatisfiable(_) | E::EmptyExpression | E::UnknownParameter(_) => "expression",
                _ => "internal",
            },
        }
    }

    pub fn code(&self) -> u8 {
        match self.category() {
            "config-unreadable" => 3,
            "config-invalid" => 4,
            "missing-model" => 5,
            "missing-expressions" => 6,
            "io" => 7,
            "model-mismatch" => 8,
            "insufficient-failures" => 9,
            "training" => 10,
            "expression" => 11,
            _ => 1,
        }
    }
}
