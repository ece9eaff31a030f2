use std::path::PathBuf;

/// Problems with the run description itself.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config error{}: {field}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Semantic {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    /// Unreadable or malformed input data, e.g. a potential sample file.
    #[error("input error: {0}")]
    Input(optpot::Error),

    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Solver(optpot::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Output { .. } => 1,
            CliError::Solver(_) => 2,
        }
    }
}
