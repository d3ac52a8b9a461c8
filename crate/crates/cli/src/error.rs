use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing {artifact}; run `{stage}` first")]
    Prerequisite { artifact: String, stage: &'static str },

    #[error("numerical failure in stage `{stage}`: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: hystid::Error,
    },

    #[error("no usable model: {0}")]
    NoModel(String),

    #[error("corrupt artifact {path}: {message}")]
    Artifact { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } | CliError::NoModel(_) => 3,
            CliError::Prerequisite { .. } => 4,
            CliError::Artifact { .. } | CliError::Io { .. } => 1,
        }
    }

    /// Classifies a library error raised while running `stage`.
    pub fn from_core(stage: &'static str, e: hystid::Error) -> Self {
        use hystid::Error as E;
        match e {
            E::Config(msg) => CliError::Config(format!("{stage}: {msg}")),
            E::Io(source) => CliError::Io { path: stage.to_string(), source },
            other => CliError::Numerical { stage, source: other },
        }
    }
}
