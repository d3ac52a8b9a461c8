use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("Newton-Raphson failed to converge at step {step} (t = {time_s:.6} s), residual {residual:.3e}")]
    NewtonRaphson {
        step: usize,
        time_s: f64,
        residual: f64,
    },

    #[error("input spectrum is zero at line {line}")]
    ZeroInputLine { line: usize },

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("non-finite cost after {iterations} iterations")]
    NonFiniteCost { iterations: usize },

    #[error("simulation diverged at sample {sample}")]
    Diverged { sample: usize },

    #[error("steady state not reached after {periods} periods (residual {residual:.3e})")]
    NotSteady { periods: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
