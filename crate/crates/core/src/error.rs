use thiserror::Error;

/// Errors raised by the simulation, transport and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The scheme produced a non-finite state.
    #[error("integration error: particle {particle} became non-finite at step {step} (t = {time})")]
    Integration {
        particle: usize,
        step: usize,
        time: f64,
    },

    /// The requested operation is not available for this model or estimator.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An exact method was asked for an instance above its size cap.
    #[error("size cap exceeded: {size} > {cap} ({hint})")]
    SizeCap {
        size: usize,
        cap: usize,
        hint: &'static str,
    },

    /// Invalid experiment configuration, anchored to a line when known.
    #[error("{}", match .line { Some(l) => format!("config line {l}: {msg}"), None => format!("config: {msg}") })]
    Config { line: Option<usize>, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
