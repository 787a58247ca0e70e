use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported for {model}: {operation}")]
    Unsupported { model: String, operation: &'static str },

    #[error("quadrature did not reach tolerance ({context}); partial result {partial}")]
    Accuracy { partial: f64, context: String },

    #[error("fixed point did not converge: {0}")]
    Convergence(String),

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
