use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: dynalg::Error,
    },
    #[error("bad word expression: {0}")]
    Expression(String),
}

impl CliError {
    pub fn runtime(context: impl Into<String>, source: dynalg::Error) -> Self {
        CliError::Runtime {
            context: context.into(),
            source,
        }
    }
}
