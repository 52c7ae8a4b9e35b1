use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite state: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid occupancy grid: {0}")]
    Grid(String),

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario field `{path}`: {message}")]
    Field { path: String, message: String },

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
