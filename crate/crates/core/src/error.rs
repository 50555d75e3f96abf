use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("window discipline violated: decrement would leave weight {weight} at {key}")]
    WindowDiscipline { key: String, weight: f64 },

    #[error("time travel: requested step {requested} precedes last update at step {last}")]
    TimeTravel { requested: u64, last: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("structural mismatch: {0}")]
    StructuralMismatch(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
