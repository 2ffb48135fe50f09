use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("coverage error: cell ({row}, {col}) is not covered by any tile")]
    Coverage { row: usize, col: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("stage error: {0}")]
    Stage(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("training diverged at iteration {iter}: loss = {loss}")]
    Diverged { iter: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("geojson error: {0}")]
    GeoJson(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
