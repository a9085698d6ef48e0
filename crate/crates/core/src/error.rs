use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum NgcError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("duplicate key (replicate={replicate}, time={time}, variable={variable}) at rows {first_row} and {second_row}")]
    DuplicateKey {
        replicate: String,
        time: i64,
        variable: String,
        first_row: usize,
        second_row: usize,
    },
    #[error("non-numeric {field} `{value}` at row {row}")]
    NonNumeric { field: &'static str, value: String, row: usize },
    #[error("ragged panel: replicate `{replicate}` has no observations at time {time}")]
    RaggedPanel { replicate: String, time: i64 },
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("column {variable} at time {time} has zero variance")]
    ZeroVariance { variable: String, time: i64 },
    #[error("non-positive entry {value} at (replicate {replicate}, time {time}, variable {variable}) cannot be log transformed")]
    NonPositive { replicate: usize, time: usize, variable: usize, value: f64 },
    #[error("panel has {0} missing cells")]
    MissingValues(usize),
    #[error("ranking variable {variable} is missing for replicate {replicate} at the latest time")]
    MissingRanking { variable: usize, replicate: usize },
    #[error("model is unstable: companion spectral radius {radius}")]
    Unstable { radius: f64 },
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),
    #[error("requested SNR {target} is not attainable for this model (SNR is fixed at {achieved})")]
    InfeasibleSnr { target: f64, achieved: f64 },
    #[error("model carries no signal")]
    NoSignal,
    #[error("group lasso did not converge in {sweeps} sweeps (kkt residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64, best: Vec<f64> },
    #[error("solver failed at grid index {index}: {source}")]
    PathFailure {
        index: usize,
        #[source]
        source: Box<NgcError>,
    },
    #[error("solver failed for response {response}: {source}")]
    ResponseFailure {
        response: usize,
        #[source]
        source: Box<NgcError>,
    },
    #[error("singular matrix (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown format `{0}`")]
    UnknownFormat(String),
}

pub type Result<T> = std::result::Result<T, NgcError>;

impl NgcError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        NgcError::Io { path: path.as_ref().display().to_string(), source }
    }
}
