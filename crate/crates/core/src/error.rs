use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category; the CLI maps it to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite input at index {index}")]
    NonFiniteInput { index: usize },

    #[error("degenerate recurrent matrix after {attempts} draws")]
    DegenerateRecurrentMatrix { attempts: u32 },

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("no calibration data")]
    NoCalibrationData,

    #[error("unnormalized weights")]
    UnnormalizedWeights,

    #[error("calibration point not in the past: calibration time {calib_time} >= query time {query_time}")]
    NotInPast { calib_time: i64, query_time: i64 },

    #[error("calibration times must be strictly increasing: got {time} after {last}")]
    NonMonotoneTime { time: i64, last: i64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("singular normal equations; use a ridge penalty > 0")]
    SingularSystem,

    #[error("insufficient context: index {index} needs at least index {required}")]
    InsufficientContext { index: usize, required: usize },

    #[error("diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("quantile level {requested} was not fitted; fitted levels: {fitted:?}")]
    LevelNotFitted { requested: f64, fitted: Vec<f64> },

    #[error("non-stationary coefficient {0}")]
    NonStationary(f64),

    #[error("column '{name}' not found; available columns: {available:?}")]
    MissingColumn { name: String, available: Vec<String> },

    #[error("cannot parse '{value}' at row {row}, column '{column}'")]
    Parse { row: usize, column: String, value: String },

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error("all grid points failed: {0:?}")]
    GridFailed(Vec<String>),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::LevelNotFitted { .. } | Error::Toml(_) => ErrorKind::Config,
            Error::DegenerateRecurrentMatrix { .. }
            | Error::SingularSystem
            | Error::Diverged { .. }
            | Error::UnnormalizedWeights => ErrorKind::Numeric,
            Error::Stage { source, .. } => source.kind(),
            Error::GridFailed(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
