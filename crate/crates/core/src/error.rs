use std::fmt;
use std::path::PathBuf;

/// A position in formula source text, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at index {index}")]
    NonFiniteEntry { index: usize },

    #[error("empty embedding data")]
    EmptyData,

    #[error("index out of range: window [{start}, {end}] on trace of length {len}")]
    IndexOutOfRange { start: usize, end: usize, len: usize },

    #[error("vector norm below tolerance")]
    ZeroVector,

    #[error("chamfer distance requires non-empty patch sets")]
    EmptySet,

    #[error("metric `{metric}` cannot be used with {kind} embeddings")]
    IncompatibleMetric { metric: String, kind: String },

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("threshold must be finite and nonnegative, got {0}")]
    NegativeThreshold(f64),

    #[error("{pos}: {message}")]
    Lex { pos: Position, message: String },

    #[error("{pos}: {message}")]
    Parse {
        pos: Position,
        message: String,
        expected: Vec<String>,
    },

    #[error("{pos}: unresolved identifier `{name}`")]
    UnresolvedIdentifier { pos: Position, name: String },

    #[error("window of length {len} exceeds oracle limit {max}")]
    WindowTooLarge { len: usize, max: usize },

    #[error("formula depth {depth} exceeds oracle limit {max}")]
    FormulaTooDeep { depth: usize, max: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite input")]
    NonFiniteInput,

    #[error("history has {got} entries, model needs {need}")]
    InsufficientHistory { got: usize, need: usize },

    #[error("action {action:?} outside bounds [-{bound}, {bound}]")]
    ActionOutOfBounds { action: Vec<f64>, bound: f64 },

    #[error("unknown world model `{0}`")]
    UnknownModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Schema { context: String, message: String },
}

impl Error {
    pub(crate) fn schema(context: impl Into<String>, message: impl fmt::Display) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
