use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid quantization scheme: {0}")]
    InvalidScheme(String),

    #[error("negative energy reading {0} W")]
    NegativeReading(f64),

    #[error("level {level} outside 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("appliance {id} is not on the roster of {roster} appliances")]
    UnknownAppliance { id: usize, roster: usize },

    #[error("appliance {0} reported more than once")]
    DuplicateAppliance(usize),

    #[error("vector length {actual} does not match expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exhaustive enumeration over {0} bits is too large (limit 16)")]
    EnumerationTooLarge(usize),

    #[error("timestamp {got} does not follow {last}")]
    OutOfOrderTimestamp { last: u64, got: u64 },

    #[error("aggregation round is empty")]
    EmptyRound,

    #[error("user {0} appears twice in one round")]
    DuplicateUser(u64),

    #[error("records mix timestamps {0} and {1}")]
    MixedTimestamps(u64, u64),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
