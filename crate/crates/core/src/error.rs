use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index {index} out of range for {len} sites")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("Hilbert space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("rate formula is singular: {0}")]
    SingularRate(String),

    #[error("generator kernel has dimension {0}, expected 1")]
    DegenerateKernel(usize),

    #[error("integrator failure at t = {time}: {msg}")]
    Integrator { time: f64, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("time step too large: jump probability {p_total:.3e} per step exceeds {limit}")]
    StepSize { p_total: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("initial state has no Rydberg cluster")]
    EmptyCluster,

    #[error("initial state is not supported on the reduced basis")]
    UnsupportedState,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
