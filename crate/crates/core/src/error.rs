use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("unit error: {0}")]
    Unit(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inverter capability error: s_rated {s_rated} < p_rated {p_rated}")]
    Capability { p_rated: f64, s_rated: f64 },
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("power flow diverged after {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("action {value} for inverter {index} outside [{lo}, {hi}]")]
    ActionOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("no voltage-feasible setpoint: least violation {max_violation:e}")]
    Infeasible {
        max_violation: f64,
        /// Least-violating action found by the phase-1 relaxation.
        q_g: Vec<f64>,
    },
    #[error("solver hit the iteration limit ({0})")]
    MaxIterations(usize),
    #[error("grid search supports at most 3 inverters, got {0}")]
    TooManyInverters(usize),
    #[error("grid search found no voltage-feasible point")]
    NoFeasiblePoint,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite activation in layer {0}")]
    NonFiniteActivation(usize),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("degenerate truncation support (mass {0:e})")]
    DegenerateSupport(f64),
    #[error("action {value} outside support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("timestamps not strictly increasing at row {0}")]
    NonMonotoneTime(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for the error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Topology(_) => "TopologyError",
            Error::Unit(_) => "UnitError",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Capability { .. } => "CapabilityError",
            Error::UnknownBus(_) => "UnknownBus",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Diverged { .. } => "Diverged",
            Error::Numerical(_) => "NumericalError",
            Error::ActionOutOfBounds { .. } => "ActionOutOfBounds",
            Error::Infeasible { .. } => "Infeasible",
            Error::MaxIterations(_) => "MaxIterations",
            Error::TooManyInverters(_) => "TooManyInverters",
            Error::NoFeasiblePoint => "NoFeasiblePoint",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFiniteActivation(_) => "NonFiniteActivation",
            Error::NonFiniteGradient => "NonFiniteGradient",
            Error::DegenerateSupport(_) => "DegenerateSupport",
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonMonotoneTime(_) => "NonMonotoneTime",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
