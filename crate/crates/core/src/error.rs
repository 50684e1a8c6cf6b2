use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate samples: need at least 2 distinct ops values, got {distinct}")]
    DegenerateSamples { distinct: usize },

    #[error("non-positive time {seconds} s in sample {index}")]
    NonPositiveTime { index: usize, seconds: f64 },

    #[error("fitted slope {slope} is not positive")]
    NonPositiveSlope { slope: f64 },

    #[error("invalid matrix dimensions: {0}")]
    InvalidDims(String),

    #[error("ops count {ops} is not a whole number of rows (n*k = {row_ops})")]
    NotRowAligned { ops: u64, row_ops: u64 },

    #[error("arithmetic overflow: {0}")]
    Overflow(&'static str),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("backend failure on device `{device}`: {reason}")]
    BackendFailure { device: String, reason: String },

    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse failure at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("numerical failure in LP solver: {0}")]
    NumericalFailure(String),

    #[error("grid oracle supports at most {max} devices, got {got}")]
    TooManyDevices { got: usize, max: usize },

    #[error("device `{device}` needs k % {align} == 0 but k = {k}")]
    UnalignableK { device: String, k: u64, align: u64 },

    #[error("no device can absorb {rows} shaved rows without breaking alignment")]
    UnalignableRows { rows: u64 },

    #[error("no tiling of {rows}x{k} (n = {n}) fits the ops window [{lo}, {hi}]")]
    NoFeasibleTiling {
        rows: u64,
        k: u64,
        n: u64,
        lo: u64,
        hi: u64,
    },

    #[error("no synthetic device for scheduled device `{0}`")]
    MissingDevice(String),

    #[error("machine hash mismatch: schedule has {schedule}, machine has {machine}")]
    MachineMismatch { schedule: String, machine: String },

    #[error("schedule format: {0}")]
    ScheduleFormat(String),

    #[error("no inputs")]
    NoInputs,

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_) | Error::Infeasible)
    }
}
