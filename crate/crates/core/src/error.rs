use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field index {index} out of range (system has {count} fields including the drift)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported field representation: {0}")]
    UnsupportedRepresentation(String),

    #[error("system is not bracket-generating within depth {max_depth}: achieved rank {rank} of {n}")]
    NotBracketGenerating { rank: usize, n: usize, max_depth: usize },

    #[error("unknown catalog system `{0}`")]
    UnknownSystem(String),

    #[error("invalid system description: {0}")]
    InvalidSystem(String),

    #[error("invalid control signal: {0}")]
    InvalidSignal(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain escape at t = {time:.6}: state norm {norm:.3e} exceeds bound {bound:.1e}")]
    DomainEscape { time: f64, norm: f64, bound: f64 },

    #[error("endpoint differential is rank deficient (rank {rank} < {n})")]
    SingularFiber { rank: usize, n: usize },

    #[error("steering chart radius exceeded: residual {residual:.3e} after {iterations} Newton iterations; subdivide the displacement")]
    ChartRadiusExceeded { residual: f64, iterations: usize },

    #[error("exponent p = {p} is not admissible: {reason}")]
    Inadmissible { p: f64, reason: String },

    #[error("drift steering is only available for step <= 2 (chart step is {step})")]
    UnsupportedStep { step: usize },

    #[error("anchor control ends at distance {distance:.3e} from the start of the path")]
    AnchorMismatch { distance: f64 },

    #[error("path lifting failed at sample {index}: {reason}")]
    LiftFailed { index: usize, reason: String },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("indeterminate: {0}")]
    Indeterminate(String),
}
