use thiserror::Error;

pub type Result<T> = std::result::Result<T, GrwError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrwError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("configuration grid too large: {points}^{particles} points exceeds the cap of {cap}")]
    GridTooLarge {
        points: usize,
        particles: usize,
        cap: usize,
    },

    #[error("invalid wave packet: {0}")]
    InvalidPacket(String),

    #[error("invalid branch state: {0}")]
    InvalidBranchState(String),

    #[error("invalid region [{lower}, {upper}]")]
    InvalidRegion { lower: f64, upper: f64 },

    #[error("particle index {index} out of range for {count} particles")]
    ParticleOutOfRange { index: usize, count: usize },

    #[error("zero-probability collapse: |L psi| = {norm:e} at center {center}")]
    ZeroProbabilityCollapse { norm: f64, center: f64 },

    #[error("all posterior factors underflow at center {center}")]
    PosteriorUnderflow { center: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("spatial grid covers only {covered} of the total mass")]
    InsufficientCoverage { covered: f64 },

    #[error("total mass is zero")]
    ZeroMass,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("statistical test not applicable: {0}")]
    NotApplicable(String),

    #[error("no snapshot at time {0}")]
    MissingSnapshot(f64),

    #[error("quadrature did not converge on [{lower}, {upper}]")]
    QuadratureDiverged { lower: f64, upper: f64 },

    #[error("{failures} of {total} trajectories failed; first failure: {first}")]
    EnsembleFailed {
        failures: usize,
        total: usize,
        first: Box<GrwError>,
    },

    #[error("trajectory {trajectory} aborted after {events} events at t = {time}: {source}")]
    TrajectoryAborted {
        trajectory: u64,
        events: usize,
        time: f64,
        #[source]
        source: Box<GrwError>,
    },
}

impl GrwError {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            GrwError::ZeroProbabilityCollapse { .. }
            | GrwError::PosteriorUnderflow { .. }
            | GrwError::QuadratureDiverged { .. } => true,
            GrwError::TrajectoryAborted { source, .. } => source.is_numerical(),
            GrwError::EnsembleFailed { first, .. } => first.is_numerical(),
            _ => false,
        }
    }
}
