use thiserror::Error;

/// Errors raised by model construction, discretization and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("step index {k} outside 1..={n}")]
    StepOutOfRange { k: usize, n: usize },

    #[error("randomizer draw {0} outside (0, 1]")]
    PhiOutOfRange(f64),

    #[error("length {len} is not divisible by coarsening factor {factor}")]
    NotDivisible { len: usize, factor: usize },

    #[error("path diverged at step {step}: non-finite state {state:?}")]
    Diverged { step: usize, state: Vec<f64> },

    #[error("delay {0} > 0 requires an initial segment")]
    MissingInitialSegment(f64),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("missing randomizer draws for level n = {0}")]
    MissingRandomizer(usize),

    #[error("nonpositive error value {0} cannot be fitted on a log scale")]
    NonPositiveError(f64),
}

pub type Result<T> = std::result::Result<T, SdeError>;
