//! Randomized tamed Euler scheme for Lévy-driven SDEs
//!
//! ```text
//! dx_t = μ(t, x_t) dt + σ(t, x_t) dw_t + ∫ γ(t, x_t, z) ñ_p(dt, dz)
//! ```
//!
//! with superlinearly growing coefficients and a drift that is only measurable
//! in time. Each step evaluates the drift at a uniformly drawn time inside the
//! cell and divides all three coefficients by `1 + n^{-1/2}|x|^{3ζ/2}`.
//!
//! Modules:
//! - [`model`]: coefficient sets, jump laws and the double-well preset
//! - [`grid`]: uniform grids and the left-endpoint / randomized evaluation maps
//! - [`rng`]: counter-keyed substreams and coupled path draws
//! - [`taming`]: the taming transform and its numeric bound checks
//! - [`scheme`]: time steppers, including the delay/switching variant
//! - [`markov`]: continuous-time Markov chains for regime switching
//! - [`harness`]: strong-error studies, rate fits and moment probes
//! - [`verify`]: log-space checks of the double-well parameter constraints

pub mod error;
pub mod grid;
pub mod harness;
pub mod markov;
pub mod model;
pub mod rng;
pub mod scheme;
pub mod taming;
pub mod verify;

mod sum;

pub use error::{Result, SdeError};
pub use grid::TimeGrid;
pub use harness::{
    fit_rate, moment_probe, strong_error_study, strong_error_study_with_progress, taming_gap_probe,
    ErrorReport, ErrorRow, ErrorTime, MomentRow, ProbeConfig, RateFit, SlopeEntry, StudyConfig,
    StudyMetadata, TamingGapReport, TamingGapRow,
};
pub use markov::{regime_at, simulate_ctmc, Generator, MarkovPath};
pub use model::{
    double_well_model, double_well_preset, probe_growth, sawtooth, CoefficientSet,
    DoubleWellParams, EnvState, GrowthReport, InitialLaw, JumpModel, MarkLaw, Model, SampleBox,
};
pub use rng::{
    brownian_increments, coarsen, jump_path, Increments, JumpPath, PathDraw, StreamKey, StreamTag,
};
pub use scheme::{
    simulate_path, simulate_sdde_switching, step, SchemeConfig, SchemeVariant, Trajectory,
};
pub use taming::{check_taming_bounds, tame, BoundReport, TamingConfig};
pub use verify::{
    check_coercivity, check_double_well_monotonicity_empirical, check_monotonicity, log_sum_exp,
    normal_abs_moment, normal_moment, ConstraintReport, MonotonicityReport, Scale,
};
