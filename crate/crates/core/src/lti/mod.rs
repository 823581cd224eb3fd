//! Continuous-time LTI state-space models.
//!
//! Covers construction and validation, the Hurwitz test, stacking a plant
//! with an input filter, frequency response, the H∞ norm and fixed-step
//! RK4 simulation.

mod freq;
mod hinf;
mod model;
mod sim;

pub use freq::{dc_gain, frequency_response, log_space};
pub use hinf::{HinfEstimate, hinf_norm, hinf_norm_with, HinfOptions};
pub use model::{build_extended_system, is_hurwitz, spectral_abscissa, StateSpaceModel};
pub use sim::{simulate, InputSignal, Trajectory};

use thiserror::Error;

/// Default strict margin for [`is_hurwitz`].
pub const DEFAULT_HURWITZ_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix {0} contains a non-finite entry")]
    NonFinite(&'static str),
    #[error("selection matrices must satisfy gamma_c + gamma_f = I (entry ({row}, {col}) sums to {sum})")]
    Selection { row: usize, col: usize, sum: f64 },
    #[error("system is not Hurwitz (spectral abscissa {abscissa:e}); norm undefined")]
    Unstable { abscissa: f64 },
    #[error("resolvent (jwI - A) is singular at omega = {omega}")]
    SingularResolvent { omega: f64 },
    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
