//! Sampled-data L1 adaptive augmentation.
//!
//! The controller is three discrete laws ticking at the sample period
//! `Ts`: an adaptation law producing the piecewise-constant uncertainty
//! estimate, an output predictor replicating the desired dynamics with the
//! estimate in place of the true uncertainty, and a control law passing
//! the estimate through a low-pass filter chain. The analysis side builds
//! the interconnected transfer functions behind the stability conditions
//! and simulates the (non-implementable) reference system for performance
//! gap measurements.

mod analysis;
mod controller;
mod gains;

pub use analysis::{
    closed_loop_sim, reference_system_sim, select_stabilizing_k, stability_check, theorem2_gap,
    SimTrajectory, StabilityBounds, StabilityReport,
};
pub use controller::{build_filter, L1Controller, L1State};
pub use gains::{build_gains, inverse_desired_split, DesiredSystem, L1Gains};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum L1Error {
    #[error("desired-system A matrix is not Hurwitz (max Re eig = {max_re:.3e})")]
    NotHurwitz { max_re: f64 },
    #[error("Lambda matrix is singular")]
    SingularLambda,
    #[error("Q must be symmetric positive definite: {0}")]
    NonSpdQ(String),
    #[error("Phi(Ts) is singular; Ts may be too small for conditioning")]
    SingularPhi,
    #[error("C(s)M^-1(s) is improper: the filter C must be strictly proper")]
    NonProperFilter,
    #[error("desired system M(s) has a non-minimum-phase transmission zero at Re = {re:.3e}")]
    NonMinimumPhaseM { re: f64 },
    #[error("filter realization O(s) is unstable (max Re eig = {max_re:.3e})")]
    UnstableFilter { max_re: f64 },
    #[error("C_m B_m is singular; desired system must have relative degree one")]
    SingularCmBm,
    #[error("mismatched runs: {0}")]
    MismatchedRuns(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Lti(#[from] crate::lti::LtiError),
}
