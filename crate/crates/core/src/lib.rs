//! Online time-optimal trajectory generation for a pair of quadrotors.
//!
//! The pipeline per control cycle:
//!
//! 1. [`velocity_search`] picks waypoint velocities for a point-mass model
//!    with a two-pass graph search over analytic bang-bang legs
//!    ([`pointmass`]), and finds when the two point-mass references first
//!    come too close.
//! 2. [`pmpc`] solves one joint optimal control problem for both vehicles
//!    with the full [`model`] dynamics, warm-started from the point-mass
//!    references, using a few real-time SQP iterations.
//! 3. [`sim`] applies the first input, integrates the dynamics and advances
//!    each vehicle's waypoint index.
//!
//! [`scenario`] and [`export`] handle the on-disk formats used by the CLI.

pub mod export;
pub mod model;
pub mod pmpc;
pub mod pointmass;
pub mod scenario;
pub mod sim;
pub mod velocity_search;
pub mod waypoint;

pub use model::{ControlInput, ModelParams, QuadState};
pub use pointmass::{AxisProfile, MassPointTrajectory};
pub use scenario::TrackScenario;
pub use sim::{SimLog, SimSummary};
pub use velocity_search::{PlannerConfig, VelocityPlan};
pub use waypoint::{MotionLaw, Waypoint};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("no acceleration reduction factor in (0, 1] reaches the target time")]
    NoRoot,
    #[error("coincident waypoints: direction undefined")]
    CoincidentWaypoints,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
