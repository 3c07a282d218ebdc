//! Static and moving waypoints.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_PASS_TOLERANCE: f64 = 0.3;

/// Per-axis sinusoidal displacement `A·sin(2πt/P + φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionLaw {
    /// Amplitude per axis [m].
    pub amplitude: [f64; 3],
    /// Period per axis [s]; must be positive.
    pub period: [f64; 3],
    /// Phase per axis [rad].
    #[serde(default)]
    pub phase: [f64; 3],
}

impl MotionLaw {
    pub fn displacement(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| {
            self.amplitude[i] * (TAU * t / self.period[i] + self.phase[i]).sin()
        })
    }

    /// Upper bound on `‖d/dt displacement‖`.
    pub fn max_speed(&self) -> f64 {
        Vector3::from_fn(|i, _| TAU * self.amplitude[i].abs() / self.period[i]).norm()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.period.iter().all(|p| p.is_finite() && *p > 0.0) {
            return Err(Error::Validation("motion period > 0".into()));
        }
        if !self.amplitude.iter().chain(self.phase.iter()).all(|v| v.is_finite()) {
            return Err(Error::Validation("motion amplitude and phase finite".into()));
        }
        Ok(())
    }
}

/// A point to fly through, optionally moving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Position at `t = 0` (or the fixed position) [m].
    pub base_position: Vector3<f64>,
    pub motion: Option<MotionLaw>,
    /// Radius of the pass ball [m].
    pub pass_tolerance: f64,
    /// The vehicle must come to rest here; the planner uses zero velocity.
    pub stop: bool,
}

impl Waypoint {
    pub fn fixed(position: Vector3<f64>) -> Self {
        Self {
            base_position: position,
            motion: None,
            pass_tolerance: DEFAULT_PASS_TOLERANCE,
            stop: false,
        }
    }

    pub fn with_motion(mut self, motion: MotionLaw) -> Self {
        self.motion = Some(motion);
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.pass_tolerance = tol;
        self
    }

    pub fn stopping(mut self) -> Self {
        self.stop = true;
        self
    }

    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        match &self.motion {
            Some(m) => self.base_position + m.displacement(t),
            None => self.base_position,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_position.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("waypoint position finite".into()));
        }
        if !(self.pass_tolerance.is_finite() && self.pass_tolerance > 0.0) {
            return Err(Error::Validation("pass_tolerance > 0".into()));
        }
        if let Some(m) = &self.motion {
            m.validate()?;
        }
        Ok(())
    }
}
