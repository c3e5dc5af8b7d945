use serde::{Deserialize, Serialize};

use super::Controller;
use crate::plant::{PlantState, UPRIGHT};
use crate::{Error, Result};

/// Parallel-form PID gains with a first-order derivative filter `N s / (s + N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub filter_n: f64,
}

impl PidGains {
    pub fn reference_pi() -> Self {
        PidGains { kp: 27.234, ki: 85.597, kd: 0.0, filter_n: 100.0 }
    }

    pub fn reference_pid() -> Self {
        PidGains { kp: 36.887, ki: 165.496, kd: 1.505, filter_n: 678.646 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::params(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.filter_n.is_finite() && self.filter_n > 0.0) {
            return Err(Error::params(format!("filter_n must be > 0, got {}", self.filter_n)));
        }
        Ok(())
    }
}

/// Integrator and filter memory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub derivative: f64,
    pub prev_error: Option<f64>,
}

/// One PID update.
///
/// The integral uses the trapezoidal rule and the filtered derivative the
/// backward-Euler map `s ≈ (1 - z⁻¹) / dt`:
///
/// ```text
/// D_k = (D_{k-1} + kd N (e_k - e_{k-1})) / (1 + N dt)
/// ```
///
/// The first sample initializes the memory, so there is no derivative kick.
pub fn pid_step(gains: &PidGains, error: f64, dt: f64, state: &mut PidState) -> f64 {
    if let Some(prev) = state.prev_error {
        state.integral += 0.5 * (error + prev) * dt;
        state.derivative = (state.derivative + gains.kd * gains.filter_n * (error - prev))
            / (1.0 + gains.filter_n * dt);
    }
    state.prev_error = Some(error);
    gains.kp * error + gains.ki * state.integral + state.derivative
}

/// SISO loop on the pendulum angle only; the error is `π - theta`.
#[derive(Debug, Clone)]
pub struct PidController {
    gains: PidGains,
    state: PidState,
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        PidController { gains, state: PidState::default() }
    }
}

impl Controller for PidController {
    fn command(&mut self, state: &PlantState, dt: f64) -> Result<f64> {
        Ok(pid_step(&self.gains, UPRIGHT - state.theta, dt, &mut self.state))
    }

    fn reset(&mut self) {
        self.state = PidState::default();
    }
}
