//! Fixed-step closed-loop simulation.
//!
//! Each step: the controller reads the full measured state and returns a
//! voltage, the actuator gain converts it to force, the disturbance force is
//! added, and the plant advances one RK4 step with the total force held
//! constant over the step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controllers::Controller;
use crate::plant::{derivative_unchecked, PhysicalParams, PlantState, UPRIGHT};
use crate::{Error, Result};

/// Any state component beyond this magnitude ends the run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub initial_state: PlantState,
    /// Newtons per volt.
    pub actuator_gain: f64,
    pub log_decimation: usize,
    /// A pendulum deviation beyond this angle (rad) counts as a fall and ends
    /// the run as diverged. `f64::INFINITY` disables the check.
    pub fall_angle: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 40.0,
            initial_state: PlantState::upright(),
            actuator_gain: 1.0,
            log_decimation: 1,
            fall_angle: std::f64::consts::FRAC_PI_2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::params(format!("dt must be in (0, 0.01], got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::params(format!("horizon must be >= dt, got {}", self.horizon)));
        }
        if !(self.actuator_gain.is_finite() && self.actuator_gain > 0.0) {
            return Err(Error::params(format!(
                "actuator_gain must be > 0, got {}",
                self.actuator_gain
            )));
        }
        if self.log_decimation == 0 {
            return Err(Error::params("log_decimation must be a positive integer"));
        }
        if !(self.fall_angle > 0.0) {
            return Err(Error::params("fall_angle must be > 0"));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Source of an external horizontal force on the cart.
pub trait Disturbance {
    fn force(&mut self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoDisturbance;

impl Disturbance for NoDisturbance {
    fn force(&mut self, _t: f64) -> f64 {
        0.0
    }
}

/// Classical RK4 step of the nonlinear plant with the force `u + d` held
/// constant. A non-finite result is returned as-is; callers flag it.
pub fn rk4_step(state: &PlantState, u: f64, d: f64, dt: f64, params: &PhysicalParams) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::input(format!("dt must be > 0, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("plant state"));
    }
    let f = u + d;
    let s0 = state.vector();
    let k1 = derivative_unchecked(&s0, f, params);
    let k2 = derivative_unchecked(&axpy(&s0, 0.5 * dt, &k1), f, params);
    let k3 = derivative_unchecked(&axpy(&s0, 0.5 * dt, &k2), f, params);
    let k4 = derivative_unchecked(&axpy(&s0, dt, &k3), f, params);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(PlantState::from_vector(next, state.t + dt))
}

#[inline]
fn axpy(x: &[f64; 4], a: f64, y: &[f64; 4]) -> [f64; 4] {
    [x[0] + a * y[0], x[1] + a * y[1], x[2] + a * y[2], x[3] + a * y[3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReason {
    NonFinite,
    LimitExceeded,
    Fell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    /// Controller command (V).
    pub u: f64,
    /// Disturbance force (N).
    pub d: f64,
}

impl SeriesRow {
    pub fn state(&self) -> PlantState {
        PlantState { x: self.x, x_dot: self.x_dot, theta: self.theta, theta_dot: self.theta_dot, t: self.t }
    }

    pub fn phi(&self) -> f64 {
        self.theta - UPRIGHT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub rows: Vec<SeriesRow>,
    /// Spacing of the logged rows.
    pub dt_log: f64,
    pub diverged: Option<DivergenceReason>,
}

impl TimeSeries {
    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
    }

    pub fn last(&self) -> Option<&SeriesRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,x_dot,theta,theta_dot,u,d")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.t, r.x, r.x_dot, r.theta, r.theta_dot, r.u, r.d
            )?;
        }
        Ok(())
    }
}

fn check_divergence(s: &PlantState, fall_angle: f64) -> Option<DivergenceReason> {
    let v = s.vector();
    if v.iter().any(|c| !c.is_finite()) {
        Some(DivergenceReason::NonFinite)
    } else if v.iter().any(|c| c.abs() > DIVERGENCE_LIMIT) {
        Some(DivergenceReason::LimitExceeded)
    } else if (s.theta - UPRIGHT).abs() > fall_angle {
        Some(DivergenceReason::Fell)
    } else {
        None
    }
}

/// Runs one closed-loop simulation and returns the decimated log.
///
/// Rows are logged at every step index divisible by `log_decimation`,
/// including the final step when it is. On divergence the run stops and the
/// offending state is appended as the last row.
pub fn run_closed_loop(
    config: &SimConfig,
    controller: &mut dyn Controller,
    disturbance: &mut dyn Disturbance,
    params: &PhysicalParams,
) -> Result<TimeSeries> {
    config.validate()?;
    params.validate()?;
    let n_steps = config.steps();
    let dec = config.log_decimation;
    let t0 = config.initial_state.t;
    let mut rows = Vec::with_capacity(n_steps / dec + 2);
    let mut state = config.initial_state;
    let mut diverged = check_divergence(&state, config.fall_angle);

    if diverged.is_none() {
        for i in 0..=n_steps {
            state.t = t0 + i as f64 * config.dt;
            let cmd = controller.command(&state, config.dt)?;
            let d = disturbance.force(state.t);
            if i % dec == 0 {
                rows.push(row(&state, cmd, d));
            }
            if i == n_steps {
                break;
            }
            let next = rk4_step(&state, config.actuator_gain * cmd, d, config.dt, params)?;
            if let Some(reason) = check_divergence(&next, config.fall_angle) {
                let mut last = next;
                last.t = t0 + (i + 1) as f64 * config.dt;
                rows.push(row(&last, cmd, d));
                diverged = Some(reason);
                break;
            }
            state = next;
        }
    } else {
        rows.push(row(&state, 0.0, 0.0));
    }

    Ok(TimeSeries { rows, dt_log: config.dt * dec as f64, diverged })
}

fn row(s: &PlantState, u: f64, d: f64) -> SeriesRow {
    SeriesRow { t: s.t, x: s.x, x_dot: s.x_dot, theta: s.theta, theta_dot: s.theta_dot, u, d }
}
