//! Controllers sharing the [`Controller`] interface.
//!
//! All of them regulate about the upright equilibrium `(0, 0, π, 0)` and emit
//! a voltage command.

pub mod care;
pub mod lqr;
pub mod pid;

use std::sync::Arc;

use crate::anfis::AnfisModel;
use crate::plant::PlantState;
use crate::Result;

pub use care::{solve_care, CareSolution};
pub use lqr::{lqr_step, LqrController, LqrDesign};
pub use pid::{pid_step, PidController, PidGains, PidState};

pub trait Controller: Send {
    /// Command voltage for the measured state; `dt` is the sample period.
    fn command(&mut self, state: &PlantState, dt: f64) -> Result<f64>;

    /// Restores construction-time internal state.
    fn reset(&mut self);
}

/// Open loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn command(&mut self, _state: &PlantState, _dt: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn reset(&mut self) {}
}

/// Stateless ANFIS policy evaluated on `(x, x_dot, theta - π, theta_dot)`.
#[derive(Debug, Clone)]
pub struct AnfisController {
    model: Arc<AnfisModel>,
}

impl AnfisController {
    pub fn new(model: Arc<AnfisModel>) -> Self {
        AnfisController { model }
    }
}

/// Command of a trained ANFIS policy for `state`.
pub fn anfis_step(model: &AnfisModel, state: &PlantState) -> Result<f64> {
    model.infer(&state.deviation())
}

impl Controller for AnfisController {
    fn command(&mut self, state: &PlantState, _dt: f64) -> Result<f64> {
        anfis_step(&self.model, state)
    }

    fn reset(&mut self) {}
}

/// Immutable recipe for a controller; every call to [`ControllerSpec::build`]
/// yields a fresh instance, so parallel runs never share step state.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    None,
    Lqr(nalgebra::RowVector4<f64>),
    Pi(PidGains),
    Pid(PidGains),
    Tsla(Arc<AnfisModel>),
}

impl ControllerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerSpec::None => "none",
            ControllerSpec::Lqr(_) => "LQR",
            ControllerSpec::Pi(_) => "PI",
            ControllerSpec::Pid(_) => "PID",
            ControllerSpec::Tsla(_) => "TS-LA",
        }
    }

    pub fn build(&self) -> Box<dyn Controller> {
        match self {
            ControllerSpec::None => Box::new(ZeroController),
            ControllerSpec::Lqr(k) => Box::new(LqrController::from_gain(*k)),
            ControllerSpec::Pi(g) | ControllerSpec::Pid(g) => Box::new(PidController::new(*g)),
            ControllerSpec::Tsla(m) => Box::new(AnfisController::new(Arc::clone(m))),
        }
    }
}
