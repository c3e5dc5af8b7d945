//! Cart–inverted-pendulum modelling and controller benchmarking.
//!
//! The crate is organised along the experiment pipeline:
//!
//! - [`plant`]: nonlinear equations of motion, linearization about the upright
//!   equilibrium, transfer functions, poles and controllability.
//! - [`simulate`]: fixed-step RK4 closed-loop engine and time-series logging.
//! - [`controllers`]: LQR (with a CARE solver), PI/PID and an ANFIS policy.
//! - [`anfis`]: first-order Takagi–Sugeno neuro-fuzzy model and hybrid training.
//! - [`scenarios`]: impulse and noise disturbances, transient metrics and the
//!   three-way benchmark.
//! - [`config`] and [`cli`]: run configuration and the command-line pipeline.

pub mod anfis;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod error;
pub mod plant;
pub mod poly;
pub mod scenarios;
pub mod simulate;

pub use error::{Error, Result};
