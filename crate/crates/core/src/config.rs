//! Run configuration: a single JSON document that fully determines a run.
//!
//! Every section and field is optional; omitted values take the reference
//! rig defaults below. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anfis::TrainConfig;
use crate::controllers::PidGains;
use crate::plant::{PhysicalParams, PlantState};
use crate::scenarios::{ImpulseSpec, MetricBands, NoiseSpec, Scenario};
use crate::simulate::SimConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the dataset subsample/split and the noise generator.
    pub seed: u64,
    pub plant: PlantSection,
    pub sim: SimSection,
    pub lqr: LqrSection,
    pub pi: PidGains,
    pub pid: PidGains,
    pub anfis: AnfisSection,
    pub impulse: ImpulseSection,
    pub noise: NoiseSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            plant: PlantSection::default(),
            sim: SimSection::default(),
            lqr: LqrSection::default(),
            pi: PidGains::reference_pi(),
            pid: PidGains::reference_pid(),
            anfis: AnfisSection::default(),
            impulse: ImpulseSection::default(),
            noise: NoiseSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub cart_mass: f64,
    pub pend_mass: f64,
    pub friction: f64,
    pub inertia: f64,
    pub half_length: f64,
    pub gravity: f64,
    /// Free-form note, ignored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = PhysicalParams::reference();
        PlantSection {
            cart_mass: p.cart_mass,
            pend_mass: p.pend_mass,
            friction: p.friction,
            inertia: p.inertia,
            half_length: p.half_length,
            gravity: p.gravity,
            comment: None,
        }
    }
}

impl PlantSection {
    pub fn params(&self) -> PhysicalParams {
        PhysicalParams {
            cart_mass: self.cart_mass,
            pend_mass: self.pend_mass,
            friction: self.friction,
            inertia: self.inertia,
            half_length: self.half_length,
            gravity: self.gravity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    pub actuator_gain: f64,
    pub log_decimation: usize,
    /// Pendulum deviation counted as a fall, degrees.
    pub fall_angle_deg: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimConfig::default();
        SimSection {
            dt: s.dt,
            horizon: s.horizon,
            actuator_gain: s.actuator_gain,
            log_decimation: s.log_decimation,
            fall_angle_deg: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrSection {
    /// Weights on `(x, x_dot, phi, phi_dot)`.
    pub q_diag: [f64; 4],
    pub r: f64,
}

impl Default for LqrSection {
    fn default() -> Self {
        LqrSection { q_diag: [1200.0, 0.0, 100.0, 0.0], r: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnfisSection {
    pub epochs: usize,
    pub mfs_per_input: usize,
    pub learning_rate: f64,
    pub max_halvings: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Stage-1 LQR runs start from these `(x, x_dot, phi, phi_dot)` deviations.
    pub initial_deviations: Vec<[f64; 4]>,
    /// Length of each stage-1 run, s.
    pub collection_horizon: f64,
    /// Keep every n-th integration step of the stage-1 runs.
    pub collection_decimation: usize,
}

impl Default for AnfisSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        AnfisSection {
            epochs: t.epochs,
            mfs_per_input: t.mfs_per_input,
            learning_rate: t.learning_rate,
            max_halvings: t.max_halvings,
            train_count: 500,
            test_count: 91,
            initial_deviations: vec![
                [0.0, 0.0, 0.2, 0.0],
                [0.0, 0.0, -0.15, 0.0],
                [0.3, 0.0, 0.0, 0.0],
                [-0.25, 0.0, 0.1, 0.0],
                [0.0, 0.5, 0.0, 0.0],
                [0.0, 0.0, 0.0, -1.0],
                [0.2, -0.3, -0.1, 0.5],
                [-0.1, 0.2, 0.05, 0.8],
            ],
            collection_horizon: 10.0,
            collection_decimation: 10,
        }
    }
}

impl AnfisSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            mfs_per_input: self.mfs_per_input,
            learning_rate: self.learning_rate,
            max_halvings: self.max_halvings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpulseSection {
    pub onset: f64,
    pub width: f64,
    /// One benchmark cell per magnitude, N.
    pub magnitudes: Vec<f64>,
}

impl Default for ImpulseSection {
    fn default() -> Self {
        ImpulseSection { onset: 20.0, width: 0.05, magnitudes: vec![10.0, 20.0, 30.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// N²
    pub power: f64,
    pub sample_time: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { power: 0.5, sample_time: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub settle_band_deg: f64,
    pub slope_threshold: f64,
    pub window_fraction: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let b = MetricBands::default();
        MetricsSection {
            settle_band_deg: 0.5,
            slope_threshold: b.slope_threshold,
            window_fraction: b.window_fraction,
        }
    }
}

/// A command manifest also parses as a config source: its embedded `config`
/// is used verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Malformed { kind: "config", message: e.to_string() })?;
        let is_manifest = value.get("config_sha256").is_some() && value.get("config").is_some();
        let cfg = if is_manifest {
            let m: Manifest = serde_json::from_value(value)
                .map_err(|e| Error::Malformed { kind: "manifest", message: e.to_string() })?;
            if m.config.sha256()? != m.config_sha256 {
                return Err(Error::Malformed {
                    kind: "manifest",
                    message: "config_sha256 does not match the embedded config".into(),
                });
            }
            m.config
        } else {
            serde_json::from_value(value).map_err(|e| Error::Malformed { kind: "config", message: e.to_string() })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.sim_config().validate()?;
        if self.lqr.q_diag.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::params("lqr.q_diag entries must be finite and >= 0"));
        }
        if !(self.lqr.r.is_finite() && self.lqr.r > 0.0) {
            return Err(Error::params(format!("lqr.r must be > 0, got {}", self.lqr.r)));
        }
        self.pi.validate()?;
        self.pid.validate()?;
        let a = &self.anfis;
        if a.epochs == 0 || a.mfs_per_input == 0 {
            return Err(Error::params("anfis.epochs and anfis.mfs_per_input must be >= 1"));
        }
        if !(a.learning_rate.is_finite() && a.learning_rate > 0.0) {
            return Err(Error::params("anfis.learning_rate must be > 0"));
        }
        if a.train_count == 0 || a.initial_deviations.is_empty() {
            return Err(Error::params("anfis needs train_count >= 1 and at least one initial deviation"));
        }
        if a.initial_deviations.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("anfis.initial_deviations"));
        }
        if !(a.collection_horizon > 0.0) || a.collection_decimation == 0 {
            return Err(Error::params("anfis collection horizon and decimation must be positive"));
        }
        for s in self.scenarios() {
            s.validate()?;
        }
        let m = &self.metrics;
        if !(m.settle_band_deg > 0.0 && m.slope_threshold > 0.0 && m.window_fraction > 0.0 && m.window_fraction <= 1.0) {
            return Err(Error::params("metrics: band and slope must be > 0, window_fraction in (0, 1]"));
        }
        Ok(())
    }

    pub fn params(&self) -> PhysicalParams {
        self.plant.params()
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.sim.dt,
            horizon: self.sim.horizon,
            initial_state: PlantState::upright(),
            actuator_gain: self.sim.actuator_gain,
            log_decimation: self.sim.log_decimation,
            fall_angle: self.sim.fall_angle_deg.to_radians(),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec { power: self.noise.power, sample_time: self.noise.sample_time, seed: self.seed }
    }

    pub fn impulse_spec(&self, magnitude: f64) -> ImpulseSpec {
        ImpulseSpec { onset: self.impulse.onset, magnitude, width: self.impulse.width }
    }

    /// Impulse cells in configured order, then the noise cell.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut v: Vec<Scenario> =
            self.impulse.magnitudes.iter().map(|&m| Scenario::Impulse(self.impulse_spec(m))).collect();
        v.push(Scenario::Noise(self.noise_spec()));
        v
    }

    pub fn bands(&self) -> MetricBands {
        MetricBands {
            settle_band: self.metrics.settle_band_deg.to_radians(),
            slope_threshold: self.metrics.slope_threshold,
            window_fraction: self.metrics.window_fraction,
        }
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn sha256(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn manifest(&self, command: &str, outputs: Vec<String>) -> Result<Manifest> {
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.sha256()?,
            seed: self.seed,
            outputs,
            config: self.clone(),
        })
    }
}
