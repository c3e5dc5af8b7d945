//! Disturbance sources, transient metrics and the PI / PID / TS-LA benchmark.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::ControllerSpec;
use crate::plant::PhysicalParams;
use crate::simulate::{run_closed_loop, DivergenceReason, Disturbance, SimConfig, TimeSeries};
use crate::{Error, Result};

/// Rectangular force pulse: `magnitude` on `[onset, onset + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSpec {
    pub onset: f64,
    pub magnitude: f64,
    pub width: f64,
}

impl ImpulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::params(format!("impulse width must be > 0, got {}", self.width)));
        }
        if !self.onset.is_finite() || !self.magnitude.is_finite() {
            return Err(Error::NonFinite("impulse spec"));
        }
        Ok(())
    }
}

pub fn impulse_signal(spec: &ImpulseSpec, t: f64) -> f64 {
    if t >= spec.onset && t < spec.onset + spec.width {
        spec.magnitude
    } else {
        0.0
    }
}

impl Disturbance for ImpulseSpec {
    fn force(&mut self, t: f64) -> f64 {
        impulse_signal(self, t)
    }
}

/// Band-limited white noise: zero-mean Gaussian samples with variance
/// `power`, each held for `sample_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub power: f64,
    pub sample_time: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::params(format!("noise power must be >= 0, got {}", self.power)));
        }
        if !(self.sample_time.is_finite() && self.sample_time > 0.0) {
            return Err(Error::params(format!("noise sample_time must be > 0, got {}", self.sample_time)));
        }
        Ok(())
    }
}

/// Seeded noise generator. Held samples are generated in order and cached,
/// so the value at any `t >= 0` depends only on the seed.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
    samples: Vec<f64>,
}

impl NoiseSource {
    pub fn new(spec: NoiseSpec) -> Self {
        NoiseSource { spec, rng: ChaCha8Rng::seed_from_u64(spec.seed), samples: Vec::new() }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }
}

pub fn noise_signal(source: &mut NoiseSource, t: f64) -> f64 {
    if source.spec.power == 0.0 || t < 0.0 {
        return 0.0;
    }
    // The small offset keeps t = k·sample_time from landing in sample k-1.
    let k = (t / source.spec.sample_time + 1e-9).floor() as usize;
    let sigma = source.spec.power.sqrt();
    while source.samples.len() <= k {
        let z: f64 = StandardNormal.sample(&mut source.rng);
        source.samples.push(sigma * z);
    }
    source.samples[k]
}

impl Disturbance for NoiseSource {
    fn force(&mut self, t: f64) -> f64 {
        noise_signal(self, t)
    }
}

/// A metric value or the flag for a response that never settles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Unbounded,
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Metric::Unbounded)
    }

    /// Total order with `Unbounded` above every value.
    pub fn as_ordered(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    pub fn le(&self, other: &Metric) -> bool {
        self.as_ordered() <= other.as_ordered()
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Metric {
        match self {
            Metric::Value(v) => Metric::Value(f(v)),
            Metric::Unbounded => Metric::Unbounded,
        }
    }

    fn mean(items: &[Metric]) -> Metric {
        let mut sum = 0.0;
        for m in items {
            match m {
                Metric::Value(v) => sum += v,
                Metric::Unbounded => return Metric::Unbounded,
            }
        }
        Metric::Value(sum / items.len() as f64)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match (self, f.precision()) {
            (Metric::Value(v), Some(p)) => format!("{v:.p$}"),
            (Metric::Value(v), None) => format!("{v:?}"),
            (Metric::Unbounded, _) => "inf".to_string(),
        };
        match f.width() {
            Some(w) => write!(f, "{s:>w$}"),
            None => f.write_str(&s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricBands {
    /// Settling band on |theta - π|, rad.
    pub settle_band: f64,
    /// Fitted |slope| above which a steady-state error is flagged unbounded.
    pub slope_threshold: f64,
    /// Trailing fraction of the post-onset window used for steady-state errors.
    pub window_fraction: f64,
}

impl Default for MetricBands {
    fn default() -> Self {
        MetricBands { settle_band: 0.5f64.to_radians(), slope_threshold: 1e-4, window_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientMetrics {
    /// Seconds after onset until |phi| stays inside the settle band.
    pub settling_time: Metric,
    /// Seconds for |phi| to decay from 90% to 10% of its peak.
    pub rise_time: Metric,
    /// rad
    pub peak_theta_dev: Metric,
    /// m/s
    pub peak_xdot: Metric,
    /// Mean |phi| over the trailing window, rad.
    pub sse_theta: Metric,
    /// Mean |x| over the trailing window, m.
    pub sse_x: Metric,
}

impl TransientMetrics {
    pub fn unbounded() -> Self {
        TransientMetrics {
            settling_time: Metric::Unbounded,
            rise_time: Metric::Unbounded,
            peak_theta_dev: Metric::Unbounded,
            peak_xdot: Metric::Unbounded,
            sse_theta: Metric::Unbounded,
            sse_x: Metric::Unbounded,
        }
    }
}

/// Minimum post-onset coverage required by [`compute_metrics`], s.
pub const MIN_COVERAGE: f64 = 10.0;

/// Extracts transient metrics from a logged run.
pub fn compute_metrics(series: &TimeSeries, onset: f64, bands: &MetricBands) -> Result<TransientMetrics> {
    if series.is_diverged() {
        return Ok(TransientMetrics::unbounded());
    }
    let first = series.rows.first().ok_or_else(|| Error::input("empty time series"))?;
    let last = series.rows.last().expect("non-empty");
    let tol = 1e-9 * series.dt_log.max(1.0);
    if first.t > onset + tol || last.t < onset + MIN_COVERAGE - tol {
        return Err(Error::input(format!(
            "series [{}, {}] must cover the onset {onset} and {MIN_COVERAGE} s beyond it",
            first.t, last.t
        )));
    }
    let post: Vec<_> = series.rows.iter().filter(|r| r.t >= onset - tol).collect();
    let t: Vec<f64> = post.iter().map(|r| r.t).collect();
    let dev: Vec<f64> = post.iter().map(|r| r.phi().abs()).collect();

    let settling_time = match dev.iter().rposition(|d| *d > bands.settle_band) {
        None => Metric::Value(0.0),
        Some(i) if i + 1 == dev.len() => Metric::Unbounded,
        Some(i) => Metric::Value(t[i + 1] - onset),
    };

    let (peak_idx, peak) = dev
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let rise_time = if peak == 0.0 {
        Metric::Value(0.0)
    } else {
        let t90 = crossing_below(&t, &dev, peak_idx, 0.9 * peak);
        let t10 = t90.and_then(|(i, _)| crossing_below(&t, &dev, i, 0.1 * peak));
        match (t90, t10) {
            (Some((_, a)), Some((_, b))) => Metric::Value(b - a),
            _ => Metric::Unbounded,
        }
    };

    let peak_xdot = post.iter().map(|r| r.x_dot.abs()).fold(0.0, f64::max);

    let t_end = *t.last().expect("non-empty");
    let window_start = t_end - bands.window_fraction * (t_end - onset);
    let win: Vec<_> = post.iter().filter(|r| r.t >= window_start).collect();
    let wt: Vec<f64> = win.iter().map(|r| r.t).collect();
    let wphi: Vec<f64> = win.iter().map(|r| r.phi()).collect();
    let wx: Vec<f64> = win.iter().map(|r| r.x).collect();
    let steady = |vals: &[f64]| {
        if slope(&wt, vals).abs() > bands.slope_threshold {
            Metric::Unbounded
        } else {
            Metric::Value(vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64)
        }
    };

    Ok(TransientMetrics {
        settling_time,
        rise_time,
        peak_theta_dev: Metric::Value(peak),
        peak_xdot: Metric::Value(peak_xdot),
        sse_theta: steady(&wphi),
        sse_x: steady(&wx),
    })
}

/// First index at or after `from` where `v` drops to `level`, with the
/// crossing time linearly interpolated.
fn crossing_below(t: &[f64], v: &[f64], from: usize, level: f64) -> Option<(usize, f64)> {
    let i = (from..v.len()).find(|&i| v[i] <= level)?;
    if i == 0 || v[i] == level || i == from {
        return Some((i, t[i]));
    }
    let (t0, t1, v0, v1) = (t[i - 1], t[i], v[i - 1], v[i]);
    Some((i, t0 + (level - v0) / (v1 - v0) * (t1 - t0)))
}

/// Least-squares slope of `y` against `t`.
fn slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    if t.len() < 2 {
        return 0.0;
    }
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        num += (a - mt) * (b - my);
        den += (a - mt) * (a - mt);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Impulse(ImpulseSpec),
    Noise(NoiseSpec),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Impulse(_) => "impulse",
            Scenario::Noise(_) => "noise",
        }
    }

    /// Impulse magnitude (N) or noise power (N²).
    pub fn magnitude(&self) -> f64 {
        match self {
            Scenario::Impulse(s) => s.magnitude,
            Scenario::Noise(s) => s.power,
        }
    }

    /// Time from which metrics are measured.
    pub fn onset(&self) -> f64 {
        match self {
            Scenario::Impulse(s) => s.onset,
            Scenario::Noise(_) => 0.0,
        }
    }

    pub fn disturbance(&self) -> Box<dyn Disturbance> {
        match self {
            Scenario::Impulse(s) => Box::new(*s),
            Scenario::Noise(s) => Box::new(NoiseSource::new(*s)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Impulse(s) => s.validate(),
            Scenario::Noise(s) => s.validate(),
        }
    }
}

/// Runs one controller against one scenario.
pub fn run_scenario(
    params: &PhysicalParams,
    sim: &SimConfig,
    controller: &ControllerSpec,
    scenario: &Scenario,
) -> Result<TimeSeries> {
    scenario.validate()?;
    let mut c = controller.build();
    let mut d = scenario.disturbance();
    run_closed_loop(sim, c.as_mut(), d.as_mut(), params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCell {
    pub controller: String,
    pub scenario: String,
    /// `None` for the per-controller mean row.
    pub magnitude: Option<f64>,
    pub metrics: TransientMetrics,
    pub diverged: Option<DivergenceReason>,
    /// Cart position at the end of the run.
    pub final_x: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub cells: Vec<BenchmarkCell>,
    /// Mean over impulse magnitudes, one row per controller.
    pub impulse_means: Vec<BenchmarkCell>,
}

/// Runs every controller × scenario cell, in parallel on up to `threads`
/// workers (all available when `None`). Output order follows the inputs.
pub fn run_benchmark(
    params: &PhysicalParams,
    sim: &SimConfig,
    controllers: &[ControllerSpec],
    scenarios: &[Scenario],
    bands: &MetricBands,
    threads: Option<usize>,
) -> Result<BenchmarkTable> {
    params.validate()?;
    sim.validate()?;
    for s in scenarios {
        s.validate()?;
    }
    let jobs: Vec<(&ControllerSpec, &Scenario)> =
        controllers.iter().flat_map(|c| scenarios.iter().map(move |s| (c, s))).collect();
    let run_cell = |(c, s): &(&ControllerSpec, &Scenario)| -> BenchmarkCell {
        let base = BenchmarkCell {
            controller: c.label().to_string(),
            scenario: s.name().to_string(),
            magnitude: Some(s.magnitude()),
            metrics: TransientMetrics::unbounded(),
            diverged: None,
            final_x: f64::NAN,
            error: None,
        };
        let outcome = run_scenario(params, sim, c, s)
            .and_then(|ts| compute_metrics(&ts, s.onset(), bands).map(|m| (ts, m)));
        match outcome {
            Ok((ts, metrics)) => BenchmarkCell {
                metrics,
                diverged: ts.diverged,
                final_x: ts.last().map_or(f64::NAN, |r| r.x),
                ..base
            },
            Err(e) => BenchmarkCell { error: Some(e.to_string()), ..base },
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::input(format!("thread pool: {e}")))?;
    let cells: Vec<BenchmarkCell> = pool.install(|| jobs.par_iter().map(run_cell).collect());

    let impulse_means = controllers
        .iter()
        .filter_map(|c| {
            let rows: Vec<&BenchmarkCell> =
                cells.iter().filter(|x| x.controller == c.label() && x.scenario == "impulse").collect();
            if rows.is_empty() {
                return None;
            }
            let mean = |f: fn(&TransientMetrics) -> Metric| {
                Metric::mean(&rows.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
            };
            Some(BenchmarkCell {
                controller: c.label().to_string(),
                scenario: "impulse".into(),
                magnitude: None,
                metrics: TransientMetrics {
                    settling_time: mean(|m| m.settling_time),
                    rise_time: mean(|m| m.rise_time),
                    peak_theta_dev: mean(|m| m.peak_theta_dev),
                    peak_xdot: mean(|m| m.peak_xdot),
                    sse_theta: mean(|m| m.sse_theta),
                    sse_x: mean(|m| m.sse_x),
                },
                diverged: rows.iter().find_map(|r| r.diverged),
                final_x: f64::NAN,
                error: rows.iter().find_map(|r| r.error.clone()),
            })
        })
        .collect();

    Ok(BenchmarkTable { cells, impulse_means })
}

pub const BENCHMARK_HEADER: &str =
    "controller,scenario,magnitude,settling_s,rise_ms,peak_theta_deg,peak_xdot,sse_theta,sse_x";

impl BenchmarkTable {
    pub fn any_diverged(&self) -> bool {
        self.cells.iter().any(|c| c.diverged.is_some())
    }

    pub fn any_error(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }

    pub fn cell(&self, controller: &str, scenario: &str, magnitude: f64) -> Option<&BenchmarkCell> {
        self.cells
            .iter()
            .find(|c| c.controller == controller && c.scenario == scenario && c.magnitude == Some(magnitude))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{BENCHMARK_HEADER}")?;
        for c in self.cells.iter().chain(&self.impulse_means) {
            let m = &c.metrics;
            let magnitude = c.magnitude.map_or("mean".to_string(), |v| format!("{v:?}"));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                c.controller,
                c.scenario,
                magnitude,
                m.settling_time,
                m.rise_time.map(|s| s * 1e3),
                m.peak_theta_dev.map(f64::to_degrees),
                m.peak_xdot,
                m.sse_theta,
                m.sse_x
            )?;
        }
        Ok(())
    }

    /// Aligned text report: the impulse means and the noise results laid out
    /// with one column per controller, followed by every individual cell.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let controllers: Vec<&str> = {
            let mut v: Vec<&str> = Vec::new();
            for c in &self.cells {
                if !v.contains(&c.controller.as_str()) {
                    v.push(&c.controller);
                }
            }
            v
        };
        let header = |out: &mut String, title: &str| {
            out.push_str(&format!("{title}\n"));
            out.push_str(&format!("{:<28}", "Parameter"));
            for c in &controllers {
                out.push_str(&format!("{c:>14}"));
            }
            out.push('\n');
        };
        let line = |out: &mut String, label: &str, vals: Vec<String>| {
            out.push_str(&format!("{label:<28}"));
            for v in vals {
                out.push_str(&format!("{v:>14}"));
            }
            out.push('\n');
        };

        if !self.impulse_means.is_empty() {
            header(&mut out, "Impulse disturbance (mean over magnitudes)");
            let get = |f: &dyn Fn(&TransientMetrics) -> String| -> Vec<String> {
                controllers
                    .iter()
                    .map(|c| {
                        self.impulse_means
                            .iter()
                            .find(|m| m.controller == *c)
                            .map_or("-".into(), |m| f(&m.metrics))
                    })
                    .collect()
            };
            line(&mut out, "Settling time (s)", get(&|m| format!("{:.3}", m.settling_time)));
            line(&mut out, "Deviation of theta (deg)", get(&|m| format!("{:.3}", m.peak_theta_dev.map(f64::to_degrees))));
            line(&mut out, "Rise time (ms)", get(&|m| format!("{:.2}", m.rise_time.map(|s| s * 1e3))));
            line(&mut out, "Steady state error (theta)", get(&|m| format!("{:.2e}", m.sse_theta.as_ordered())));
            line(&mut out, "Steady state error (x)", get(&|m| format!("{:.2e}", m.sse_x.as_ordered())));
            out.push('\n');
        }

        let noise: Vec<&BenchmarkCell> = self.cells.iter().filter(|c| c.scenario == "noise").collect();
        if !noise.is_empty() {
            header(&mut out, "White-noise disturbance");
            let get = |f: &dyn Fn(&TransientMetrics) -> String| -> Vec<String> {
                controllers
                    .iter()
                    .map(|c| noise.iter().find(|m| m.controller == *c).map_or("-".into(), |m| f(&m.metrics)))
                    .collect()
            };
            line(&mut out, "Max. deviation of theta (deg)", get(&|m| format!("{:.3}", m.peak_theta_dev.map(f64::to_degrees))));
            line(&mut out, "Max. deviation of x_dot (m/s)", get(&|m| format!("{:.3}", m.peak_xdot)));
            out.push('\n');
        }

        out.push_str("Cells\n");
        out.push_str(&format!(
            "{:<8}{:<9}{:>10}{:>12}{:>12}{:>12}{:>12}{:>12}{:>12}  {}\n",
            "ctrl", "scenario", "magnitude", "settle_s", "rise_ms", "peak_deg", "peak_xdot", "sse_theta", "sse_x", "status"
        ));
        for c in &self.cells {
            let m = &c.metrics;
            let status = match (&c.error, c.diverged) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(r)) => format!("diverged ({r:?})"),
                (None, None) => "ok".into(),
            };
            out.push_str(&format!(
                "{:<8}{:<9}{:>10}{:>12.3}{:>12.2}{:>12.3}{:>12.4}{:>12.2e}{:>12.2e}  {}\n",
                c.controller,
                c.scenario,
                c.magnitude.map_or("mean".into(), |v| format!("{v}")),
                m.settling_time,
                m.rise_time.map(|s| s * 1e3),
                m.peak_theta_dev.map(f64::to_degrees),
                m.peak_xdot,
                m.sse_theta.as_ordered(),
                m.sse_x.as_ordered(),
                status
            ));
        }
        out
    }
}
