//! Command-line pipeline: derive → design-lqr → gen-data → train → simulate /
//! benchmark.
//!
//! Each command reads the run configuration, writes its artifacts into the
//! output directory and finishes with a `manifest-<command>.json` that can be
//! passed back as `--config` to reproduce the run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::anfis::{generate_dataset, train_hybrid, AnfisModel, Dataset, SplitManifest, TrainReport};
use crate::config::RunConfig;
use crate::controllers::{ControllerSpec, LqrDesign};
use crate::plant::{controllability, linearize, poles, transfer_functions, write_poles_csv, LinearStateSpace, PlantState};
use crate::scenarios::{run_benchmark, run_scenario, BenchmarkTable, Scenario};
use crate::simulate::{run_closed_loop, NoDisturbance, SimConfig, TimeSeries};
use crate::{Error, Result};

pub const LQR_FILE: &str = "lqr.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const MODEL_FILE: &str = "anfis.json";
pub const HISTORY_FILE: &str = "train_history.csv";
pub const POLES_FILE: &str = "poles.csv";
pub const BENCHMARK_CSV: &str = "benchmark.csv";
pub const BENCHMARK_TXT: &str = "benchmark.txt";

/// Caps the benchmark worker count.
pub const THREADS_ENV: &str = "PENDULUM_LAB_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pendulum-lab", version, about = "Cart-pole modelling, controller design and benchmarking")]
pub struct Cli {
    /// Run configuration (JSON) or a manifest written by an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear model report: A, B, transfer functions, poles, controllability.
    Derive,
    /// Solve the LQR problem and save the design.
    DesignLqr,
    /// Log stage-1 LQR runs and write the ANFIS dataset with its split.
    GenData,
    /// Train the ANFIS policy on the dataset.
    Train,
    /// Run one controller against one disturbance scenario.
    Simulate {
        #[arg(long, value_enum)]
        controller: ControllerChoice,
        #[arg(long, value_enum)]
        scenario: ScenarioChoice,
        /// Impulse magnitude, N. Defaults to the first configured magnitude.
        #[arg(long)]
        magnitude: Option<f64>,
    },
    /// PI / PID / TS-LA comparison over every configured scenario.
    Benchmark {
        /// Build missing designs, data and models first.
        #[arg(long)]
        auto: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerChoice {
    None,
    Lqr,
    Pi,
    Pid,
    Tsla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioChoice {
    Impulse,
    Noise,
}

/// Linear model with the input scaled by the actuator gain, so that designs
/// and commands are in volts.
pub fn actuated_model(cfg: &RunConfig) -> Result<LinearStateSpace> {
    let mut ss = linearize(&cfg.params())?;
    ss.b *= cfg.sim.actuator_gain;
    Ok(ss)
}

pub fn derive_report(cfg: &RunConfig) -> Result<String> {
    let params = cfg.params();
    let ss = linearize(&params)?;
    let (cart, pend) = transfer_functions(&params)?;
    let co = controllability(&ss);
    let mut s = String::new();
    let fmt_row = |v: &mut String, row: &[f64]| {
        for x in row {
            let _ = write!(v, "{x:>12.4}");
        }
        v.push('\n');
    };
    s.push_str("A =\n");
    for i in 0..4 {
        fmt_row(&mut s, &(0..4).map(|j| ss.a[(i, j)]).collect::<Vec<_>>());
    }
    s.push_str("B =\n");
    fmt_row(&mut s, ss.b.as_slice());
    for (name, tf) in [("cart", &cart), ("pendulum", &pend)] {
        let _ = writeln!(s, "{name} TF numerator   {:?}", tf.numerator);
        let _ = writeln!(s, "{name} TF denominator {:?}", tf.denominator);
        let p = poles(tf)?;
        let list: Vec<String> = p
            .iter()
            .map(|z| if z.im == 0.0 { format!("{:.4}", z.re) } else { format!("{:.4}{:+.4}i", z.re, z.im) })
            .collect();
        let _ = writeln!(s, "{name} poles {{{}}}", list.join(", "));
    }
    s.push_str("Controllability matrix =\n");
    for i in 0..4 {
        fmt_row(&mut s, &(0..4).map(|j| co.matrix[(i, j)]).collect::<Vec<_>>());
    }
    let _ = writeln!(s, "rank {}", co.rank);
    let _ = writeln!(s, "det {:.6e}", co.det);
    Ok(s)
}

pub fn cmd_derive(cfg: &RunConfig, out: &Path) -> Result<String> {
    let report = derive_report(cfg)?;
    let (cart, pend) = transfer_functions(&cfg.params())?;
    let (pc, pp) = (poles(&cart)?, poles(&pend)?);
    write_file(out, POLES_FILE, |w| write_poles_csv(w, &[("cart", &pc), ("pendulum", &pp)]))?;
    write_manifest(cfg, out, "derive", &[POLES_FILE])?;
    Ok(report)
}

pub fn design_lqr(cfg: &RunConfig) -> Result<LqrDesign> {
    LqrDesign::from_diagonal(&actuated_model(cfg)?, cfg.lqr.q_diag, cfg.lqr.r)
}

pub fn cmd_design_lqr(cfg: &RunConfig, out: &Path) -> Result<LqrDesign> {
    let design = design_lqr(cfg)?;
    let json = design.to_json()?;
    write_file(out, LQR_FILE, |w| writeln!(w, "{json}"))?;
    write_manifest(cfg, out, "design-lqr", &[LQR_FILE])?;
    Ok(design)
}

/// Undisturbed LQR runs from each configured initial deviation.
pub fn collect_stage1(cfg: &RunConfig, design: &LqrDesign) -> Result<Vec<TimeSeries>> {
    let spec = ControllerSpec::Lqr(design.k);
    cfg.anfis
        .initial_deviations
        .iter()
        .map(|dev| {
            let sim = SimConfig {
                horizon: cfg.anfis.collection_horizon,
                log_decimation: cfg.anfis.collection_decimation,
                initial_state: PlantState::from_deviation(*dev, 0.0),
                ..cfg.sim_config()
            };
            let ts = run_closed_loop(&sim, spec.build().as_mut(), &mut NoDisturbance, &cfg.params())?;
            if ts.is_diverged() {
                return Err(Error::Degenerate(format!("stage-1 LQR run from {dev:?} diverged")));
            }
            Ok(ts)
        })
        .collect()
}

pub fn build_dataset(cfg: &RunConfig, design: &LqrDesign) -> Result<Dataset> {
    let runs = collect_stage1(cfg, design)?;
    generate_dataset(&runs, cfg.anfis.train_count, cfg.anfis.test_count, cfg.seed)
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    let design = load_lqr(out)?;
    let ds = build_dataset(cfg, &design)?;
    write_file(out, DATASET_FILE, |w| ds.write_csv(w))?;
    let split = serde_json::to_string_pretty(&ds.manifest(cfg.seed))?;
    write_file(out, SPLIT_FILE, |w| writeln!(w, "{split}"))?;
    write_manifest(cfg, out, "gen-data", &[DATASET_FILE, SPLIT_FILE])?;
    Ok(ds)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    let ds = load_dataset(out)?;
    let report = train_hybrid(&ds, &cfg.anfis.train_config())?;
    report.model.save(&out.join(MODEL_FILE))?;
    write_file(out, HISTORY_FILE, |w| report.write_history_csv(w))?;
    write_manifest(cfg, out, "train", &[MODEL_FILE, HISTORY_FILE])?;
    Ok(report)
}

pub fn controller_spec(choice: ControllerChoice, cfg: &RunConfig, out: &Path) -> Result<ControllerSpec> {
    Ok(match choice {
        ControllerChoice::None => ControllerSpec::None,
        ControllerChoice::Lqr => ControllerSpec::Lqr(load_lqr(out)?.k),
        ControllerChoice::Pi => ControllerSpec::Pi(cfg.pi),
        ControllerChoice::Pid => ControllerSpec::Pid(cfg.pid),
        ControllerChoice::Tsla => ControllerSpec::Tsla(Arc::new(load_model(out)?)),
    })
}

pub fn simulation_file(controller: ControllerChoice, scenario: ScenarioChoice) -> String {
    let c = controller.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let s = scenario.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    format!("sim_{c}_{s}.csv")
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    out: &Path,
    controller: ControllerChoice,
    scenario: ScenarioChoice,
    magnitude: Option<f64>,
) -> Result<TimeSeries> {
    let spec = controller_spec(controller, cfg, out)?;
    let scen = match scenario {
        ScenarioChoice::Impulse => {
            let m = match magnitude.or_else(|| cfg.impulse.magnitudes.first().copied()) {
                Some(m) => m,
                None => return Err(Error::params("no impulse magnitude configured")),
            };
            Scenario::Impulse(cfg.impulse_spec(m))
        }
        ScenarioChoice::Noise => Scenario::Noise(cfg.noise_spec()),
    };
    let ts = run_scenario(&cfg.params(), &cfg.sim_config(), &spec, &scen)?;
    let name = simulation_file(controller, scenario);
    write_file(out, &name, |w| ts.write_csv(w))?;
    write_manifest(cfg, out, "simulate", &[&name])?;
    Ok(ts)
}

/// Benchmark thread cap from [`THREADS_ENV`].
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::params(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Trains a TS-LA model in memory, without touching the filesystem.
pub fn build_tsla(cfg: &RunConfig) -> Result<(LqrDesign, TrainReport)> {
    let design = design_lqr(cfg)?;
    let ds = build_dataset(cfg, &design)?;
    let report = train_hybrid(&ds, &cfg.anfis.train_config())?;
    Ok((design, report))
}

pub fn benchmark_with_model(cfg: &RunConfig, model: Arc<AnfisModel>, threads: Option<usize>) -> Result<BenchmarkTable> {
    let controllers = [ControllerSpec::Pi(cfg.pi), ControllerSpec::Pid(cfg.pid), ControllerSpec::Tsla(model)];
    run_benchmark(&cfg.params(), &cfg.sim_config(), &controllers, &cfg.scenarios(), &cfg.bands(), threads)
}

pub fn cmd_benchmark(cfg: &RunConfig, out: &Path, auto: bool, threads: Option<usize>) -> Result<BenchmarkTable> {
    if auto {
        if !out.join(LQR_FILE).exists() {
            cmd_design_lqr(cfg, out)?;
        }
        if !out.join(DATASET_FILE).exists() || !out.join(SPLIT_FILE).exists() {
            cmd_gen_data(cfg, out)?;
        }
        if !out.join(MODEL_FILE).exists() {
            cmd_train(cfg, out)?;
        }
    }
    let model = Arc::new(load_model(out)?);
    let table = benchmark_with_model(cfg, model, threads)?;
    write_file(out, BENCHMARK_CSV, |w| table.write_csv(w))?;
    let text = table.render_text();
    write_file(out, BENCHMARK_TXT, |w| w.write_all(text.as_bytes()))?;
    write_manifest(cfg, out, "benchmark", &[BENCHMARK_CSV, BENCHMARK_TXT])?;
    Ok(table)
}

fn missing(path: &Path) -> Error {
    Error::input(format!("missing artifact {}", path.display()))
}

pub fn load_lqr(out: &Path) -> Result<LqrDesign> {
    let path = out.join(LQR_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| missing(&path))?;
    LqrDesign::from_json(&text)
}

pub fn load_model(out: &Path) -> Result<AnfisModel> {
    let path = out.join(MODEL_FILE);
    if !path.exists() {
        return Err(missing(&path));
    }
    AnfisModel::load(&path)
}

pub fn load_dataset(out: &Path) -> Result<Dataset> {
    let (csv, split) = (out.join(DATASET_FILE), out.join(SPLIT_FILE));
    let f = File::open(&csv).map_err(|_| missing(&csv))?;
    let text = std::fs::read_to_string(&split).map_err(|_| missing(&split))?;
    let manifest: SplitManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Malformed { kind: "split manifest", message: e.to_string() })?;
    Dataset::read(BufReader::new(f), &manifest)
}

fn write_file(out: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join(name))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, out: &Path, command: &str, outputs: &[&str]) -> Result<()> {
    let m = cfg.manifest(command, outputs.iter().map(|s| s.to_string()).collect())?;
    let text = serde_json::to_string_pretty(&m)?;
    write_file(out, &format!("manifest-{command}.json"), |w| writeln!(w, "{text}"))
}

/// Exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::InvalidInput(_) | Error::Malformed { .. } | Error::Io(_) | Error::Json(_) => {
            EXIT_USAGE
        }
        Error::NonFinite(_)
        | Error::Uncontrollable { .. }
        | Error::NoConvergence { .. }
        | Error::Degenerate(_)
        | Error::InsufficientData { .. } => EXIT_NUMERICAL,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `stdout`, errors to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK {
                write!(stdout, "{}", e.render())
            } else {
                write!(stderr, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::Derive => {
            let report = cmd_derive(&cfg, out)?;
            write!(stdout, "{report}")?;
        }
        Command::DesignLqr => {
            let d = cmd_design_lqr(&cfg, out)?;
            writeln!(stdout, "K = {:?}", d.k.as_slice())?;
            writeln!(stdout, "Riccati residual {:.3e}", d.residual)?;
            for p in &d.closed_loop_poles {
                writeln!(stdout, "closed-loop pole {:.4}{:+.4}i", p.re, p.im)?;
            }
        }
        Command::GenData => {
            let ds = cmd_gen_data(&cfg, out)?;
            writeln!(stdout, "{} rows ({} train, {} test)", ds.rows.len(), ds.train.len(), ds.test.len())?;
        }
        Command::Train => {
            let r = cmd_train(&cfg, out)?;
            writeln!(stdout, "epochs {}", r.history.len())?;
            writeln!(stdout, "train RMSE {:.3e}", r.final_train_rmse())?;
            writeln!(stdout, "test RMSE {:.3e}", r.final_test_rmse())?;
            if r.rank_deficient {
                writeln!(stdout, "warning: least-squares system was rank deficient (minimum-norm solution used)")?;
            }
            if r.step_failures > 0 {
                writeln!(stdout, "note: {} epochs made no premise progress", r.step_failures)?;
            }
            if !(r.final_train_rmse().is_finite() && r.final_test_rmse().is_finite()) {
                return Err(Error::NonFinite("training RMSE"));
            }
        }
        Command::Simulate { controller, scenario, magnitude } => {
            let ts = cmd_simulate(&cfg, out, *controller, *scenario, *magnitude)?;
            match (ts.diverged, ts.last()) {
                (Some(reason), Some(last)) => writeln!(stdout, "diverged ({reason:?}) at t = {:.3} s", last.t)?,
                _ => writeln!(stdout, "completed {} rows", ts.rows.len())?,
            }
            writeln!(stdout, "wrote {}", out.join(simulation_file(*controller, *scenario)).display())?;
        }
        Command::Benchmark { auto } => {
            let table = cmd_benchmark(&cfg, out, *auto, threads_from_env()?)?;
            write!(stdout, "{}", table.render_text())?;
            if table.any_error() {
                return Ok(EXIT_NUMERICAL);
            }
            if table.any_diverged() {
                return Ok(EXIT_DIVERGED);
            }
        }
    }
    Ok(EXIT_OK)
}
