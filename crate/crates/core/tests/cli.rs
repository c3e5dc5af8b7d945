use std::path::Path;
use std::process::Command;

use pendulum_lab::cli::{run, EXIT_DIVERGED, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};

fn cli(out: &Path, args: &[&str]) -> (i32, String, String) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let mut argv = vec!["pendulum-lab", "--out", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    let code = run(argv, &mut o, &mut e);
    (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn derive_reports_poles_and_rank() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = cli(dir.path(), &["derive"]);
    assert_eq!(code, EXIT_OK);
    for needle in ["5.5651", "-5.6041", "-0.1428", "rank 4"] {
        assert!(out.contains(needle), "missing {needle} in\n{out}");
    }
    let poles = std::fs::read_to_string(dir.path().join("poles.csv")).unwrap();
    assert!(poles.starts_with("system,index,re,im\n"));
    assert_eq!(poles.lines().count(), 1 + 4 + 3);
    assert!(dir.path().join("manifest-derive.json").exists());
}

#[test]
fn zero_inertia_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"plant": {"inertia": 0.0}}"#);
    let (code, _, err) = cli(dir.path(), &["--config", &cfg, "derive"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("inertia"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"lqr": {"q": [1, 1, 1, 1]}}"#);
    assert_eq!(cli(dir.path(), &["--config", &cfg, "design-lqr"]).0, EXIT_USAGE);
}

#[test]
fn zero_r_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"lqr": {"r": 0}}"#);
    assert_eq!(cli(dir.path(), &["--config", &cfg, "design-lqr"]).0, EXIT_USAGE);
}

#[test]
fn missing_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(dir.path(), &["gen-data"]);
    assert_ne!(code, EXIT_OK);
    assert!(err.contains("lqr.json"), "{err}");
    let (code, _, err) = cli(dir.path(), &["simulate", "--controller", "tsla", "--scenario", "noise"]);
    assert_ne!(code, EXIT_OK);
    assert!(err.contains("anfis.json"), "{err}");
    let (code, _, err) = cli(dir.path(), &["benchmark"]);
    assert_ne!(code, EXIT_OK);
    assert!(err.contains("anfis.json"), "{err}");
}

#[test]
fn degenerate_collection_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"anfis": {"initial_deviations": [[0, 0, 0, 0]]}}"#);
    assert_eq!(cli(dir.path(), &["--config", &cfg, "design-lqr"]).0, EXIT_OK);
    assert_eq!(cli(dir.path(), &["--config", &cfg, "gen-data"]).0, EXIT_NUMERICAL);
}

#[test]
fn pipeline_runs_and_reproduces_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    for cmd in [&["design-lqr"][..], &["gen-data"], &["train"]] {
        let (code, _, err) = cli(&a, cmd);
        assert_eq!(code, EXIT_OK, "{cmd:?}: {err}");
    }
    let (code, out, _) = cli(&a, &["simulate", "--controller", "lqr", "--scenario", "impulse"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("completed"), "{out}");
    let (code, out, _) = cli(&a, &["simulate", "--controller", "none", "--scenario", "impulse"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("diverged"), "{out}");
    let (code, out, _) = cli(&a, &["simulate", "--controller", "tsla", "--scenario", "noise"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("completed"), "{out}");

    // Replay every step from the training manifest into a fresh directory.
    let b = dir.path().join("b");
    let manifest = a.join("manifest-train.json");
    let m = manifest.to_str().unwrap();
    for cmd in [&["design-lqr"][..], &["gen-data"], &["train"]] {
        let mut args = vec!["--config", m];
        args.extend_from_slice(cmd);
        assert_eq!(cli(&b, &args).0, EXIT_OK);
    }
    let mut args = vec!["--config", m];
    args.extend_from_slice(&["simulate", "--controller", "tsla", "--scenario", "noise"]);
    assert_eq!(cli(&b, &args).0, EXIT_OK);
    for f in ["lqr.json", "dataset.csv", "split.json", "anfis.json", "train_history.csv", "sim_tsla_noise.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_changes_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (d, seed) in [(&a, "1"), (&b, "2")] {
        assert_eq!(cli(d, &["design-lqr"]).0, EXIT_OK);
        assert_eq!(cli(d, &["--seed", seed, "gen-data"]).0, EXIT_OK);
    }
    assert_ne!(std::fs::read(a.join("split.json")).unwrap(), std::fs::read(b.join("split.json")).unwrap());
    let m = std::fs::read_to_string(b.join("manifest-gen-data.json")).unwrap();
    assert!(m.contains("\"seed\": 2"));
}

#[test]
fn binary_benchmark_reports_divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pendulum-lab"))
        .args(["--out", dir.path().to_str().unwrap(), "benchmark", "--auto"])
        .env("PENDULUM_LAB_THREADS", "2")
        .output()
        .unwrap();
    // PI cells fall, so the run ends with the divergence-only code.
    assert_eq!(out.status.code(), Some(EXIT_DIVERGED));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("TS-LA"));
    let csv = std::fs::read_to_string(dir.path().join("benchmark.csv")).unwrap();
    assert!(csv.starts_with("controller,scenario,magnitude,settling_s,rise_ms,peak_theta_deg,peak_xdot,sse_theta,sse_x\n"));
    assert_eq!(csv.lines().count(), 1 + 12 + 3);
}

#[test]
fn bad_thread_cap_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pendulum-lab"))
        .args(["--out", dir.path().to_str().unwrap(), "benchmark", "--auto"])
        .env("PENDULUM_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn shipped_config_equals_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.json");
    let cfg = pendulum_lab::config::RunConfig::load(&path).unwrap();
    let mut defaults = pendulum_lab::config::RunConfig::default();
    defaults.plant.comment = cfg.plant.comment.clone();
    assert_eq!(cfg, defaults);
}
