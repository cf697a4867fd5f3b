use std::path::{Path, PathBuf};
use std::process::Command;

use ddpronto::cli::{cmd_compare, cmd_solve, cmd_sweep, CommandOptions, ERROR_FILE, OPTIMUM_FILE};
use ddpronto::io::{log_from_csv, trajectory_from_csv};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Pendubot config shortened to a 1 s horizon so CLI tests stay quick.
fn short_pendubot(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(configs().join("pendubot.toml"))
        .unwrap()
        .replace("final_time = 10.0", "final_time = 1.0")
        .replace("step_time = 9.0", "step_time = 0.5")
        .replace("max_iters = 50", "max_iters = 4");
    let path = dir.join("config.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

fn opts(config: PathBuf, out: &Path) -> CommandOptions {
    CommandOptions {
        config,
        out: Some(out.to_path_buf()),
        seed: None,
        dump_batches: false,
    }
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn binary_solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t);
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_ddpronto"))
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3", "--dump-batches"])
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["log.csv", "trajectory.csv", "dg.svg", "trajectory.svg"] {
        assert!(out.join(file).exists(), "{file}");
    }
    assert!(!out.join(ERROR_FILE).exists());
    let log = log_from_csv(&read(out.join("log.csv"))).unwrap();
    assert_eq!(log.len(), 4);
    assert!(log.iter().all(|r| r.kappa_max.is_some()));
    let batches = std::fs::read_dir(out.join("batches")).unwrap().count();
    assert_eq!(batches, 4);
}

#[test]
fn binary_rejects_negative_dt() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t.replace("dt = 0.01", "dt = -0.01"));
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_ddpronto"))
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("plant.params.dt"), "{stderr}");
    assert!(read(out.join(ERROR_FILE)).contains("plant.params.dt"));
}

#[test]
fn malformed_toml_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t.replace("[horizon]", "[horizon"));
    let err = cmd_solve(&opts(config, &dir.path().join("out"))).unwrap_err();
    assert!(matches!(err, ddpronto::Error::Config(_)), "{err:?}");
}

#[test]
fn same_seed_same_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    cmd_solve(&opts(config.clone(), &a)).unwrap();
    cmd_solve(&opts(config.clone(), &b)).unwrap();
    cmd_solve(&CommandOptions {
        seed: Some(17),
        ..opts(config, &c)
    })
    .unwrap();
    assert_eq!(read(a.join("log.csv")), read(b.join("log.csv")));
    assert_eq!(read(a.join("trajectory.csv")), read(b.join("trajectory.csv")));
    assert_ne!(read(a.join("log.csv")), read(c.join("log.csv")));
}

#[test]
fn zero_iterations_returns_initial_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t.replace("max_iters = 4", "max_iters = 0"));
    let out = dir.path().join("out");
    let run = cmd_solve(&opts(config, &out)).unwrap();
    assert!(run.records.is_empty());
    assert_eq!(read(out.join("log.csv")).trim(), "k,cost,dg,descent_norm,kappa_max,dist");
    let curve = trajectory_from_csv(&read(out.join("trajectory.csv"))).unwrap();
    assert!(curve.alpha.iter().all(|x| (x[0] + std::f64::consts::FRAC_PI_2).abs() < 1e-12 && x.rows(1, 3).amax() < 1e-12));
}

#[test]
fn compare_writes_joint_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t);
    let out = dir.path().join("out");
    let cmp = cmd_compare(&opts(config, &out)).unwrap();
    let text = read(out.join("compare.csv"));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,model_based_abs_dg,data_driven_abs_dg"));
    assert_eq!(lines.count(), cmp.model_based.records.len().max(cmp.data_driven.records.len()));
    assert!(cmp.data_driven.records.iter().all(|r| r.dist.is_some()));
    for file in ["model_based_log.csv", "data_driven_log.csv", "model_based_trajectory.csv", "compare.svg"] {
        assert!(out.join(file).exists(), "{file}");
    }
}

#[test]
fn sweep_caches_the_reference_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| t);
    let out = dir.path().join("out");
    let first = cmd_sweep(&opts(config.clone(), &out), 2).unwrap();
    assert!(!first.optimum_cached);
    let optimum = read(out.join(OPTIMUM_FILE));
    let sweep = read(out.join("sweep.csv"));
    assert!(sweep.starts_with("j,delta_x,delta_u,distance"));
    assert_eq!(sweep.lines().count(), 3);

    let second = cmd_sweep(&opts(config.clone(), &out), 2).unwrap();
    assert!(second.optimum_cached);
    assert_eq!(first.rows, second.rows);
    assert_eq!(read(out.join(OPTIMUM_FILE)), optimum);

    // a different cost invalidates the cache
    let changed = short_pendubot(dir.path(), |t| t.replace("r = [50.0]", "r = [40.0]"));
    let third = cmd_sweep(&opts(changed, &out), 2).unwrap();
    assert!(!third.optimum_cached);
}

#[test]
fn failed_run_flushes_partial_log() {
    // a condition-number bound no dither draw can meet
    let dir = tempfile::tempdir().unwrap();
    let config = short_pendubot(dir.path(), |t| format!("{t}condition_bound = 1.0000001\nmax_retries = 0\n"));
    let out = dir.path().join("out");
    let err = cmd_solve(&opts(config, &out)).unwrap_err();
    assert!(matches!(err.root(), ddpronto::Error::IllConditioned { .. }), "{err:?}");
    assert!(out.join(ERROR_FILE).exists());
    assert!(out.join("log.csv").exists());
}
