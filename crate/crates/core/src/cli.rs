//! The `solve`, `compare` and `sweep` commands behind the `ddpronto` binary.
//!
//! Every command writes its artifacts into one output directory. Logs are
//! flushed even when a run fails; a failure additionally leaves `error.txt`
//! behind and is returned as `Err`, which the binary maps to a nonzero exit
//! status.

use std::path::{Path, PathBuf};

use log::info;

use crate::config::{Problem, RunConfig};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::io::{
    compare_to_csv, log_to_csv, svg_line_plot, sweep_to_csv, trajectory_from_csv, trajectory_to_csv, write_atomic, Series,
};
use crate::optimizer::{
    dither_sweep, reference_optimum, run, run_data_driven, run_model_based, IterationRecord, Mode, RunOutput, SolverConfig,
    SweepRow,
};

pub const ERROR_FILE: &str = "error.txt";
pub const OPTIMUM_FILE: &str = "optimum.csv";
pub const OPTIMUM_KEY_FILE: &str = "optimum.key";

/// Options shared by all commands.
#[derive(Clone, Debug, Default)]
pub struct CommandOptions {
    pub config: PathBuf,
    /// Overrides `out_dir` of the config; `out` when neither is set.
    pub out: Option<PathBuf>,
    /// Overrides `seed` of the config.
    pub seed: Option<u64>,
    /// Dump each iteration's data batches to `<out>/batches/`.
    pub dump_batches: bool,
}

struct Setup {
    config: RunConfig,
    problem: Problem,
    out: PathBuf,
}

fn setup(opts: &CommandOptions) -> Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let stale = out.join(ERROR_FILE);
    if stale.exists() {
        std::fs::remove_file(stale)?;
    }
    Ok((config, out))
}

/// Runs `body`; on error writes `error.txt` into `out` before returning it.
fn guarded<T>(out: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    body().inspect_err(|e| {
        let _ = write_atomic(&out.join(ERROR_FILE), format!("{e}\n").as_bytes());
    })
}

fn build(opts: &CommandOptions) -> Result<Setup> {
    let (config, out) = setup(opts)?;
    let mut problem = guarded(&out, || config.build())?;
    if opts.dump_batches {
        let dir = out.join("batches");
        std::fs::create_dir_all(&dir)?;
        problem.solver.batch_dump_dir = Some(dir);
    }
    Ok(Setup { config, problem, out })
}

fn write_run(out: &Path, prefix: &str, run: &RunOutput) -> Result<()> {
    write_atomic(&out.join(format!("{prefix}log.csv")), log_to_csv(&run.records).as_bytes())?;
    write_atomic(
        &out.join(format!("{prefix}trajectory.csv")),
        trajectory_to_csv(run.trajectory.as_curve()).as_bytes(),
    )?;
    Ok(())
}

fn dg_points(records: &[IterationRecord]) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.k as f64, r.dg.abs())).collect()
}

fn state_plot(traj: &Trajectory, reference: &[nalgebra::DVector<f64>]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];
    let n = traj.state_dim();
    let labels: Vec<(String, String)> = (1..=n).map(|i| (format!("x{i}"), format!("x{i}*"))).collect();
    let mut series = Vec::new();
    for (i, (label, ref_label)) in labels.iter().enumerate() {
        series.push(Series {
            label,
            color: COLORS[i % COLORS.len()],
            points: traj.x().iter().enumerate().map(|(t, x)| (t as f64, x[i])).collect(),
        });
        series.push(Series {
            label: ref_label,
            color: "#999999",
            points: reference.iter().enumerate().map(|(t, x)| (t as f64, x[i])).collect(),
        });
    }
    svg_line_plot("state trajectory", "t", "x", &series, false)
}

fn finish(out: &Path, run: RunOutput) -> Result<RunOutput> {
    match run.failure {
        Some(e) => {
            write_atomic(&out.join(ERROR_FILE), format!("{e}\n").as_bytes())?;
            Err(e)
        }
        None => Ok(run),
    }
}

/// Solves the configured problem in the configured mode.
///
/// Writes `log.csv`, `trajectory.csv`, `dg.svg` and `trajectory.svg`.
pub fn cmd_solve(opts: &CommandOptions) -> Result<RunOutput> {
    let Setup { problem, out, .. } = build(opts)?;
    let Problem {
        plant,
        cost,
        initial,
        solver,
    } = &problem;
    let output = guarded(&out, || run(solver, plant, cost, initial, None))?;
    write_run(&out, "", &output)?;
    let series = [Series {
        label: "|dg|",
        color: "#1f77b4",
        points: dg_points(&output.records),
    }];
    write_atomic(&out.join("dg.svg"), svg_line_plot("cost differential", "k", "|dg|", &series, true).as_bytes())?;
    write_atomic(&out.join("trajectory.svg"), state_plot(&output.trajectory, cost.x_ref()).as_bytes())?;
    info!("solve finished after {} iterations", output.records.len());
    finish(&out, output)
}

/// Result of [`cmd_compare`].
#[derive(Debug)]
pub struct Comparison {
    pub model_based: RunOutput,
    pub data_driven: RunOutput,
}

/// Runs both modes from the same start. Distances in the logs are measured
/// to the model-based solution.
///
/// Writes `model_based_*` and `data_driven_*` logs and trajectories,
/// `compare.csv` (joint `|dg|` per iteration) and `compare.svg`.
pub fn cmd_compare(opts: &CommandOptions) -> Result<Comparison> {
    let Setup { problem, out, .. } = build(opts)?;
    let Problem {
        plant,
        cost,
        initial,
        solver,
    } = &problem;
    // the configured tolerance applies to the configured mode; the other
    // mode keeps its default
    let tol_for = |mode: Mode| match (mode == solver.mode, mode) {
        (true, _) => solver.dg_tol,
        (false, Mode::ModelBased) => SolverConfig::model_based().dg_tol,
        (false, Mode::DataDriven) => SolverConfig::data_driven(solver.dither.clone()).dg_tol,
    };
    let mb_cfg = SolverConfig {
        mode: Mode::ModelBased,
        dg_tol: tol_for(Mode::ModelBased),
        ..solver.clone()
    };
    let dd_cfg = SolverConfig {
        mode: Mode::DataDriven,
        dg_tol: tol_for(Mode::DataDriven),
        ..solver.clone()
    };

    let model_based = guarded(&out, || run_model_based(&mb_cfg, plant, cost, initial, None))?;
    let optimum = model_based.trajectory.clone();
    let data_driven = guarded(&out, || run_data_driven(&dd_cfg, plant, cost, initial, Some(&optimum)))?;

    write_run(&out, "model_based_", &model_based)?;
    write_run(&out, "data_driven_", &data_driven)?;
    write_atomic(
        &out.join("compare.csv"),
        compare_to_csv(&model_based.records, &data_driven.records).as_bytes(),
    )?;
    let series = [
        Series {
            label: "model-based",
            color: "#1f77b4",
            points: dg_points(&model_based.records),
        },
        Series {
            label: "data-driven",
            color: "#d62728",
            points: dg_points(&data_driven.records),
        },
    ];
    write_atomic(&out.join("compare.svg"), svg_line_plot("|dg| per iteration", "k", "|dg|", &series, true).as_bytes())?;

    let model_based = finish(&out, model_based)?;
    let data_driven = finish(&out, data_driven)?;
    Ok(Comparison {
        model_based,
        data_driven,
    })
}

/// Result of [`cmd_sweep`].
#[derive(Debug)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Whether the reference optimum was read from the output directory.
    pub optimum_cached: bool,
}

/// Fingerprint of everything the reference optimum depends on.
fn optimum_key(config: &RunConfig) -> String {
    let mut key = config.clone();
    key.seed = 0;
    key.out_dir = None;
    key.dither = Default::default();
    key.solver.mode = Mode::ModelBased;
    key.solver.dg_tol = None;
    key.to_toml()
}

fn cached_optimum(out: &Path, key: &str, problem: &Problem) -> Option<Trajectory> {
    let stored = std::fs::read_to_string(out.join(OPTIMUM_KEY_FILE)).ok()?;
    if stored != key {
        return None;
    }
    let text = std::fs::read_to_string(out.join(OPTIMUM_FILE)).ok()?;
    let curve = trajectory_from_csv(&text).ok()?;
    Trajectory::from_curve(curve, &problem.plant, 1e-9).ok()
}

/// Data-driven runs with the dither bounds halved `j = 0..halvings` times.
///
/// The model-based reference optimum is computed once and cached as
/// `optimum.csv` (with `optimum.key`) in the output directory. Writes
/// `sweep.csv` and `sweep.svg`; failed rows are marked, not fatal.
pub fn cmd_sweep(opts: &CommandOptions, halvings: usize) -> Result<SweepSummary> {
    let Setup { config, problem, out } = build(opts)?;
    let key = optimum_key(&config);
    let (optimum, optimum_cached) = match cached_optimum(&out, &key, &problem) {
        Some(opt) => {
            info!("using cached reference optimum");
            (opt, true)
        }
        None => {
            let opt = guarded(&out, || {
                reference_optimum(&problem.solver, &problem.plant, &problem.cost, &problem.initial)
            })?;
            write_atomic(&out.join(OPTIMUM_FILE), trajectory_to_csv(opt.as_curve()).as_bytes())?;
            write_atomic(&out.join(OPTIMUM_KEY_FILE), key.as_bytes())?;
            (opt, false)
        }
    };
    let solver = SolverConfig {
        mode: Mode::DataDriven,
        ..problem.solver.clone()
    };
    let rows = dither_sweep(&solver, &problem.plant, &problem.cost, &problem.initial, &optimum, halvings);
    write_atomic(&out.join("sweep.csv"), sweep_to_csv(&rows).as_bytes())?;
    let series = [Series {
        label: "distance",
        color: "#1f77b4",
        points: rows
            .iter()
            .filter_map(|r| r.distance.map(|d| (r.delta_x, d)))
            .collect(),
    }];
    write_atomic(&out.join("sweep.svg"), svg_line_plot("distance to optimum", "delta_x", "distance", &series, true).as_bytes())?;
    Ok(SweepSummary { rows, optimum_cached })
}
