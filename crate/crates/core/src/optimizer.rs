//! Outer loops: model-based PRONTO and its data-driven variant, plus the
//! dither-halving sweep.
//!
//! Both loops share the same three moves per iteration: solve the descent
//! LQR about the current trajectory, step the curve by `γ`, and project it
//! back onto the trajectory manifold with a freshly synthesized tracking
//! policy. They differ only in where `(A_t, B_t)` come from.

use std::path::PathBuf;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::TrackingCost;
use crate::dynamics::{jacobians, Curve, JacobianMode, JacobianOracle, LtvModel, PlantOracle, Trajectory};
use crate::error::{Error, Result};
use crate::identification::{collect_and_identify, DataBatches, DitherConfig};
use crate::lqr::{solve_descent_riccati, DescentDirection};
use crate::projection::{project, synthesize_policy, FeedbackPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ModelBased,
    DataDriven,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Fixed stepsize `γ ∈ (0, 1]`.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once `|dg| ≤ dg_tol`.
    pub dg_tol: f64,
    pub mode: Mode,
    pub dither: DitherConfig,
    /// Tracking-regulator weights; the cost's `Q`, `R` when `None`.
    pub reg_q: Option<DMatrix<f64>>,
    pub reg_r: Option<DMatrix<f64>>,
    /// Write each iteration's data batches here (data-driven mode only).
    pub batch_dump_dir: Option<PathBuf>,
}

impl SolverConfig {
    pub fn model_based() -> Self {
        Self {
            gamma: 1.0,
            max_iters: 50,
            dg_tol: 1e-8,
            mode: Mode::ModelBased,
            dither: DitherConfig::default(),
            reg_q: None,
            reg_r: None,
            batch_dump_dir: None,
        }
    }

    pub fn data_driven(dither: DitherConfig) -> Self {
        Self {
            dg_tol: 1e-4,
            mode: Mode::DataDriven,
            dither,
            ..Self::model_based()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.dg_tol > 0.0) {
            return Err(Error::invalid("dg_tol", "must be positive"));
        }
        Ok(())
    }

    fn regulator<'a>(&'a self, cost: &'a TrackingCost) -> (&'a DMatrix<f64>, &'a DMatrix<f64>) {
        (self.reg_q.as_ref().unwrap_or(cost.q()), self.reg_r.as_ref().unwrap_or(cost.r()))
    }
}

/// Diagnostics of one outer iteration, evaluated at the iterate `η^k` the
/// descent direction was computed about.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: f64,
    pub dg: f64,
    pub descent_norm: f64,
    pub kappa_max: Option<f64>,
    pub dist: Option<f64>,
}

/// Output of a full optimization run. `failure` holds the error that ended
/// the run early, if any; `records` and `trajectory` are what was reached
/// before it.
#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<IterationRecord>,
    pub trajectory: Trajectory,
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn final_dg(&self) -> Option<f64> {
        self.records.last().map(|r| r.dg)
    }

    pub fn converged(&self, dg_tol: f64) -> bool {
        self.failure.is_none() && self.final_dg().is_some_and(|dg| dg.abs() <= dg_tol)
    }
}

fn update_curve(traj: &Trajectory, dir: &DescentDirection, gamma: f64) -> Curve {
    Curve {
        alpha: traj.x().iter().zip(&dir.dx).map(|(x, d)| x + d * gamma).collect(),
        mu: traj.u().iter().zip(&dir.du).map(|(u, d)| u + d * gamma).collect(),
        x_init: traj.x_init().clone(),
    }
}

/// Descent, curve update and projection about `traj` using `model`.
fn descend_and_project(
    traj: &Trajectory,
    model: &LtvModel,
    plant: &impl PlantOracle,
    cost: &TrackingCost,
    cfg: &SolverConfig,
) -> Result<(Trajectory, DescentDirection, FeedbackPolicy, f64)> {
    let value = cost.total(traj.as_curve())?;
    let derivs = cost.derivatives(traj.as_curve())?;
    let dir = solve_descent_riccati(model, &derivs)?;
    let curve = update_curve(traj, &dir, cfg.gamma);
    let (reg_q, reg_r) = cfg.regulator(cost);
    let policy = synthesize_policy(model, reg_q, reg_r)?;
    let next = project(&curve, &policy, plant)?;
    Ok((next, dir, policy, value))
}

/// One iteration of model-based PRONTO on the exact linearization.
pub fn pronto_step(
    traj: &Trajectory,
    plant: &impl JacobianOracle,
    cost: &TrackingCost,
    cfg: &SolverConfig,
    k: usize,
) -> Result<(Trajectory, IterationRecord)> {
    let model = jacobians(traj, plant, JacobianMode::Exact)?;
    let (next, dir, _, value) = descend_and_project(traj, &model, plant, cost, cfg)?;
    let record = IterationRecord {
        k,
        cost: value,
        dg: dir.dg,
        descent_norm: dir.norm(),
        kappa_max: None,
        dist: None,
    };
    Ok((next, record))
}

/// What one data-driven iteration produced.
#[derive(Clone, Debug)]
pub struct DataDrivenStep {
    pub trajectory: Trajectory,
    pub record: IterationRecord,
    /// Policy synthesized on the identified model; drives the next experiments.
    pub policy: FeedbackPolicy,
    pub batches: DataBatches,
    pub model: LtvModel,
}

/// One iteration of data-driven PRONTO: experiments with `policy_prev`,
/// identification, descent on `(Â, B̂)`, curve update, projection.
pub fn ddpronto_step(
    traj: &Trajectory,
    plant: &impl PlantOracle,
    cost: &TrackingCost,
    cfg: &SolverConfig,
    policy_prev: &FeedbackPolicy,
    k: usize,
) -> Result<DataDrivenStep> {
    let ident = collect_and_identify(traj, policy_prev, plant, &cfg.dither, k)?;
    if let Some(dir) = &cfg.batch_dump_dir {
        crate::io::write_batches_csv(&dir.join(format!("batches_{k:04}.csv")), &ident.batches)?;
    }
    let (next, dir, policy, value) = descend_and_project(traj, &ident.model, plant, cost, cfg)?;
    let record = IterationRecord {
        k,
        cost: value,
        dg: dir.dg,
        descent_norm: dir.norm(),
        kappa_max: Some(ident.batches.kappa_max()),
        dist: None,
    };
    Ok(DataDrivenStep {
        trajectory: next,
        record,
        policy,
        batches: ident.batches,
        model: ident.model,
    })
}

fn check_start(initial: &Trajectory, cost: &TrackingCost, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if initial.horizon() != cost.horizon() {
        return Err(Error::Dimension(format!(
            "initial trajectory has T={}, cost has T={}",
            initial.horizon(),
            cost.horizon()
        )));
    }
    Ok(())
}

/// Shared outer loop; `step` maps `(η^k, k)` to `(η^{k+1}, record)`.
fn iterate<F>(initial: &Trajectory, cfg: &SolverConfig, optimum: Option<&Trajectory>, mut step: F) -> RunOutput
where
    F: FnMut(&Trajectory, usize) -> Result<(Trajectory, IterationRecord)>,
{
    let mut traj = initial.clone();
    let mut records = Vec::new();
    for k in 0..cfg.max_iters {
        match step(&traj, k) {
            Ok((next, mut record)) => {
                record.dist = optimum.map(|opt| traj.distance(opt));
                info!("k={k} cost={:.6e} |dg|={:.3e}", record.cost, record.dg.abs());
                let done = record.dg.abs() <= cfg.dg_tol;
                records.push(record);
                traj = next;
                if done {
                    break;
                }
            }
            Err(e) => {
                return RunOutput {
                    records,
                    trajectory: traj,
                    failure: Some(e.at_iteration(k)),
                }
            }
        }
    }
    RunOutput {
        records,
        trajectory: traj,
        failure: None,
    }
}

/// Model-based PRONTO. Never runs identification experiments.
pub fn run_model_based(
    cfg: &SolverConfig,
    plant: &impl JacobianOracle,
    cost: &TrackingCost,
    initial: &Trajectory,
    optimum: Option<&Trajectory>,
) -> Result<RunOutput> {
    check_start(initial, cost, cfg)?;
    Ok(iterate(initial, cfg, optimum, |traj, k| pronto_step(traj, plant, cost, cfg, k)))
}

/// Data-driven PRONTO. `plant` only needs to simulate; the first batch of
/// experiments runs with zero tracking gains.
pub fn run_data_driven(
    cfg: &SolverConfig,
    plant: &impl PlantOracle,
    cost: &TrackingCost,
    initial: &Trajectory,
    optimum: Option<&Trajectory>,
) -> Result<RunOutput> {
    check_start(initial, cost, cfg)?;
    cfg.dither.validate(initial.state_dim(), initial.input_dim())?;
    let mut policy = FeedbackPolicy::zero(initial.horizon(), initial.state_dim(), initial.input_dim());
    Ok(iterate(initial, cfg, optimum, |traj, k| {
        let out = ddpronto_step(traj, plant, cost, cfg, &policy, k)?;
        policy = out.policy;
        Ok((out.trajectory, out.record))
    }))
}

/// Dispatches on `cfg.mode`.
pub fn run(
    cfg: &SolverConfig,
    plant: &impl JacobianOracle,
    cost: &TrackingCost,
    initial: &Trajectory,
    optimum: Option<&Trajectory>,
) -> Result<RunOutput> {
    match cfg.mode {
        Mode::ModelBased => run_model_based(cfg, plant, cost, initial, optimum),
        Mode::DataDriven => run_data_driven(cfg, plant, cost, initial, optimum),
    }
}

/// Tolerance used for the reference optimum of distance reports.
pub const OPTIMUM_DG_TOL: f64 = 1e-10;

/// Model-based solve to `|dg| ≤ 1e-10` (or the iteration budget of `cfg`).
///
/// The result is accepted when the run ended without error; if the tight
/// tolerance was not met, the last iterate is returned with a warning.
pub fn reference_optimum(
    cfg: &SolverConfig,
    plant: &impl JacobianOracle,
    cost: &TrackingCost,
    initial: &Trajectory,
) -> Result<Trajectory> {
    let tight = SolverConfig {
        mode: Mode::ModelBased,
        dg_tol: OPTIMUM_DG_TOL,
        max_iters: cfg.max_iters.max(100),
        ..cfg.clone()
    };
    let out = run_model_based(&tight, plant, cost, initial, None)?;
    if let Some(e) = out.failure {
        return Err(e);
    }
    if !out.converged(OPTIMUM_DG_TOL) {
        log::warn!(
            "reference optimum stopped at |dg| = {:e} after {} iterations",
            out.final_dg().unwrap_or(f64::NAN).abs(),
            out.records.len()
        );
    }
    Ok(out.trajectory)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub j: usize,
    pub delta_x: f64,
    pub delta_u: f64,
    /// `‖η_final − η*‖`, absent when the run failed.
    pub distance: Option<f64>,
    pub final_dg: Option<f64>,
    pub error: Option<String>,
}

/// Data-driven runs with the dither bounds of `cfg.dither` halved `j` times,
/// `j = 0..n_halvings`, each reporting its final distance to `optimum`.
/// Failed runs are marked in their row; the sweep carries on.
pub fn dither_sweep(
    cfg: &SolverConfig,
    plant: &impl PlantOracle,
    cost: &TrackingCost,
    initial: &Trajectory,
    optimum: &Trajectory,
    n_halvings: usize,
) -> Vec<SweepRow> {
    (0..n_halvings)
        .into_par_iter()
        .map(|j| {
            let factor = 0.5f64.powi(j as i32);
            let mut dither = cfg.dither.scaled(factor);
            dither.seed = cfg.dither.seed.wrapping_add(j as u64);
            let row_cfg = SolverConfig {
                mode: Mode::DataDriven,
                dither: dither.clone(),
                batch_dump_dir: None,
                ..cfg.clone()
            };
            let outcome = run_data_driven(&row_cfg, plant, cost, initial, None);
            let (distance, final_dg, error) = match outcome {
                Ok(out) => match out.failure {
                    None => (Some(out.trajectory.distance(optimum)), out.final_dg(), None),
                    Some(e) => (None, out.records.last().map(|r| r.dg), Some(e.to_string())),
                },
                Err(e) => (None, None, Some(e.to_string())),
            };
            SweepRow {
                j,
                delta_x: dither.delta_x,
                delta_u: dither.delta_u,
                distance,
                final_dg,
                error,
            }
        })
        .collect()
}
