//! Dithered closed-loop experiments and per-step least-squares identification.
//!
//! Each experiment tracks the current trajectory with dithered references,
//! `û_t = π(x_t + d_x, u_t + d_u, x̂_t, t)`, from `x̂_0 = x_init + d_{x,0}`.
//! The deviations from the nominal trajectory are stacked into batches and
//! `[Â_t B̂_t] = ΔX⁺_t [ΔX_t; ΔU_t]ᵀ (G_t)⁻¹` with `G_t = [ΔX_t; ΔU_t][ΔX_t; ΔU_t]ᵀ`.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout_closed_loop, LtvModel, ModelSource, PlantOracle, Trajectory};
use crate::error::{Error, Result};
use crate::projection::FeedbackPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DitherDistribution {
    /// Componentwise `U(0, δ)`.
    UniformZeroToDelta,
    /// Componentwise `U(−δ, δ)`.
    UniformSymmetric,
}

impl DitherDistribution {
    fn sample(self, rng: &mut impl Rng, delta: f64) -> f64 {
        if delta == 0.0 {
            return 0.0;
        }
        match self {
            DitherDistribution::UniformZeroToDelta => rng.random_range(0.0..=delta),
            DitherDistribution::UniformSymmetric => rng.random_range(-delta..=delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DitherConfig {
    pub delta_x: f64,
    pub delta_u: f64,
    /// Number of perturbed experiments `L`.
    pub experiments: usize,
    pub dist_x: DitherDistribution,
    pub dist_u: DitherDistribution,
    pub seed: u64,
    pub max_retries: u32,
    /// Upper bound `M` on the condition number of every batch Gram matrix.
    pub condition_bound: f64,
}

impl Default for DitherConfig {
    fn default() -> Self {
        Self {
            delta_x: 0.01,
            delta_u: 0.1,
            experiments: 6,
            dist_x: DitherDistribution::UniformSymmetric,
            dist_u: DitherDistribution::UniformZeroToDelta,
            seed: 0,
            max_retries: 10,
            condition_bound: 1e8,
        }
    }
}

impl DitherConfig {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if !(self.delta_x >= 0.0 && self.delta_x.is_finite()) {
            return Err(Error::invalid("delta_x", "must be finite and nonnegative"));
        }
        if !(self.delta_u >= 0.0 && self.delta_u.is_finite()) {
            return Err(Error::invalid("delta_u", "must be finite and nonnegative"));
        }
        if self.experiments < n + m {
            return Err(Error::invalid(
                "experiments",
                format!("need at least n+m = {} experiments, got {}", n + m, self.experiments),
            ));
        }
        if !(self.condition_bound > 1.0) {
            return Err(Error::invalid("condition_bound", "must exceed 1"));
        }
        Ok(())
    }

    /// Same configuration with both dither bounds scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            delta_x: self.delta_x * factor,
            delta_u: self.delta_u * factor,
            ..self.clone()
        }
    }
}

/// Dither sequences for `L` experiments: `state[i][t]`, `input[i][t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DitherStack {
    pub state: Vec<Vec<DVector<f64>>>,
    pub input: Vec<Vec<DVector<f64>>>,
}

impl DitherStack {
    pub fn experiments(&self) -> usize {
        self.state.len()
    }
}

/// Draws the dither stack for `(seed, iteration, retry)`; the result depends
/// on nothing else.
pub fn generate_dithers(cfg: &DitherConfig, iteration: usize, retry: u32, horizon: usize, n: usize, m: usize) -> DitherStack {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((iteration as u64) << 32) | u64::from(retry));
    let mut state = Vec::with_capacity(cfg.experiments);
    let mut input = Vec::with_capacity(cfg.experiments);
    for _ in 0..cfg.experiments {
        let mut dx = Vec::with_capacity(horizon);
        let mut du = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            dx.push(DVector::from_fn(n, |_, _| cfg.dist_x.sample(&mut rng, cfg.delta_x)));
            du.push(DVector::from_fn(m, |_, _| cfg.dist_u.sample(&mut rng, cfg.delta_u)));
        }
        state.push(dx);
        input.push(du);
    }
    DitherStack { state, input }
}

/// Runs the `L` dithered closed-loop experiments about `traj`.
pub fn run_experiments(
    traj: &Trajectory,
    policy: &FeedbackPolicy,
    dithers: &DitherStack,
    plant: &(impl PlantOracle + ?Sized),
) -> Result<Vec<Trajectory>> {
    let horizon = traj.horizon();
    if policy.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "policy horizon {} differs from trajectory horizon {horizon}",
            policy.horizon()
        )));
    }
    if dithers.state.iter().chain(&dithers.input).any(|d| d.len() != horizon) {
        return Err(Error::Dimension("dither sequences must have one entry per step".into()));
    }
    (0..dithers.experiments())
        .into_par_iter()
        .map(|i| {
            let (dx, du) = (&dithers.state[i], &dithers.input[i]);
            let x0 = match dx.first() {
                Some(d) => traj.x_init() + d,
                None => traj.x_init().clone(),
            };
            rollout_closed_loop(x0.clone(), x0, horizon, plant, |t, x| {
                let alpha = &traj.x()[t] + &dx[t];
                let mu = &traj.u()[t] + &du[t];
                policy.control(&alpha, &mu, x, t)
            })
        })
        .collect()
}

/// Deviation batches `ΔX_t, ΔU_t, ΔX⁺_t` with the Gram condition numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct DataBatches {
    pub dx: Vec<DMatrix<f64>>,
    pub du: Vec<DMatrix<f64>>,
    pub dx_next: Vec<DMatrix<f64>>,
    /// `κ([ΔX_t; ΔU_t][ΔX_t; ΔU_t]ᵀ)`, `+∞` when the Gram matrix is singular.
    pub kappas: Vec<f64>,
}

impl DataBatches {
    pub fn from_parts(dx: Vec<DMatrix<f64>>, du: Vec<DMatrix<f64>>, dx_next: Vec<DMatrix<f64>>) -> Result<Self> {
        if dx.len() != du.len() || dx.len() != dx_next.len() {
            return Err(Error::Dimension("batch stacks must have equal lengths".into()));
        }
        for t in 0..dx.len() {
            let l = dx[t].ncols();
            if du[t].ncols() != l || dx_next[t].ncols() != l || dx_next[t].nrows() != dx[t].nrows() {
                return Err(Error::Dimension(format!("inconsistent batch shapes at step {t}")));
            }
        }
        let kappas = dx.iter().zip(&du).map(|(x, u)| gram_condition(&stack_rows(x, u))).collect();
        Ok(Self { dx, du, dx_next, kappas })
    }

    pub fn horizon(&self) -> usize {
        self.dx.len()
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappas.iter().cloned().fold(0.0, f64::max)
    }

    /// `[ΔX_t; ΔU_t]`.
    pub fn regressor(&self, t: usize) -> DMatrix<f64> {
        stack_rows(&self.dx[t], &self.du[t])
    }

    /// All batches multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |v: &Vec<DMatrix<f64>>| v.iter().map(|m| m * factor).collect::<Vec<_>>();
        Self::from_parts(scale(&self.dx), scale(&self.du), scale(&self.dx_next)).expect("scaling keeps shapes")
    }
}

fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// `λ_max / λ_min` of `D Dᵀ`.
pub fn gram_condition(d: &DMatrix<f64>) -> f64 {
    let gram = d * d.transpose();
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || !hi.is_finite() {
        return f64::INFINITY;
    }
    hi / lo
}

pub fn build_batches(traj: &Trajectory, perturbed: &[Trajectory]) -> Result<DataBatches> {
    let horizon = traj.horizon();
    let n = traj.state_dim();
    let m = traj.input_dim();
    let l = perturbed.len();
    if perturbed.iter().any(|p| p.horizon() != horizon || p.state_dim() != n) {
        return Err(Error::Dimension("perturbed trajectories must match the nominal one".into()));
    }
    let mut dx = Vec::with_capacity(horizon);
    let mut du = Vec::with_capacity(horizon);
    let mut dx_next = Vec::with_capacity(horizon);
    for t in 0..horizon {
        dx.push(DMatrix::from_fn(n, l, |r, i| perturbed[i].x()[t][r] - traj.x()[t][r]));
        du.push(DMatrix::from_fn(m, l, |r, i| perturbed[i].u()[t][r] - traj.u()[t][r]));
        dx_next.push(DMatrix::from_fn(n, l, |r, i| perturbed[i].x()[t + 1][r] - traj.x()[t + 1][r]));
    }
    DataBatches::from_parts(dx, du, dx_next)
}

/// Least-squares estimate of `(Â_t, B̂_t)` for every step.
///
/// Fails with [`Error::IllConditioned`] at the first step whose Gram
/// condition number exceeds `cfg.condition_bound`.
pub fn identify_ltv(batches: &DataBatches, cfg: &DitherConfig) -> Result<LtvModel> {
    let mut a = Vec::with_capacity(batches.horizon());
    let mut b = Vec::with_capacity(batches.horizon());
    for t in 0..batches.horizon() {
        let kappa = batches.kappas[t];
        if !(kappa <= cfg.condition_bound) {
            return Err(Error::IllConditioned { t, kappa });
        }
        let d = batches.regressor(t);
        let gram = &d * d.transpose();
        let chol = gram.cholesky().ok_or(Error::IllConditioned { t, kappa })?;
        // (Dᵀ G⁻¹)ᵀ = G⁻¹ D since G is symmetric
        let pinv_t = chol.solve(&d);
        let ab = &batches.dx_next[t] * pinv_t.transpose();
        let n = batches.dx[t].nrows();
        let m = batches.du[t].nrows();
        a.push(ab.columns(0, n).into_owned());
        b.push(ab.columns(n, m).into_owned());
    }
    LtvModel::new(a, b, ModelSource::Identified)
}

/// Result of a learning phase: the identified model plus its data.
#[derive(Clone, Debug)]
pub struct Identification {
    pub model: LtvModel,
    pub batches: DataBatches,
    /// Dither redraws needed before the conditioning test passed.
    pub retries: u32,
}

/// Experiments, batch assembly and identification, redrawing the whole dither
/// stack on an ill-conditioned batch up to `cfg.max_retries` times.
pub fn collect_and_identify(
    traj: &Trajectory,
    policy: &FeedbackPolicy,
    plant: &(impl PlantOracle + ?Sized),
    cfg: &DitherConfig,
    iteration: usize,
) -> Result<Identification> {
    let (n, m) = (traj.state_dim(), traj.input_dim());
    cfg.validate(n, m)?;
    let mut retry = 0;
    loop {
        let dithers = generate_dithers(cfg, iteration, retry, traj.horizon(), n, m);
        let perturbed = run_experiments(traj, policy, &dithers, plant)?;
        let batches = build_batches(traj, &perturbed)?;
        match identify_ltv(&batches, cfg) {
            Ok(model) => {
                return Ok(Identification {
                    model,
                    batches,
                    retries: retry,
                })
            }
            Err(e @ Error::IllConditioned { .. }) if retry < cfg.max_retries => {
                debug!("iteration {iteration}: {e}; redrawing dithers");
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// One-step experiments about an equilibrium `(x_eq, u_eq)`, giving an
/// identified `(A, B)` there.
pub fn identify_equilibrium(
    plant: &(impl PlantOracle + ?Sized),
    x_eq: &DVector<f64>,
    u_eq: &DVector<f64>,
    cfg: &DitherConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let x_next = plant.step(x_eq, u_eq);
    let curve = crate::dynamics::Curve::new(vec![x_eq.clone(), x_next], vec![u_eq.clone()], x_eq.clone())?;
    let traj = Trajectory::from_curve(curve, &plant, 0.0)?;
    let policy = FeedbackPolicy::zero(1, x_eq.len(), u_eq.len());
    let ident = collect_and_identify(&traj, &policy, plant, cfg, 0)?;
    Ok((ident.model.a[0].clone(), ident.model.b[0].clone()))
}
