//! Declarative run configuration (TOML).
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [plant]
//! kind = "pendubot"          # "pendubot" | "lti" | "cubic"
//!
//! [horizon]
//! final_time = 10.0          # or `steps = 1000`
//!
//! [cost]
//! q = [1e3, 1e3, 1e2, 1e2]   # diagonal, or a full matrix [[..], ..]
//! r = [50.0]
//! terminal = "dare_exact"    # "dare_identified", "same_as_q", or a weight
//!
//! [cost.reference]
//! start = [-1.5707963267948966, 0.0, 0.0, 0.0]
//! end = [1.5707963267948966, 0.0, 0.0, 0.0]
//! step_time = 5.0
//!
//! [solver]
//! mode = "data_driven"
//!
//! [dither]
//! delta_x = 0.01
//! delta_u = 0.1
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::{step_reference, terminal_weight_dare, TrackingCost};
use crate::dynamics::{
    rollout_open_loop, CubicPlant, JacobianOracle, LtiPlant, Pendubot, PendubotParams, PlantOracle, Trajectory,
};
use crate::error::{Error, Result};
use crate::identification::{identify_equilibrium, DitherConfig};
use crate::io::trajectory_from_csv;
use crate::optimizer::{Mode, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub plant: PlantSpec,
    pub horizon: HorizonSpec,
    pub cost: CostSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub dither: DitherConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    Pendubot {
        #[serde(default)]
        params: PendubotParams,
    },
    Lti {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        #[serde(default = "one")]
        dt: f64,
    },
    Cubic {
        dt: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub final_time: Option<f64>,
}

/// A weight matrix given by its diagonal or in full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl WeightSpec {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            WeightSpec::Diagonal(d) => Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone()))),
            WeightSpec::Full(rows) => matrix_from_rows(rows),
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("matrix rows must have equal lengths".into()));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().cloned()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// DARE on the exact linearization at the reference end point.
    DareExact,
    /// DARE on a linearization identified from one-step experiments at the
    /// reference end point.
    DareIdentified,
    SameAsQ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerminalSpec {
    Mode(TerminalMode),
    Weight(WeightSpec),
}

impl Default for TerminalSpec {
    fn default() -> Self {
        TerminalSpec::Mode(TerminalMode::DareExact)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub q: WeightSpec,
    pub r: WeightSpec,
    #[serde(default)]
    pub terminal: TerminalSpec,
    pub reference: ReferenceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ReferenceSpec {
    Step {
        start: Vec<f64>,
        end: Vec<f64>,
        #[serde(default)]
        u_start: Option<Vec<f64>>,
        #[serde(default)]
        u_end: Option<Vec<f64>>,
        step_time: f64,
    },
    Csv {
        csv: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum InitialSpec {
    /// Open-loop rollout from `state` under a constant `input`.
    Constant { state: Vec<f64>, input: Vec<f64> },
    Csv { csv: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub mode: Mode,
    pub gamma: f64,
    pub max_iters: usize,
    pub dg_tol: Option<f64>,
    pub reg_q: Option<WeightSpec>,
    pub reg_r: Option<WeightSpec>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            mode: Mode::ModelBased,
            gamma: 1.0,
            max_iters: 50,
            dg_tol: None,
            reg_q: None,
            reg_r: None,
        }
    }
}

/// Any of the built-in plants.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyPlant {
    Pendubot(Pendubot),
    Lti(LtiPlant),
    Cubic(CubicPlant),
}

impl PlantOracle for AnyPlant {
    fn state_dim(&self) -> usize {
        match self {
            AnyPlant::Pendubot(p) => p.state_dim(),
            AnyPlant::Lti(p) => p.state_dim(),
            AnyPlant::Cubic(p) => p.state_dim(),
        }
    }
    fn input_dim(&self) -> usize {
        match self {
            AnyPlant::Pendubot(p) => p.input_dim(),
            AnyPlant::Lti(p) => p.input_dim(),
            AnyPlant::Cubic(p) => p.input_dim(),
        }
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            AnyPlant::Pendubot(p) => p.step(x, u),
            AnyPlant::Lti(p) => p.step(x, u),
            AnyPlant::Cubic(p) => p.step(x, u),
        }
    }
}

impl JacobianOracle for AnyPlant {
    fn exact_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            AnyPlant::Pendubot(p) => p.exact_jacobians(x, u),
            AnyPlant::Lti(p) => p.exact_jacobians(x, u),
            AnyPlant::Cubic(p) => p.exact_jacobians(x, u),
        }
    }
}

/// Everything needed to start a run, built and validated from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Problem {
    pub plant: AnyPlant,
    pub cost: TrackingCost,
    pub initial: Trajectory,
    pub solver: SolverConfig,
}

fn field_err(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative CSV paths resolve against the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        if let ReferenceSpec::Csv { csv } = &mut cfg.cost.reference {
            *csv = base.join(&*csv);
        }
        if let Some(InitialSpec::Csv { csv }) = &mut cfg.initial {
            *csv = base.join(&*csv);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build_plant(&self) -> Result<AnyPlant> {
        match &self.plant {
            PlantSpec::Pendubot { params } => Ok(AnyPlant::Pendubot(
                Pendubot::new(*params).map_err(|e| field_err("plant.params", e))?,
            )),
            PlantSpec::Lti { a, b, dt } => {
                if !(*dt > 0.0) {
                    return Err(Error::invalid("plant.dt", "must be strictly positive"));
                }
                Ok(AnyPlant::Lti(LtiPlant::new(matrix_from_rows(a)?, matrix_from_rows(b)?)?))
            }
            PlantSpec::Cubic { dt } => Ok(AnyPlant::Cubic(CubicPlant::new(*dt).map_err(|e| field_err("plant", e))?)),
        }
    }

    fn plant_dt(&self) -> f64 {
        match &self.plant {
            PlantSpec::Pendubot { params } => params.dt,
            PlantSpec::Lti { dt, .. } => *dt,
            PlantSpec::Cubic { dt } => *dt,
        }
    }

    pub fn horizon_steps(&self) -> Result<usize> {
        let steps = match (self.horizon.steps, self.horizon.final_time) {
            (Some(s), _) => s,
            (None, Some(tf)) => {
                if !(tf > 0.0) {
                    return Err(Error::invalid("horizon.final_time", "must be strictly positive"));
                }
                (tf / self.plant_dt()).round() as usize
            }
            (None, None) => return Err(Error::invalid("horizon", "set `steps` or `final_time`")),
        };
        if steps == 0 {
            return Err(Error::invalid("horizon", "must contain at least one step"));
        }
        Ok(steps)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let mut dither = self.dither.clone();
        dither.seed = self.seed;
        let mut cfg = match s.mode {
            Mode::ModelBased => SolverConfig::model_based(),
            Mode::DataDriven => SolverConfig::data_driven(dither.clone()),
        };
        cfg.dither = dither;
        cfg.gamma = s.gamma;
        cfg.max_iters = s.max_iters;
        if let Some(tol) = s.dg_tol {
            cfg.dg_tol = tol;
        }
        cfg.reg_q = s.reg_q.as_ref().map(WeightSpec::to_matrix).transpose()?;
        cfg.reg_r = s.reg_r.as_ref().map(WeightSpec::to_matrix).transpose()?;
        cfg.validate().map_err(|e| field_err("solver", e))?;
        Ok(cfg)
    }

    /// Validates every section and assembles plant, cost, initial trajectory
    /// and solver settings.
    pub fn build(&self) -> Result<Problem> {
        let plant = self.build_plant()?;
        let (n, m) = (plant.state_dim(), plant.input_dim());
        let horizon = self.horizon_steps()?;
        let solver = self.solver_config()?;
        solver.dither.validate(n, m).map_err(|e| field_err("dither", e))?;

        let (x_ref, u_ref, x_start, u_hold) = match &self.cost.reference {
            ReferenceSpec::Step {
                start,
                end,
                u_start,
                u_end,
                step_time,
            } => {
                let zeros = vec![0.0; m];
                let start = vec_of(start, n, "cost.reference.start")?;
                let end = vec_of(end, n, "cost.reference.end")?;
                let u_start = vec_of(u_start.as_ref().unwrap_or(&zeros), m, "cost.reference.u_start")?;
                let u_end = vec_of(u_end.as_ref().unwrap_or(&zeros), m, "cost.reference.u_end")?;
                if !(*step_time >= 0.0) {
                    return Err(Error::invalid("cost.reference.step_time", "must be nonnegative"));
                }
                let step_index = (step_time / self.plant_dt()).round() as usize;
                let (x_ref, u_ref) = step_reference(&start, &end, &u_start, &u_end, step_index, horizon);
                (x_ref, u_ref, start, u_start)
            }
            ReferenceSpec::Csv { csv } => {
                let curve = trajectory_from_csv(&read(csv)?)?;
                if curve.horizon() != horizon {
                    return Err(Error::invalid("cost.reference.csv", format!("has T={}, expected {horizon}", curve.horizon())));
                }
                let (x_start, u_hold) = (curve.alpha[0].clone(), curve.mu[0].clone());
                (curve.alpha, curve.mu, x_start, u_hold)
            }
        };

        let q = self.cost.q.to_matrix()?;
        let r = self.cost.r.to_matrix()?;
        let x_end = x_ref[horizon].clone();
        let u_end = u_ref[horizon - 1].clone();
        let q_terminal = match &self.cost.terminal {
            TerminalSpec::Weight(w) => w.to_matrix()?,
            TerminalSpec::Mode(TerminalMode::SameAsQ) => q.clone(),
            TerminalSpec::Mode(TerminalMode::DareExact) => {
                let (a, b) = plant
                    .exact_jacobians(&x_end, &u_end)
                    .ok_or(Error::JacobianUnavailable(crate::dynamics::JacobianMode::Exact))?;
                terminal_weight_dare(&a, &b, &q, &r)?
            }
            TerminalSpec::Mode(TerminalMode::DareIdentified) => {
                let (a, b) = identify_equilibrium(&plant, &x_end, &u_end, &solver.dither)?;
                terminal_weight_dare(&a, &b, &q, &r)?
            }
        };
        let cost = TrackingCost::new(q, r, q_terminal, x_ref, u_ref).map_err(|e| field_err("cost", e))?;

        let initial = match &self.initial {
            None => rollout_open_loop(&x_start, &vec![u_hold; horizon], &plant)?,
            Some(InitialSpec::Constant { state, input }) => {
                let x0 = vec_of(state, n, "initial.state")?;
                let u0 = vec_of(input, m, "initial.input")?;
                rollout_open_loop(&x0, &vec![u0; horizon], &plant)?
            }
            Some(InitialSpec::Csv { csv }) => {
                let curve = trajectory_from_csv(&read(csv)?)?;
                Trajectory::from_curve(curve, &plant, 1e-9).map_err(|e| field_err("initial.csv", e))?
            }
        };
        if initial.horizon() != horizon {
            return Err(Error::invalid("initial", format!("has T={}, expected {horizon}", initial.horizon())));
        }
        Ok(Problem {
            plant,
            cost,
            initial,
            solver,
        })
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn vec_of(v: &[f64], len: usize, field: &str) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::invalid(field, format!("expected {len} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

/// Pendubot swing-up problem with the standard weights, 10 s horizon,
/// reference step at `step_time`, starting from standstill hanging down.
pub fn pendubot_swing_up(mode: Mode, step_time: f64) -> RunConfig {
    use std::f64::consts::FRAC_PI_2;
    RunConfig {
        schema_version: SCHEMA_VERSION,
        seed: 0,
        out_dir: None,
        plant: PlantSpec::Pendubot {
            params: PendubotParams::default(),
        },
        horizon: HorizonSpec {
            steps: None,
            final_time: Some(10.0),
        },
        cost: CostSpec {
            q: WeightSpec::Diagonal(vec![1e3, 1e3, 1e2, 1e2]),
            r: WeightSpec::Diagonal(vec![50.0]),
            terminal: TerminalSpec::Mode(TerminalMode::DareExact),
            reference: ReferenceSpec::Step {
                start: vec![-FRAC_PI_2, 0.0, 0.0, 0.0],
                end: vec![FRAC_PI_2, 0.0, 0.0, 0.0],
                u_start: None,
                u_end: None,
                step_time,
            },
        },
        initial: None,
        solver: SolverSpec {
            mode,
            ..Default::default()
        },
        dither: DitherConfig::default(),
    }
}
