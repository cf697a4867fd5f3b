//! Projection-operator-based trajectory optimization for discrete-time
//! nonlinear systems, in a model-based flavor that linearizes the plant and a
//! data-driven flavor that only simulates it and identifies the linearization
//! from dithered experiments.
//!
//! ```no_run
//! use ddpronto::config::pendubot_swing_up;
//! use ddpronto::optimizer::{run, Mode};
//!
//! let problem = pendubot_swing_up(Mode::DataDriven, 5.0).build()?;
//! let out = run(&problem.solver, &problem.plant, &problem.cost, &problem.initial, None)?;
//! println!("final |dg| = {:e}", out.final_dg().unwrap_or(f64::NAN).abs());
//! # Ok::<(), ddpronto::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod identification;
pub mod io;
pub mod lqr;
pub mod optimizer;
pub mod projection;

pub use cost::TrackingCost;
pub use dynamics::{Curve, JacobianOracle, LtvModel, PlantOracle, Trajectory};
pub use error::{Error, Result};
pub use optimizer::{Mode, RunOutput, SolverConfig};
pub use projection::FeedbackPolicy;
