//! Data-driven optimization of a plant the optimizer can only simulate.
//!
//! `Cart` implements `PlantOracle` and nothing else, so only the
//! data-driven loop accepts it.

use ddpronto::cost::TrackingCost;
use ddpronto::dynamics::rollout_open_loop;
use ddpronto::identification::DitherConfig;
use ddpronto::optimizer::run_data_driven;
use ddpronto::{PlantOracle, SolverConfig};
use nalgebra::{DMatrix, DVector};

/// Cart with quadratic drag, pushed by a force: state (position, velocity).
struct Cart {
    dt: f64,
}

impl PlantOracle for Cart {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let drag = 0.5 * x[1] * x[1].abs();
        DVector::from_vec(vec![x[0] + self.dt * x[1], x[1] + self.dt * (u[0] - drag)])
    }
}

fn main() -> ddpronto::Result<()> {
    let plant = Cart { dt: 0.05 };
    let horizon = 100;
    let target = DVector::from_vec(vec![2.0, 0.0]);
    let cost = TrackingCost::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0])),
        DMatrix::from_element(1, 1, 0.1),
        DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 10.0])),
        vec![target; horizon + 1],
        vec![DVector::zeros(1); horizon],
    )?;
    let initial = rollout_open_loop(&DVector::zeros(2), &vec![DVector::zeros(1); horizon], &plant)?;

    let cfg = SolverConfig {
        max_iters: 20,
        ..SolverConfig::data_driven(DitherConfig {
            delta_x: 1e-3,
            delta_u: 1e-2,
            ..DitherConfig::default()
        })
    };
    let out = run_data_driven(&cfg, &plant, &cost, &initial, None)?;
    for r in &out.records {
        println!("k={:2}  cost={:.5e}  |dg|={:.2e}  kappa_max={:.1e}", r.k, r.cost, r.dg.abs(), r.kappa_max.unwrap());
    }
    let x_end = out.trajectory.x().last().unwrap();
    println!("final position {:.4}, velocity {:.4}", x_end[0], x_end[1]);
    Ok(())
}
