//! The projection operator: a tracking controller turns any curve into a
//! trajectory, and leaves trajectories untouched.

use ddpronto::dynamics::{jacobians, residual, rollout_open_loop, Curve, JacobianMode, Pendubot};
use ddpronto::projection::{project, synthesize_policy};
use nalgebra::{DMatrix, DVector};

fn main() -> ddpronto::Result<()> {
    let plant = Pendubot::new(Default::default())?;
    let horizon = 300;
    let nominal = rollout_open_loop(&Pendubot::down_equilibrium(), &vec![DVector::zeros(1); horizon], &plant)?;
    let model = jacobians(&nominal, &plant, JacobianMode::Exact)?;
    let policy = synthesize_policy(
        &model,
        &DMatrix::from_diagonal(&DVector::from_vec(vec![1e3, 1e3, 1e2, 1e2])),
        &DMatrix::from_element(1, 1, 50.0),
    )?;

    // a curve that nudges the first link forward by 0.3 rad half-way through
    let curve = Curve::new(
        nominal
            .x()
            .iter()
            .enumerate()
            .map(|(t, x)| if t >= horizon / 2 { x + DVector::from_vec(vec![0.3, 0.0, 0.0, 0.0]) } else { x.clone() })
            .collect(),
        nominal.u().to_vec(),
        nominal.x_init().clone(),
    )?;
    println!("curve residual:      {:.3e}", residual(&curve, &plant));
    let traj = project(&curve, &policy, &plant)?;
    println!("projection residual: {:.3e}", residual(traj.as_curve(), &plant));
    println!("q1 at the end:       {:.4} (curve asks for {:.4})", traj.x()[horizon][0], curve.alpha[horizon][0]);
    let again = project(traj.as_curve(), &policy, &plant)?;
    println!("re-projection moves it by {:.1e}", again.distance(&traj));
    Ok(())
}
