//! Least-squares identification of a linear plant from six dithered
//! closed-loop experiments. For linear plants the estimate is exact.

use ddpronto::dynamics::{rollout_open_loop, LtiPlant};
use ddpronto::identification::{collect_and_identify, DitherConfig};
use ddpronto::projection::FeedbackPolicy;
use nalgebra::{DMatrix, DVector};

fn main() -> ddpronto::Result<()> {
    let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.0, 0.8, 0.2, 0.1, 0.0, 0.7]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 0.3, 1.0]);
    let plant = LtiPlant::new(a.clone(), b.clone())?;

    let horizon = 25;
    let inputs: Vec<_> = (0..horizon).map(|t| DVector::from_vec(vec![(t as f64).sin(), 0.5])).collect();
    let nominal = rollout_open_loop(&DVector::from_vec(vec![1.0, 0.0, -1.0]), &inputs, &plant)?;

    let cfg = DitherConfig {
        experiments: 6,
        seed: 42,
        ..DitherConfig::default()
    };
    let ident = collect_and_identify(&nominal, &FeedbackPolicy::zero(horizon, 3, 2), &plant, &cfg, 0)?;
    let worst = (0..horizon)
        .map(|t| (&ident.model.a[t] - &a).amax().max((&ident.model.b[t] - &b).amax()))
        .fold(0.0, f64::max);
    println!("largest entry error over {horizon} steps: {worst:.2e}");
    println!("largest batch condition number: {:.3e}", ident.batches.kappa_max());
    println!("A_hat(0) = {:.6}", ident.model.a[0]);
    Ok(())
}
