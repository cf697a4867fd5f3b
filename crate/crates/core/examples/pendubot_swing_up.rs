//! Model-based swing-up of the pendubot from hanging down to upright.
//!
//! ```text
//! cargo run --release --example pendubot_swing_up [max_iters]
//! ```

use ddpronto::config::pendubot_swing_up;
use ddpronto::optimizer::{run, Mode};

fn main() -> ddpronto::Result<()> {
    let max_iters = std::env::args().nth(1).map_or(120, |s| s.parse().expect("max_iters"));
    let mut cfg = pendubot_swing_up(Mode::ModelBased, 9.0);
    cfg.solver.max_iters = max_iters;
    let p = cfg.build()?;

    let out = run(&p.solver, &p.plant, &p.cost, &p.initial, None)?;
    for r in &out.records {
        println!("k={:3}  cost={:.6e}  |dg|={:.3e}", r.k, r.cost, r.dg.abs());
    }
    if let Some(e) = out.failure {
        return Err(e);
    }
    let x_final = out.trajectory.x().last().unwrap();
    println!("final state: q1={:.4} q2={:.4} dq1={:.4} dq2={:.4}", x_final[0], x_final[1], x_final[2], x_final[3]);
    Ok(())
}
