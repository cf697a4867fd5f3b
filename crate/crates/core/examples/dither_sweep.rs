//! Final distance to the model-based optimum as the dither bounds are halved.
//!
//! ```text
//! cargo run --release --example dither_sweep [halvings]
//! ```

use ddpronto::config::pendubot_swing_up;
use ddpronto::optimizer::{dither_sweep, reference_optimum, Mode};

fn main() -> ddpronto::Result<()> {
    let halvings = std::env::args().nth(1).map_or(6, |s| s.parse().expect("halvings"));
    let mut cfg = pendubot_swing_up(Mode::DataDriven, 9.0);
    cfg.solver.max_iters = 150;
    let p = cfg.build()?;

    let optimum = reference_optimum(&p.solver, &p.plant, &p.cost, &p.initial)?;
    println!(" j   delta_x    delta_u    distance");
    for row in dither_sweep(&p.solver, &p.plant, &p.cost, &p.initial, &optimum, halvings) {
        match row.distance {
            Some(d) => println!("{:2}   {:.3e}  {:.3e}  {:.3e}", row.j, row.delta_x, row.delta_u, d),
            None => println!("{:2}   {:.3e}  {:.3e}  failed: {}", row.j, row.delta_x, row.delta_u, row.error.unwrap_or_default()),
        }
    }
    Ok(())
}
