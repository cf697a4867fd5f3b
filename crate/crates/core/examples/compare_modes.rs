//! Model-based and data-driven runs side by side: the first converges, the
//! second stalls in a neighborhood of the optimum set by the dither size.
//!
//! ```text
//! cargo run --release --example compare_modes
//! ```

use ddpronto::config::pendubot_swing_up;
use ddpronto::optimizer::{run_data_driven, run_model_based, Mode};

fn main() -> ddpronto::Result<()> {
    let mb = pendubot_swing_up(Mode::ModelBased, 9.0).build()?;
    let dd = pendubot_swing_up(Mode::DataDriven, 9.0).build()?;

    let mb_out = run_model_based(&mb.solver, &mb.plant, &mb.cost, &mb.initial, None)?;
    let dd_out = run_data_driven(&dd.solver, &dd.plant, &dd.cost, &dd.initial, Some(&mb_out.trajectory))?;

    println!("  k   model-based |dg|   data-driven |dg|   kappa_max   dist");
    for k in 0..mb_out.records.len().max(dd_out.records.len()) {
        let mb_dg = mb_out.records.get(k).map_or(String::new(), |r| format!("{:.3e}", r.dg.abs()));
        let (dd_dg, kappa, dist) = dd_out.records.get(k).map_or((String::new(), String::new(), String::new()), |r| {
            (
                format!("{:.3e}", r.dg.abs()),
                format!("{:.1e}", r.kappa_max.unwrap()),
                format!("{:.3e}", r.dist.unwrap()),
            )
        });
        println!("{k:3}   {mb_dg:>16}   {dd_dg:>16}   {kappa:>9}   {dist}");
    }
    Ok(())
}
