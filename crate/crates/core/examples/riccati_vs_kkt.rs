//! The descent subproblem solved twice: by the backward Riccati recursion
//! and by factorizing the dense KKT system.

use ddpronto::cost::QuadDerivStack;
use ddpronto::dynamics::{LtvModel, ModelSource};
use ddpronto::lqr::{solve_descent_kkt, solve_descent_riccati, KktSystem};
use nalgebra::{DMatrix, DVector};

fn main() -> ddpronto::Result<()> {
    let (n, m, horizon) = (2, 1, 30);
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.005, 0.1]);
    let model = LtvModel::new(vec![a; horizon], vec![b; horizon], ModelSource::Exact)?;
    let derivs = QuadDerivStack {
        q: (0..=horizon).map(|t| DVector::from_vec(vec![(t as f64 * 0.3).cos(), -0.5])).collect(),
        r: vec![DVector::from_element(m, 0.1); horizon],
        qh: vec![DMatrix::identity(n, n) * 2.0; horizon],
        s: vec![DMatrix::zeros(n, m); horizon],
        rh: vec![DMatrix::identity(m, m) * 0.2; horizon],
        qt: DMatrix::identity(n, n) * 20.0,
    };

    let ric = solve_descent_riccati(&model, &derivs)?;
    let kkt = solve_descent_kkt(&model, &derivs)?;
    println!("dg (Riccati) = {:.12e}", ric.dg);
    println!("dg (KKT)     = {:.12e}", kkt.dg);
    println!("max |difference| = {:.2e}", (ric.flat() - kkt.flat()).amax());

    let system = KktSystem::assemble(&model, &derivs)?;
    let (zeta, lambda) = system.solve()?;
    let (stationarity, feasibility) = system.residuals(&zeta, &lambda);
    println!("KKT size {}, residuals {stationarity:.1e} / {feasibility:.1e}", system.matrix().nrows());
    Ok(())
}
