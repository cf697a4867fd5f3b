//! Descent-direction subproblem: an affine time-varying LQR.
//!
//! ```text
//! min  Σ_t ½[Δx;Δu]ᵀ[[Q S];[Sᵀ R]][Δx;Δu] + qᵀΔx + rᵀΔu  +  ½Δx_TᵀQ_TΔx_T + q_TᵀΔx_T
//! s.t. Δx_{t+1} = A_t Δx_t + B_t Δu_t,   Δx_0 = 0
//! ```
//!
//! [`solve_descent_riccati`] is the production solver. [`solve_descent_kkt`]
//! assembles the full equality-constrained QP and solves it densely; it only
//! exists to cross-check the recursion on small problems.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::cost::{stage_block, symmetrize, QuadDerivStack};
use crate::dynamics::LtvModel;
use crate::error::{Error, Result};

/// Shift added to a stage Hessian that fails the Cholesky test.
pub const HESSIAN_REGULARIZATION: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct DescentDirection {
    pub dx: Vec<DVector<f64>>,
    pub du: Vec<DVector<f64>>,
    /// Feedback gains with `du_t = −K_t dx_t + feedforward_t`.
    pub gains: Vec<DMatrix<f64>>,
    pub feedforward: Vec<DVector<f64>>,
    /// Predicted cost differential `Σ q_tᵀdx_t + r_tᵀdu_t + q_Tᵀdx_T`.
    pub dg: f64,
}

impl DescentDirection {
    /// Euclidean norm of the stacked `(dx, du)`.
    pub fn norm(&self) -> f64 {
        let sx: f64 = self.dx.iter().map(|v| v.norm_squared()).sum();
        let su: f64 = self.du.iter().map(|v| v.norm_squared()).sum();
        (sx + su).sqrt()
    }

    pub fn flat(&self) -> DVector<f64> {
        flatten(&self.dx, &self.du)
    }
}

fn flatten(xs: &[DVector<f64>], us: &[DVector<f64>]) -> DVector<f64> {
    let len = xs.iter().chain(us).map(|v| v.len()).sum();
    DVector::from_iterator(len, xs.iter().chain(us).flat_map(|v| v.iter().cloned()))
}

fn check_shapes(model: &LtvModel, derivs: &QuadDerivStack) -> Result<(usize, usize, usize)> {
    let horizon = model.horizon();
    if derivs.horizon() != horizon || derivs.q.len() != horizon + 1 {
        return Err(Error::Dimension(format!(
            "model has {horizon} steps, derivative stack has {}",
            derivs.horizon()
        )));
    }
    let n = derivs.qt.nrows();
    let m = derivs.rh.first().map_or(model.input_dim(), |r| r.nrows());
    if horizon > 0 && (model.state_dim() != n || model.input_dim() != m) {
        return Err(Error::Dimension(format!(
            "model is (n={}, m={}), cost derivatives are (n={n}, m={m})",
            model.state_dim(),
            model.input_dim()
        )));
    }
    Ok((horizon, n, m))
}

/// Stage Hessians made positive definite, shifting by [`HESSIAN_REGULARIZATION`]
/// where a block fails Cholesky.
fn checked_hessians(derivs: &QuadDerivStack) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let horizon = derivs.horizon();
    let mut qh = derivs.qh.clone();
    let s = derivs.s.clone();
    let mut rh = derivs.rh.clone();
    for t in 0..horizon {
        if derivs.stage_hessian(t).cholesky().is_none() {
            warn!("stage Hessian at step {t} is not positive definite; adding {HESSIAN_REGULARIZATION:e}·I");
            let n = qh[t].nrows();
            let m = rh[t].nrows();
            qh[t] += DMatrix::identity(n, n) * HESSIAN_REGULARIZATION;
            rh[t] += DMatrix::identity(m, m) * HESSIAN_REGULARIZATION;
            if stage_block(&qh[t], &s[t], &rh[t]).cholesky().is_none() {
                return Err(Error::NotPositiveDefinite { t });
            }
        }
    }
    let mut qt = derivs.qt.clone();
    if qt.clone().cholesky().is_none() {
        warn!("terminal Hessian is not positive definite; adding {HESSIAN_REGULARIZATION:e}·I");
        qt += DMatrix::identity(qt.nrows(), qt.nrows()) * HESSIAN_REGULARIZATION;
        if qt.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite { t: horizon });
        }
    }
    Ok((qh, s, rh, qt))
}

/// Solves the descent subproblem by a backward Riccati sweep on the value
/// function `½dxᵀP_t dx + p_tᵀdx` followed by a forward rollout.
pub fn solve_descent_riccati(model: &LtvModel, derivs: &QuadDerivStack) -> Result<DescentDirection> {
    let (horizon, n, m) = check_shapes(model, derivs)?;
    let (qh, s, rh, qt) = checked_hessians(derivs)?;

    let mut gains = vec![DMatrix::zeros(m, n); horizon];
    let mut feedforward = vec![DVector::zeros(m); horizon];
    let mut p_mat = qt;
    let mut p_vec = derivs.q[horizon].clone();
    for t in (0..horizon).rev() {
        let (a, b) = (&model.a[t], &model.b[t]);
        let pa = &p_mat * a;
        let pb = &p_mat * b;
        let huu = symmetrize(&rh[t] + b.transpose() * &pb);
        let hux = s[t].transpose() + b.transpose() * &pa;
        let hu = &derivs.r[t] + b.transpose() * &p_vec;
        let chol = huu.clone().cholesky().ok_or(Error::NotPositiveDefinite { t })?;
        let k = chol.solve(&hux);
        let ff = -chol.solve(&hu);
        p_mat = symmetrize(&qh[t] + a.transpose() * &pa - k.transpose() * &huu * &k);
        p_vec = &derivs.q[t] + a.transpose() * &p_vec + hux.transpose() * &ff;
        gains[t] = k;
        feedforward[t] = ff;
    }

    let mut dx = Vec::with_capacity(horizon + 1);
    let mut du = Vec::with_capacity(horizon);
    dx.push(DVector::zeros(n));
    for t in 0..horizon {
        let u = -&gains[t] * &dx[t] + &feedforward[t];
        dx.push(&model.a[t] * &dx[t] + &model.b[t] * &u);
        du.push(u);
    }
    let dg = cost_differential(derivs, &dx, &du);
    Ok(DescentDirection {
        dx,
        du,
        gains,
        feedforward,
        dg,
    })
}

/// `Σ q_tᵀdx_t + r_tᵀdu_t + q_Tᵀdx_T`.
pub fn cost_differential(derivs: &QuadDerivStack, dx: &[DVector<f64>], du: &[DVector<f64>]) -> f64 {
    let state: f64 = derivs.q.iter().zip(dx).map(|(q, d)| q.dot(d)).sum();
    let input: f64 = derivs.r.iter().zip(du).map(|(r, d)| r.dot(d)).sum();
    state + input
}

/// Dense KKT system `[[∇²ℓ, Hᵀ], [H, 0]] [ζ; λ] = [−∇ℓ; 0]` with the
/// dynamics constraint matrix `H = [H_x H_u]`.
#[derive(Clone, Debug)]
pub struct KktSystem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constraints: DMatrix<f64>,
    n: usize,
    m: usize,
    horizon: usize,
}

impl KktSystem {
    pub fn assemble(model: &LtvModel, derivs: &QuadDerivStack) -> Result<Self> {
        let (horizon, n, m) = check_shapes(model, derivs)?;
        let (qh, s, rh, qt) = checked_hessians(derivs)?;
        let sx = n * (horizon + 1);
        let su = m * horizon;
        let mut hessian = DMatrix::zeros(sx + su, sx + su);
        for t in 0..horizon {
            let (ix, iu) = (t * n, sx + t * m);
            hessian.view_mut((ix, ix), (n, n)).copy_from(&qh[t]);
            hessian.view_mut((ix, iu), (n, m)).copy_from(&s[t]);
            hessian.view_mut((iu, ix), (m, n)).copy_from(&s[t].transpose());
            hessian.view_mut((iu, iu), (m, m)).copy_from(&rh[t]);
        }
        hessian.view_mut((horizon * n, horizon * n), (n, n)).copy_from(&qt);
        Ok(Self {
            hessian,
            gradient: derivs.flat_gradient(),
            constraints: constraint_matrix(model, n, m),
            n,
            m,
            horizon,
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let s = self.hessian.nrows();
        let c = self.constraints.nrows();
        let mut k = DMatrix::zeros(s + c, s + c);
        k.view_mut((0, 0), (s, s)).copy_from(&self.hessian);
        k.view_mut((0, s), (s, c)).copy_from(&self.constraints.transpose());
        k.view_mut((s, 0), (c, s)).copy_from(&self.constraints);
        k
    }

    pub fn rhs(&self) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.hessian.nrows() + self.constraints.nrows());
        rhs.rows_mut(0, self.gradient.len()).copy_from(&(-&self.gradient));
        rhs
    }

    /// Returns `(ζ, λ)`.
    pub fn solve(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let k = self.matrix();
        let sol = k.lu().solve(&self.rhs()).ok_or(Error::SingularKkt)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularKkt);
        }
        let s = self.hessian.nrows();
        Ok((sol.rows(0, s).into_owned(), sol.rows(s, sol.len() - s).into_owned()))
    }

    /// `(‖∇²ℓ ζ + ∇ℓ + Hᵀλ‖∞, ‖Hζ‖∞)`.
    pub fn residuals(&self, zeta: &DVector<f64>, lambda: &DVector<f64>) -> (f64, f64) {
        let stationarity = &self.hessian * zeta + &self.gradient + self.constraints.transpose() * lambda;
        let feasibility = &self.constraints * zeta;
        (stationarity.amax(), feasibility.amax())
    }
}

/// `H = [H_x H_u]`: identity blocks on the diagonal of `H_x`, `−A_t` below
/// it, and `−B_t` in row block `t+1` of `H_u`.
pub fn constraint_matrix(model: &LtvModel, n: usize, m: usize) -> DMatrix<f64> {
    let horizon = model.horizon();
    let sx = n * (horizon + 1);
    let su = m * horizon;
    let mut h = DMatrix::zeros(sx, sx + su);
    h.view_mut((0, 0), (sx, sx)).fill_with_identity();
    for t in 0..horizon {
        h.view_mut(((t + 1) * n, t * n), (n, n)).copy_from(&(-&model.a[t]));
        h.view_mut(((t + 1) * n, sx + t * m), (n, m)).copy_from(&(-&model.b[t]));
    }
    h
}

/// Dense reference solver for the descent subproblem.
pub fn solve_descent_kkt(model: &LtvModel, derivs: &QuadDerivStack) -> Result<DescentDirection> {
    let system = KktSystem::assemble(model, derivs)?;
    let (zeta, _) = system.solve()?;
    let (n, m, horizon) = (system.n, system.m, system.horizon);
    let sx = n * (horizon + 1);
    let dx: Vec<_> = (0..=horizon).map(|t| zeta.rows(t * n, n).into_owned()).collect();
    let du: Vec<_> = (0..horizon).map(|t| zeta.rows(sx + t * m, m).into_owned()).collect();
    let dg = cost_differential(derivs, &dx, &du);
    Ok(DescentDirection {
        dx,
        du,
        gains: Vec::new(),
        feedforward: Vec::new(),
        dg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModelSource;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn scalar_instance(r0: f64) -> (LtvModel, QuadDerivStack) {
        let model = LtvModel::new(vec![m1(1.0)], vec![m1(1.0)], ModelSource::Exact).unwrap();
        let derivs = QuadDerivStack {
            q: vec![DVector::zeros(1), DVector::zeros(1)],
            r: vec![DVector::from_element(1, r0)],
            qh: vec![m1(1.0)],
            s: vec![m1(0.0)],
            rh: vec![m1(1.0)],
            qt: m1(1.0),
        };
        (model, derivs)
    }

    #[test]
    fn scalar_one_step_by_hand() {
        let (model, derivs) = scalar_instance(-1.0);
        for d in [solve_descent_riccati(&model, &derivs).unwrap(), solve_descent_kkt(&model, &derivs).unwrap()] {
            assert!((d.du[0][0] - 0.5).abs() < 1e-14);
            assert!((d.dx[1][0] - 0.5).abs() < 1e-14);
            assert_eq!(d.dx[0][0], 0.0);
            assert!((d.dg + 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_gradient_gives_zero_direction() {
        let (model, derivs) = scalar_instance(0.0);
        let d = solve_descent_riccati(&model, &derivs).unwrap();
        assert_eq!(d.du[0][0], 0.0);
        assert_eq!(d.dg, 0.0);
        let system = KktSystem::assemble(&model, &derivs).unwrap();
        let (zeta, lambda) = system.solve().unwrap();
        assert_eq!(zeta.amax(), 0.0);
        assert_eq!(lambda.amax(), 0.0);
    }

    #[test]
    fn indefinite_block_is_regularized_or_rejected() {
        let (model, mut derivs) = scalar_instance(-1.0);
        derivs.rh[0] = m1(0.0);
        // R = 0 is only semidefinite: the ε-shift rescues it
        assert!(solve_descent_riccati(&model, &derivs).is_ok());
        derivs.rh[0] = m1(-1.0);
        assert!(matches!(solve_descent_riccati(&model, &derivs), Err(Error::NotPositiveDefinite { t: 0 })));
    }

    #[test]
    fn constraint_matrix_structure() {
        let model = LtvModel::new(vec![m1(2.0), m1(3.0)], vec![m1(5.0), m1(7.0)], ModelSource::Exact).unwrap();
        let h = constraint_matrix(&model, 1, 1);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(3, 5, &[
            1.0, 0.0, 0.0, 0.0, 0.0,
            -2.0, 1.0, 0.0, -5.0, 0.0,
            0.0, -3.0, 1.0, 0.0, -7.0,
        ]);
        assert_eq!(h, expected);
    }

    #[test]
    fn mismatched_horizons_rejected() {
        let (model, mut derivs) = scalar_instance(1.0);
        derivs.q.push(DVector::zeros(1));
        derivs.r.push(DVector::zeros(1));
        assert!(matches!(solve_descent_riccati(&model, &derivs), Err(Error::Dimension(_))));
    }
}
