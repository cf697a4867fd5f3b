//! Tracking controller `π` and the projection operator from curves to trajectories.

use nalgebra::{DMatrix, DVector};

use crate::cost::{is_spd, symmetrize};
use crate::dynamics::{rollout_closed_loop, Curve, LtvModel, PlantOracle, Trajectory};
use crate::error::{Error, Result};

/// Time-varying linear tracking law `u = µ_t + K_t (α_t − x)`.
///
/// Whatever the gains, `π(α, µ, α, t) = µ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    gains: Vec<DMatrix<f64>>,
}

impl FeedbackPolicy {
    pub fn new(gains: Vec<DMatrix<f64>>) -> Result<Self> {
        if let Some(k0) = gains.first() {
            if gains.iter().any(|k| k.shape() != k0.shape()) {
                return Err(Error::Dimension("policy gains must share one shape".into()));
            }
        }
        Ok(Self { gains })
    }

    /// All-zero gains: the experiment bootstrap policy.
    pub fn zero(horizon: usize, n: usize, m: usize) -> Self {
        Self {
            gains: vec![DMatrix::zeros(m, n); horizon],
        }
    }

    pub fn gains(&self) -> &[DMatrix<f64>] {
        &self.gains
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn control(&self, alpha: &DVector<f64>, mu: &DVector<f64>, x: &DVector<f64>, t: usize) -> DVector<f64> {
        mu + &self.gains[t] * (alpha - x)
    }
}

/// Finite-horizon LQR gains for `(A_t, B_t)` with stage weights `(reg_q, reg_r)`
/// and terminal weight `reg_q`.
pub fn synthesize_policy(model: &LtvModel, reg_q: &DMatrix<f64>, reg_r: &DMatrix<f64>) -> Result<FeedbackPolicy> {
    let n = model.state_dim();
    let m = model.input_dim();
    let horizon = model.horizon();
    if horizon > 0 && (reg_q.shape() != (n, n) || reg_r.shape() != (m, m)) {
        return Err(Error::Dimension(format!(
            "regulator weights {:?}, {:?} do not match model (n={n}, m={m})",
            reg_q.shape(),
            reg_r.shape()
        )));
    }
    if !is_spd(reg_q) || !is_spd(reg_r) {
        return Err(Error::invalid("regulator weights", "must be symmetric positive definite"));
    }
    let mut gains = vec![DMatrix::zeros(m, n); horizon];
    let mut p = reg_q.clone();
    for t in (0..horizon).rev() {
        let (a, b) = (&model.a[t], &model.b[t]);
        let pb = &p * b;
        let gram = reg_r + b.transpose() * &pb;
        let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite { t })?;
        let k = chol.solve(&(pb.transpose() * a));
        p = symmetrize(reg_q + a.transpose() * &p * (a - b * &k));
        gains[t] = k;
    }
    Ok(FeedbackPolicy { gains })
}

/// Closed-loop rollout of the plant tracking `curve`:
/// `u_t = π(α_t, µ_t, x_t, t)`, `x_{t+1} = f(x_t, u_t)`, `x_0 = x_init`.
pub fn project(curve: &Curve, policy: &FeedbackPolicy, plant: &impl PlantOracle) -> Result<Trajectory> {
    if policy.horizon() != curve.horizon() {
        return Err(Error::Dimension(format!(
            "policy horizon {} differs from curve horizon {}",
            policy.horizon(),
            curve.horizon()
        )));
    }
    if curve.state_dim() != plant.state_dim() || curve.input_dim() != plant.input_dim() {
        return Err(Error::Dimension("curve does not match the plant dimensions".into()));
    }
    rollout_closed_loop(curve.x_init.clone(), curve.x_init.clone(), curve.horizon(), plant, |t, x| {
        policy.control(&curve.alpha[t], &curve.mu[t], x, t)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{residual, LtiPlant, ModelSource};

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn v1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn one_step_riccati_gain() {
        let model = LtvModel::new(vec![m1(1.0)], vec![m1(1.0)], ModelSource::Exact).unwrap();
        let policy = synthesize_policy(&model, &m1(1.0), &m1(1.0)).unwrap();
        assert!((policy.gains()[0][(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn anchoring_identity() {
        let policy = FeedbackPolicy::new(vec![DMatrix::from_row_slice(1, 2, &[3.0, -7.0])]).unwrap();
        let alpha = DVector::from_vec(vec![0.4, -1.2]);
        let mu = v1(2.5);
        assert_eq!(policy.control(&alpha, &mu, &alpha, 0), mu);
    }

    #[test]
    fn hand_recursion_three_steps() {
        // x⁺ = 0.5x + u, K = 2, α ≡ 1, µ ≡ 0, x0 = 0
        // u0 = 2(1−0) = 2, x1 = 2; u1 = 2(1−2) = −2, x2 = −1; u2 = 2(1+1) = 4, x3 = 3.5
        let plant = LtiPlant::new(m1(0.5), m1(1.0)).unwrap();
        let policy = FeedbackPolicy::new(vec![m1(2.0); 3]).unwrap();
        let curve = Curve::new(vec![v1(1.0); 4], vec![v1(0.0); 3], v1(0.0)).unwrap();
        let traj = project(&curve, &policy, &plant).unwrap();
        let xs: Vec<f64> = traj.x().iter().map(|x| x[0]).collect();
        let us: Vec<f64> = traj.u().iter().map(|u| u[0]).collect();
        assert_eq!(xs, vec![0.0, 2.0, -1.0, 3.5]);
        assert_eq!(us, vec![2.0, -2.0, 4.0]);
        assert_eq!(residual(traj.as_curve(), &plant), 0.0);
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let plant = LtiPlant::new(m1(0.5), m1(1.0)).unwrap();
        let policy = FeedbackPolicy::zero(2, 1, 1);
        let curve = Curve::new(vec![v1(1.0); 4], vec![v1(0.0); 3], v1(0.0)).unwrap();
        assert!(matches!(project(&curve, &policy, &plant), Err(Error::Dimension(_))));
    }

    #[test]
    fn indefinite_regulator_rejected() {
        let model = LtvModel::new(vec![m1(1.0)], vec![m1(1.0)], ModelSource::Exact).unwrap();
        assert!(synthesize_policy(&model, &m1(-1.0), &m1(1.0)).is_err());
    }
}
