//! Plant models, rollouts and the trajectory/curve data model.
//!
//! The optimizer only ever sees a [`PlantOracle`], which can simulate one
//! step of the plant and nothing else. Jacobian access lives on the separate
//! [`JacobianOracle`] trait so that the data-driven loop cannot reach it.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// States whose norm exceeds this bound abort a rollout.
pub const BLOWUP_BOUND: f64 = 1e6;

/// Central-difference step used by [`JacobianMode::FiniteDifference`].
pub const FD_STEP: f64 = 1e-5;

/// Restricted plant interface: simulation only.
pub trait PlantOracle: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// One step of the discrete-time dynamics `x⁺ = f(x, u)`.
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
}

/// Privileged plant interface used by model-based runs and by tests.
pub trait JacobianOracle: PlantOracle {
    /// Analytic `(∂f/∂x, ∂f/∂u)` at `(x, u)`, or `None` when the plant has no
    /// closed-form derivatives.
    fn exact_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)>;
}

impl<P: PlantOracle + ?Sized> PlantOracle for &P {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).step(x, u)
    }
}

impl<P: JacobianOracle + ?Sized> JacobianOracle for &P {
    fn exact_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        (**self).exact_jacobians(x, u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    Exact,
    FiniteDifference,
}

/// Where the matrices of an [`LtvModel`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSource {
    Exact,
    FiniteDifference,
    Identified,
}

/// Time-varying linearization `Δx_{t+1} = A_t Δx_t + B_t Δu_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtvModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub source: ModelSource,
}

impl LtvModel {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>, source: ModelSource) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!("{} A matrices but {} B matrices", a.len(), b.len())));
        }
        if let Some(a0) = a.first() {
            let n = a0.nrows();
            let m = b[0].ncols();
            for (t, (at, bt)) in a.iter().zip(&b).enumerate() {
                if at.shape() != (n, n) || bt.shape() != (n, m) {
                    return Err(Error::Dimension(format!(
                        "model step {t}: A is {:?}, B is {:?}, expected ({n},{n}) and ({n},{m})",
                        at.shape(),
                        bt.shape()
                    )));
                }
            }
        }
        Ok(Self { a, b, source })
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    /// Largest spectral-norm error of `[A_t − A'_t, B_t − B'_t]` and its mean over `t`.
    pub fn error_against(&self, other: &LtvModel) -> (f64, f64) {
        let mut max = 0.0f64;
        let mut sum = 0.0;
        for t in 0..self.horizon() {
            let da = &self.a[t] - &other.a[t];
            let db = &self.b[t] - &other.b[t];
            let e = spectral_norm(&hstack(&da, &db));
            max = max.max(e);
            sum += e;
        }
        (max, sum / self.horizon().max(1) as f64)
    }
}

pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// An arbitrary state/input stack pair, not necessarily dynamically feasible.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub alpha: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    pub x_init: DVector<f64>,
}

impl Curve {
    pub fn new(alpha: Vec<DVector<f64>>, mu: Vec<DVector<f64>>, x_init: DVector<f64>) -> Result<Self> {
        let curve = Self { alpha, mu, x_init };
        curve.validate()?;
        Ok(curve)
    }

    fn validate(&self) -> Result<()> {
        let n = self.x_init.len();
        if n == 0 {
            return Err(Error::Dimension("state dimension must be at least 1".into()));
        }
        if self.alpha.len() != self.mu.len() + 1 {
            return Err(Error::Dimension(format!(
                "state stack has {} entries, input stack has {}; expected T+1 and T",
                self.alpha.len(),
                self.mu.len()
            )));
        }
        if self.alpha.iter().any(|a| a.len() != n) {
            return Err(Error::Dimension(format!("state entries must have length {n}")));
        }
        if let Some(m) = self.mu.first().map(|u| u.len()) {
            if m == 0 || self.mu.iter().any(|u| u.len() != m) {
                return Err(Error::Dimension("input entries must share a nonzero length".into()));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.mu.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x_init.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mu.first().map_or(0, |u| u.len())
    }

    /// Euclidean distance between the stacked `(α, µ)` vectors.
    pub fn distance(&self, other: &Curve) -> f64 {
        let dx: f64 = self.alpha.iter().zip(&other.alpha).map(|(a, b)| (a - b).norm_squared()).sum();
        let du: f64 = self.mu.iter().zip(&other.mu).map(|(a, b)| (a - b).norm_squared()).sum();
        (dx + du).sqrt()
    }
}

/// A state/input stack pair satisfying `x_{t+1} = f(x_t, u_t)`, `x_0 = x_init`.
///
/// Only produced by rollouts, or by [`Trajectory::from_curve`] after a
/// feasibility check.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    curve: Curve,
}

impl Trajectory {
    /// Accepts `curve` as a trajectory if its residual is within `feas_tol`.
    pub fn from_curve(curve: Curve, plant: &impl PlantOracle, feas_tol: f64) -> Result<Self> {
        check_plant_dims(&curve, plant)?;
        let r = residual(&curve, plant);
        if r > feas_tol {
            return Err(Error::invalid("trajectory", format!("residual {r:e} exceeds {feas_tol:e}")));
        }
        Ok(Self { curve })
    }

    /// Constant trajectory at an equilibrium `(x_eq, u_eq)`, checked to `feas_tol`.
    pub fn constant(
        x_eq: DVector<f64>,
        u_eq: DVector<f64>,
        horizon: usize,
        plant: &impl PlantOracle,
        feas_tol: f64,
    ) -> Result<Self> {
        let curve = Curve::new(vec![x_eq.clone(); horizon + 1], vec![u_eq; horizon], x_eq)?;
        Self::from_curve(curve, plant, feas_tol)
    }

    pub fn x(&self) -> &[DVector<f64>] {
        &self.curve.alpha
    }

    pub fn u(&self) -> &[DVector<f64>] {
        &self.curve.mu
    }

    pub fn x_init(&self) -> &DVector<f64> {
        &self.curve.x_init
    }

    pub fn horizon(&self) -> usize {
        self.curve.horizon()
    }

    pub fn state_dim(&self) -> usize {
        self.curve.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.curve.input_dim()
    }

    pub fn as_curve(&self) -> &Curve {
        &self.curve
    }

    pub fn into_curve(self) -> Curve {
        self.curve
    }

    pub fn distance(&self, other: &Trajectory) -> f64 {
        self.curve.distance(&other.curve)
    }
}

fn check_plant_dims(curve: &Curve, plant: &impl PlantOracle) -> Result<()> {
    if curve.state_dim() != plant.state_dim() || (curve.horizon() > 0 && curve.input_dim() != plant.input_dim()) {
        return Err(Error::Dimension(format!(
            "curve has n={}, m={}; plant has n={}, m={}",
            curve.state_dim(),
            curve.input_dim(),
            plant.state_dim(),
            plant.input_dim()
        )));
    }
    Ok(())
}

/// Rolls out `x_{t+1} = f(x_t, u_t)` with inputs chosen by `control(t, x_t)`.
///
/// Fails with [`Error::Divergence`] as soon as a state leaves the
/// [`BLOWUP_BOUND`] ball or becomes non-finite.
pub fn rollout_closed_loop<P, F>(
    x0: DVector<f64>,
    x_init: DVector<f64>,
    horizon: usize,
    plant: &P,
    mut control: F,
) -> Result<Trajectory>
where
    P: PlantOracle + ?Sized,
    F: FnMut(usize, &DVector<f64>) -> DVector<f64>,
{
    if x0.len() != plant.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, plant expects {}",
            x0.len(),
            plant.state_dim()
        )));
    }
    let mut xs = Vec::with_capacity(horizon + 1);
    let mut us = Vec::with_capacity(horizon);
    xs.push(x0);
    for t in 0..horizon {
        let u = control(t, &xs[t]);
        if u.len() != plant.input_dim() {
            return Err(Error::Dimension(format!("input at step {t} has length {}", u.len())));
        }
        let next = plant.step(&xs[t], &u);
        let norm = next.norm();
        if !norm.is_finite() || norm > BLOWUP_BOUND {
            return Err(Error::Divergence { t: t + 1, norm });
        }
        us.push(u);
        xs.push(next);
    }
    Ok(Trajectory {
        curve: Curve {
            alpha: xs,
            mu: us,
            x_init,
        },
    })
}

pub fn rollout_open_loop(x_init: &DVector<f64>, inputs: &[DVector<f64>], plant: &impl PlantOracle) -> Result<Trajectory> {
    rollout_closed_loop(x_init.clone(), x_init.clone(), inputs.len(), plant, |t, _| inputs[t].clone())
}

/// Largest dynamics defect of `candidate`, including the initial-condition defect.
pub fn residual(candidate: &Curve, plant: &impl PlantOracle) -> f64 {
    let mut worst = (&candidate.alpha[0] - &candidate.x_init).norm();
    for t in 0..candidate.horizon() {
        let next = plant.step(&candidate.alpha[t], &candidate.mu[t]);
        worst = worst.max((&candidate.alpha[t + 1] - next).norm());
    }
    worst
}

/// Linearization of the plant along `trajectory`. Test-oracle and
/// model-based use only.
pub fn jacobians(trajectory: &Trajectory, plant: &impl JacobianOracle, mode: JacobianMode) -> Result<LtvModel> {
    jacobians_with_step(trajectory, plant, mode, FD_STEP)
}

pub fn jacobians_with_step(
    trajectory: &Trajectory,
    plant: &impl JacobianOracle,
    mode: JacobianMode,
    h_fd: f64,
) -> Result<LtvModel> {
    let horizon = trajectory.horizon();
    let mut a = Vec::with_capacity(horizon);
    let mut b = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let (x, u) = (&trajectory.x()[t], &trajectory.u()[t]);
        let (at, bt) = match mode {
            JacobianMode::Exact => plant.exact_jacobians(x, u).ok_or(Error::JacobianUnavailable(mode))?,
            JacobianMode::FiniteDifference => central_difference(plant, x, u, h_fd),
        };
        a.push(at);
        b.push(bt);
    }
    let source = match mode {
        JacobianMode::Exact => ModelSource::Exact,
        JacobianMode::FiniteDifference => ModelSource::FiniteDifference,
    };
    LtvModel::new(a, b, source)
}

fn central_difference(
    plant: &impl PlantOracle,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.len();
    let m = u.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        a.set_column(j, &((plant.step(&xp, u) - plant.step(&xm, u)) / (2.0 * h)));
    }
    for j in 0..m {
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        b.set_column(j, &((plant.step(x, &up) - plant.step(x, &um)) / (2.0 * h)));
    }
    (a, b)
}

/// Physical parameters of the two-link pendubot, actuated at the first joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendubotParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub d1: f64,
    pub d2: f64,
    pub i1zz: f64,
    pub i2zz: f64,
    pub f1: f64,
    pub f2: f64,
    pub g: f64,
    pub dt: f64,
}

impl Default for PendubotParams {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            d1: 0.5,
            d2: 0.5,
            i1zz: 0.33,
            i2zz: 0.33,
            f1: 0.1,
            f2: 0.1,
            g: 9.81,
            dt: 0.01,
        }
    }
}

impl PendubotParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("d1", self.d1),
            ("d2", self.d2),
            ("i1zz", self.i1zz),
            ("i2zz", self.i2zz),
            ("dt", self.dt),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(field, format!("must be strictly positive, got {value}")));
            }
        }
        for (field, value) in [("f1", self.f1), ("f2", self.f2), ("g", self.g)] {
            if !value.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        Ok(())
    }

    /// Lumped coefficients `a1..a5` of the manipulator equation.
    pub fn coefficients(&self) -> [f64; 5] {
        [
            self.i1zz + self.m1 * self.d1 * self.d1 + self.m2 * self.l1 * self.l1,
            self.i2zz + self.m2 * self.d2 * self.d2,
            self.m2 * self.l1 * self.d2,
            self.g * (self.m1 * self.d1 + self.m2 * self.l1),
            self.g * self.m2 * self.d2,
        ]
    }

    pub fn mass_matrix(&self, q2: f64) -> Matrix2<f64> {
        let [a1, a2, a3, _, _] = self.coefficients();
        let c2 = q2.cos();
        Matrix2::new(a1 + a2 + 2.0 * a3 * c2, a2 + a3 * c2, a2 + a3 * c2, a2)
    }
}

fn inverse2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
}

/// Continuous-time pendubot vector field for state `(q1, q2, q̇1, q̇2)`.
pub fn pendubot_derivative(state: &[f64; 4], u: f64, params: &PendubotParams) -> [f64; 4] {
    let qdd = pendubot_accel(state, u, params);
    [state[2], state[3], qdd[0], qdd[1]]
}

fn pendubot_accel(state: &[f64; 4], u: f64, params: &PendubotParams) -> Vector2<f64> {
    let [q1, q2, w1, w2] = *state;
    let [_, _, a3, a4, a5] = params.coefficients();
    let s2 = q2.sin();
    // C(q, q̇) q̇
    let coriolis = Vector2::new(-a3 * s2 * w2 * w1 - a3 * s2 * (w1 + w2) * w2, a3 * s2 * w1 * w1);
    let friction = Vector2::new(params.f1 * w1, params.f2 * w2);
    let gravity = Vector2::new(a4 * q1.cos() + a5 * (q1 + q2).cos(), a5 * (q1 + q2).cos());
    let rhs = Vector2::new(u, 0.0) - coriolis - friction - gravity;
    inverse2(&params.mass_matrix(q2)) * rhs
}

/// Forward-Euler step `x⁺ = x + dt·ẋ`.
pub fn pendubot_step(state: &[f64; 4], u: f64, params: &PendubotParams) -> [f64; 4] {
    let d = pendubot_derivative(state, u, params);
    std::array::from_fn(|i| state[i] + params.dt * d[i])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pendubot {
    params: PendubotParams,
}

impl Pendubot {
    pub fn new(params: PendubotParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &PendubotParams {
        &self.params
    }

    /// Hanging-down equilibrium `(−π/2, 0, 0, 0)`.
    pub fn down_equilibrium() -> DVector<f64> {
        DVector::from_vec(vec![-std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0])
    }

    /// Upright equilibrium `(π/2, 0, 0, 0)`.
    pub fn up_equilibrium() -> DVector<f64> {
        DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0])
    }

    /// Jacobian of the continuous vector field, `(∂ẋ/∂x, ∂ẋ/∂u)`.
    pub fn continuous_jacobians(&self, state: &[f64; 4], u: f64) -> (nalgebra::Matrix4<f64>, nalgebra::Vector4<f64>) {
        let p = &self.params;
        let [q1, q2, w1, w2] = *state;
        let [_, _, a3, a4, a5] = p.coefficients();
        let (s2, c2) = q2.sin_cos();
        let s1 = q1.sin();
        let s12 = (q1 + q2).sin();
        let minv = inverse2(&p.mass_matrix(q2));
        let qdd = pendubot_accel(state, u, p);

        // ∂rhs/∂(q1, q2, w1, w2), rhs = [u,0] − C q̇ − F q̇ − G
        let d_coriolis_q2 = Vector2::new(a3 * c2 * (-w2 * w1 - (w1 + w2) * w2), a3 * c2 * w1 * w1);
        let d_coriolis_w1 = Vector2::new(-2.0 * a3 * s2 * w2, 2.0 * a3 * s2 * w1);
        let d_coriolis_w2 = Vector2::new(-2.0 * a3 * s2 * (w1 + w2), 0.0);
        let d_gravity_q1 = Vector2::new(-a4 * s1 - a5 * s12, -a5 * s12);
        let d_gravity_q2 = Vector2::new(-a5 * s12, -a5 * s12);
        let d_mass_q2 = Matrix2::new(-2.0 * a3 * s2, -a3 * s2, -a3 * s2, 0.0);

        let d_rhs = [
            -d_gravity_q1,
            -d_coriolis_q2 - d_gravity_q2,
            -d_coriolis_w1 - Vector2::new(p.f1, 0.0),
            -d_coriolis_w2 - Vector2::new(0.0, p.f2),
        ];
        let mut jx = nalgebra::Matrix4::zeros();
        jx[(0, 2)] = 1.0;
        jx[(1, 3)] = 1.0;
        for (j, dr) in d_rhs.iter().enumerate() {
            // q̈ = M⁻¹ rhs, so ∂q̈ = M⁻¹ (∂rhs − ∂M q̈)
            let dm = if j == 1 { d_mass_q2 * qdd } else { Vector2::zeros() };
            let col = minv * (dr - dm);
            jx[(2, j)] = col[0];
            jx[(3, j)] = col[1];
        }
        let du = minv * Vector2::new(1.0, 0.0);
        (jx, nalgebra::Vector4::new(0.0, 0.0, du[0], du[1]))
    }
}

fn as4(x: &DVector<f64>) -> [f64; 4] {
    [x[0], x[1], x[2], x[3]]
}

impl PlantOracle for Pendubot {
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&pendubot_step(&as4(x), u[0], &self.params))
    }
}

impl JacobianOracle for Pendubot {
    fn exact_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let (jx, ju) = self.continuous_jacobians(&as4(x), u[0]);
        let dt = self.params.dt;
        let a = DMatrix::identity(4, 4) + DMatrix::from_iterator(4, 4, jx.iter().cloned()) * dt;
        let b = DMatrix::from_iterator(4, 1, ju.iter().cloned()) * dt;
        Some((a, b))
    }
}

/// Linear time-invariant plant `x⁺ = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!("A is {:?}, B is {:?}", a.shape(), b.shape())));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl PlantOracle for LtiPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

impl JacobianOracle for LtiPlant {
    fn exact_jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.a.clone(), self.b.clone()))
    }
}

/// Scalar plant `x⁺ = x + dt(−x³ + u)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicPlant {
    pub dt: f64,
}

impl CubicPlant {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be strictly positive, got {dt}")));
        }
        Ok(Self { dt })
    }
}

impl PlantOracle for CubicPlant {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let x0 = x[0];
        DVector::from_element(1, x0 + self.dt * (-x0 * x0 * x0 + u[0]))
    }
}

impl JacobianOracle for CubicPlant {
    fn exact_jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((
            DMatrix::from_element(1, 1, 1.0 - 3.0 * self.dt * x[0] * x[0]),
            DMatrix::from_element(1, 1, self.dt),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn pendubot() -> Pendubot {
        Pendubot::new(PendubotParams::default()).unwrap()
    }

    #[test]
    fn equilibria_have_zero_derivative() {
        let p = PendubotParams::default();
        for q1 in [-FRAC_PI_2, FRAC_PI_2] {
            let d = pendubot_derivative(&[q1, 0.0, 0.0, 0.0], 0.0, &p);
            for v in d {
                assert!(v.abs() < 1e-14, "{d:?}");
            }
        }
    }

    #[test]
    fn table_coefficients() {
        let [a1, a2, a3, a4, a5] = PendubotParams::default().coefficients();
        assert!((a1 - 1.58).abs() < 1e-12);
        assert!((a2 - 0.58).abs() < 1e-12);
        assert!((a3 - 0.5).abs() < 1e-12);
        assert!((a4 - 1.5 * 9.81).abs() < 1e-12);
        assert!((a5 - 0.5 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn horizontal_rest_acceleration() {
        // -M(0)^{-1} G(0), solved by hand with the 2x2 closed-form inverse
        let expected = [-9.126950780312125, 8.5381152460984406];
        let d = pendubot_derivative(&[0.0; 4], 0.0, &PendubotParams::default());
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
        assert!((d[2] - expected[0]).abs() < 1e-12);
        assert!((d[3] - expected[1]).abs() < 1e-12);

        let s = pendubot_step(&[0.0; 4], 0.0, &PendubotParams::default());
        assert!((s[2] - 0.01 * expected[0]).abs() < 1e-14);
        assert!((s[3] - 0.01 * expected[1]).abs() < 1e-14);
    }

    #[test]
    fn zero_dt_is_rejected() {
        let params = PendubotParams { dt: 0.0, ..Default::default() };
        match Pendubot::new(params) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "dt"),
            other => panic!("expected dt validation error, got {other:?}"),
        }
        assert!(Pendubot::new(PendubotParams { m2: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn equilibrium_step_is_fixed() {
        let plant = pendubot();
        let x = Pendubot::down_equilibrium();
        let next = plant.step(&x, &DVector::zeros(1));
        assert!((next - x).norm() < 1e-15);
    }

    #[test]
    fn mass_matrix_positive_definite_on_grid() {
        let p = PendubotParams::default();
        for i in 0..=64 {
            let q2 = -2.0 * std::f64::consts::PI + 4.0 * std::f64::consts::PI * i as f64 / 64.0;
            let m = p.mass_matrix(q2);
            assert_eq!(m[(0, 1)], m[(1, 0)]);
            let eig = m.symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "q2={q2} eig={eig}");
        }
    }

    #[test]
    fn lti_rollout_is_geometric() {
        let plant = LtiPlant::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let traj = rollout_open_loop(&DVector::from_element(1, 1.0), &vec![DVector::zeros(1); 3], &plant).unwrap();
        let xs: Vec<f64> = traj.x().iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(residual(traj.as_curve(), &plant), 0.0);
    }

    #[test]
    fn pendubot_rollout_matches_repeated_step() {
        let plant = pendubot();
        let x0 = Pendubot::down_equilibrium();
        let inputs = vec![DVector::from_element(1, 0.1); 10];
        let traj = rollout_open_loop(&x0, &inputs, &plant).unwrap();
        let mut s = as4(&x0);
        for t in 0..10 {
            s = pendubot_step(&s, 0.1, plant.params());
            assert_eq!(traj.x()[t + 1].as_slice(), &s[..]);
        }
        assert_eq!(residual(traj.as_curve(), &plant), 0.0);
    }

    #[test]
    fn constant_equilibrium_rollout() {
        let plant = pendubot();
        let x0 = Pendubot::down_equilibrium();
        let traj = rollout_open_loop(&x0, &vec![DVector::zeros(1); 20], &plant).unwrap();
        for x in traj.x() {
            assert!((x - &x0).norm() < 1e-14);
        }
    }

    #[test]
    fn perturbed_entry_shows_in_residual() {
        let plant = pendubot();
        let traj = Trajectory::constant(Pendubot::down_equilibrium(), DVector::zeros(1), 10, &plant, 1e-12).unwrap();
        let mut curve = traj.into_curve();
        curve.alpha[5][2] += 1e-3;
        assert!(residual(&curve, &plant) >= 1e-3);
        assert!(Trajectory::from_curve(curve, &plant, 1e-9).is_err());
    }

    #[test]
    fn residual_of_random_lti_curve() {
        let plant = LtiPlant::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let alpha = [0.3, 0.9, -0.2, 0.4];
        let mu = [0.1, -0.5, 0.7];
        let curve = Curve::new(
            alpha.iter().map(|&a| DVector::from_element(1, a)).collect(),
            mu.iter().map(|&u| DVector::from_element(1, u)).collect(),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        // defects: |0.3-0|, |0.9-(0.15+0.2)|, |-0.2-(0.45-1.0)|, |0.4-(-0.1+1.4)|
        let expected = [0.3f64, 0.55, 0.35, 0.9].iter().cloned().fold(0.0, f64::max);
        assert!((residual(&curve, &plant) - expected).abs() < 1e-15);
    }

    #[test]
    fn divergence_is_reported() {
        let plant = LtiPlant::new(DMatrix::from_element(1, 1, 10.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let err = rollout_open_loop(&DVector::from_element(1, 1.0), &vec![DVector::zeros(1); 20], &plant).unwrap_err();
        assert!(matches!(err, Error::Divergence { t: 7, .. }), "{err:?}");
    }

    #[test]
    fn lti_jacobians_are_the_plant_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let plant = LtiPlant::new(a.clone(), b.clone()).unwrap();
        let traj = rollout_open_loop(
            &DVector::from_vec(vec![1.0, -1.0]),
            &[0.3, -0.2, 0.5].map(|u| DVector::from_element(1, u)),
            &plant,
        )
        .unwrap();
        for mode in [JacobianMode::Exact, JacobianMode::FiniteDifference] {
            let model = jacobians(&traj, &plant, mode).unwrap();
            for t in 0..3 {
                assert!((&model.a[t] - &a).amax() < 1e-9);
                assert!((&model.b[t] - &b).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn pendubot_exact_matches_central_difference() {
        let plant = pendubot();
        let traj = Trajectory::constant(Pendubot::down_equilibrium(), DVector::zeros(1), 3, &plant, 1e-12).unwrap();
        let exact = jacobians(&traj, &plant, JacobianMode::Exact).unwrap();
        let fd = jacobians(&traj, &plant, JacobianMode::FiniteDifference).unwrap();
        for t in 0..3 {
            assert!((&exact.a[t] - &fd.a[t]).amax() <= 1e-6);
            assert!((&exact.b[t] - &fd.b[t]).amax() <= 1e-6);
        }
    }

    #[test]
    fn euler_diagonal_structure() {
        let plant = pendubot();
        let s = [0.3, -0.7, 1.1, -0.4];
        let x = DVector::from_row_slice(&s);
        let (a, _) = plant.exact_jacobians(&x, &DVector::from_element(1, 0.2)).unwrap();
        let (jx, _) = plant.continuous_jacobians(&s, 0.2);
        for i in 0..4 {
            assert!((a[(i, i)] - (1.0 + 0.01 * jx[(i, i)])).abs() < 1e-15);
        }
    }
}
