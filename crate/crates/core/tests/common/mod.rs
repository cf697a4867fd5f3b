#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use ddpronto::config::{pendubot_swing_up, Problem};
use ddpronto::cost::QuadDerivStack;
use ddpronto::dynamics::{LtiPlant, LtvModel, ModelSource};
use ddpronto::{JacobianOracle, Mode, PlantOracle};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const STEP_TIME: f64 = 9.0;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// `MMᵀ + εI`: symmetric positive definite.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Random LTV model and derivative stack with cross terms, for descent solver
/// comparisons.
pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize, horizon: usize) -> (LtvModel, QuadDerivStack) {
    let a = (0..horizon).map(|_| random_matrix(rng, n, n, 1.0)).collect();
    let b = (0..horizon).map(|_| random_matrix(rng, n, m, 1.0)).collect();
    let model = LtvModel::new(a, b, ModelSource::Exact).unwrap();
    let mut qh = Vec::new();
    let mut s = Vec::new();
    let mut rh = Vec::new();
    for _ in 0..horizon {
        let h = random_spd(rng, n + m);
        qh.push(h.view((0, 0), (n, n)).into_owned());
        s.push(h.view((0, n), (n, m)).into_owned());
        rh.push(h.view((n, n), (m, m)).into_owned());
    }
    let derivs = QuadDerivStack {
        q: (0..=horizon).map(|_| random_vector(rng, n, 1.0)).collect(),
        r: (0..horizon).map(|_| random_vector(rng, m, 1.0)).collect(),
        qh,
        s,
        rh,
        qt: random_spd(rng, n),
    };
    (model, derivs)
}

/// Random LTI plant with spectral radius below one.
pub fn random_stable_lti(rng: &mut impl Rng, n: usize, m: usize) -> LtiPlant {
    let a = random_matrix(rng, n, n, 1.0);
    let radius = a.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let a = if radius >= 0.9 { a * (0.9 / radius) } else { a };
    LtiPlant::new(a, random_matrix(rng, n, m, 1.0)).unwrap()
}

pub fn pendubot(mode: Mode) -> Problem {
    pendubot_swing_up(mode, STEP_TIME).build().unwrap()
}

/// Plant wrapper counting every oracle call.
pub struct CountingPlant<P> {
    pub inner: P,
    pub steps: AtomicUsize,
    pub jacobians: AtomicUsize,
}

impl<P> CountingPlant<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            steps: AtomicUsize::new(0),
            jacobians: AtomicUsize::new(0),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps.load(Ordering::SeqCst)
    }

    pub fn jacobian_calls(&self) -> usize {
        self.jacobians.load(Ordering::SeqCst)
    }
}

impl<P: PlantOracle> PlantOracle for CountingPlant<P> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.steps.fetch_add(1, Ordering::SeqCst);
        self.inner.step(x, u)
    }
}

impl<P: JacobianOracle> JacobianOracle for CountingPlant<P> {
    fn exact_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        self.jacobians.fetch_add(1, Ordering::SeqCst);
        self.inner.exact_jacobians(x, u)
    }
}

/// Spearman rank correlation (no tie correction; inputs are distinct).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
