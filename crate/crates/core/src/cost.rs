//! Quadratic tracking cost, its derivative stacks, and the DARE terminal weight.
//!
//! The stage cost is `(x−x*)ᵀQ(x−x*) + (u−u*)ᵀR(u−u*)` without a ½, so the
//! gradients and Hessians carried by [`QuadDerivStack`] include the factor 2.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Curve;
use crate::error::{Error, Result};

pub const DARE_TOL: f64 = 1e-10;
pub const DARE_MAX_ITERS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    q_terminal: DMatrix<f64>,
    x_ref: Vec<DVector<f64>>,
    u_ref: Vec<DVector<f64>>,
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    m.is_square() && (m - m.transpose()).amax() <= 1e-12 * scale
}

pub(crate) fn is_spd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m) && m.clone().cholesky().is_some()
}

impl TrackingCost {
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_terminal: DMatrix<f64>,
        x_ref: Vec<DVector<f64>>,
        u_ref: Vec<DVector<f64>>,
    ) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r), ("Q_T", &q_terminal)] {
            if !is_spd(m) {
                return Err(Error::invalid(name, "must be symmetric positive definite"));
            }
        }
        let n = q.nrows();
        let m = r.nrows();
        if q_terminal.nrows() != n {
            return Err(Error::Dimension(format!("Q is {n}x{n} but Q_T is {:?}", q_terminal.shape())));
        }
        if x_ref.len() != u_ref.len() + 1 {
            return Err(Error::Dimension(format!(
                "reference has {} states and {} inputs; expected T+1 and T",
                x_ref.len(),
                u_ref.len()
            )));
        }
        if x_ref.iter().any(|x| x.len() != n) || u_ref.iter().any(|u| u.len() != m) {
            return Err(Error::Dimension("reference entries do not match the weight sizes".into()));
        }
        Ok(Self {
            q,
            r,
            q_terminal,
            x_ref,
            u_ref,
        })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn q_terminal(&self) -> &DMatrix<f64> {
        &self.q_terminal
    }

    pub fn x_ref(&self) -> &[DVector<f64>] {
        &self.x_ref
    }

    pub fn u_ref(&self) -> &[DVector<f64>] {
        &self.u_ref
    }

    pub fn horizon(&self) -> usize {
        self.u_ref.len()
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    fn check(&self, curve: &Curve) -> Result<()> {
        if curve.horizon() != self.horizon() || curve.state_dim() != self.state_dim() || curve.input_dim() != self.input_dim()
        {
            return Err(Error::Dimension(format!(
                "curve (T={}, n={}, m={}) does not match cost (T={}, n={}, m={})",
                curve.horizon(),
                curve.state_dim(),
                curve.input_dim(),
                self.horizon(),
                self.state_dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Sum of stage costs plus the terminal cost.
    pub fn total(&self, curve: &Curve) -> Result<f64> {
        self.check(curve)?;
        let horizon = self.horizon();
        let mut total = 0.0;
        for t in 0..horizon {
            total += quad_form(&self.q, &curve.alpha[t], &self.x_ref[t]) + quad_form(&self.r, &curve.mu[t], &self.u_ref[t]);
        }
        total += quad_form(&self.q_terminal, &curve.alpha[horizon], &self.x_ref[horizon]);
        Ok(total)
    }

    /// Gradients and Hessian blocks of the cost at `curve`.
    pub fn derivatives(&self, curve: &Curve) -> Result<QuadDerivStack> {
        self.check(curve)?;
        let horizon = self.horizon();
        let mut q = Vec::with_capacity(horizon + 1);
        let mut r = Vec::with_capacity(horizon);
        for t in 0..horizon {
            q.push(2.0 * &self.q * (&curve.alpha[t] - &self.x_ref[t]));
            r.push(2.0 * &self.r * (&curve.mu[t] - &self.u_ref[t]));
        }
        q.push(2.0 * &self.q_terminal * (&curve.alpha[horizon] - &self.x_ref[horizon]));
        Ok(QuadDerivStack {
            q,
            r,
            qh: vec![2.0 * &self.q; horizon],
            s: vec![DMatrix::zeros(self.state_dim(), self.input_dim()); horizon],
            rh: vec![2.0 * &self.r; horizon],
            qt: 2.0 * &self.q_terminal,
        })
    }
}

/// `(v − c)ᵀ W (v − c)` without temporaries.
fn quad_form(w: &DMatrix<f64>, v: &DVector<f64>, c: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..v.len() {
        let dj = v[j] - c[j];
        if dj == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for i in 0..v.len() {
            col += w[(i, j)] * (v[i] - c[i]);
        }
        acc += col * dj;
    }
    acc
}

pub fn total_cost(curve: &Curve, cost: &TrackingCost) -> Result<f64> {
    cost.total(curve)
}

pub fn derivative_stack(curve: &Curve, cost: &TrackingCost) -> Result<QuadDerivStack> {
    cost.derivatives(curve)
}

/// Per-step cost gradients `q_t, r_t` (with `q_T` last) and Hessian blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadDerivStack {
    pub q: Vec<DVector<f64>>,
    pub r: Vec<DVector<f64>>,
    pub qh: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub rh: Vec<DMatrix<f64>>,
    pub qt: DMatrix<f64>,
}

impl QuadDerivStack {
    pub fn horizon(&self) -> usize {
        self.r.len()
    }

    /// Stage Hessian `[[Q_t, S_t], [S_tᵀ, R_t]]`.
    pub fn stage_hessian(&self, t: usize) -> DMatrix<f64> {
        stage_block(&self.qh[t], &self.s[t], &self.rh[t])
    }

    /// Index of the first step whose Hessian block fails a Cholesky test;
    /// `Some(T)` refers to the terminal block.
    pub fn first_indefinite_step(&self) -> Option<usize> {
        (0..self.horizon())
            .find(|&t| self.stage_hessian(t).cholesky().is_none())
            .or_else(|| self.qt.clone().cholesky().is_none().then_some(self.horizon()))
    }

    /// Flattened gradient in `(x_0..x_T, u_0..u_{T-1})` order.
    pub fn flat_gradient(&self) -> DVector<f64> {
        let it = self.q.iter().chain(&self.r).flat_map(|v| v.iter().cloned());
        DVector::from_iterator(self.q.iter().map(|v| v.len()).sum::<usize>() + self.r.iter().map(|v| v.len()).sum::<usize>(), it)
    }
}

pub(crate) fn stage_block(q: &DMatrix<f64>, s: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let m = r.nrows();
    let mut h = DMatrix::zeros(n + m, n + m);
    h.view_mut((0, 0), (n, n)).copy_from(q);
    h.view_mut((0, n), (n, m)).copy_from(s);
    h.view_mut((n, 0), (m, n)).copy_from(&s.transpose());
    h.view_mut((n, n), (m, m)).copy_from(r);
    h
}

/// Stabilizing solution of `P = AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q`, obtained by
/// iterating the Riccati difference equation from `P = Q`.
pub fn terminal_weight_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension("DARE operands have inconsistent shapes".into()));
    }
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_map(a, b, q, r, &p)?;
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        let change = (&next - &p).amax();
        p = next;
        if change <= DARE_TOL * p.amax().max(1.0) {
            return Ok(symmetrize(p));
        }
    }
    Err(Error::DareNoConvergence(DARE_MAX_ITERS))
}

/// Right-hand side of the DARE evaluated at `p`.
pub fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let pb = p * b;
    let gram = r + b.transpose() * &pb;
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite { t: 0 })?;
    let gain = chol.solve(&(b.transpose() * &pa));
    Ok(symmetrize(a.transpose() * &pa - (a.transpose() * &pb) * gain + q))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Step reference from `start` to `end` switching at `step_index`.
pub fn step_reference(
    start: &DVector<f64>,
    end: &DVector<f64>,
    u_start: &DVector<f64>,
    u_end: &DVector<f64>,
    step_index: usize,
    horizon: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let x_ref = (0..=horizon).map(|t| if t < step_index { start.clone() } else { end.clone() }).collect();
    let u_ref = (0..horizon).map(|t| if t < step_index { u_start.clone() } else { u_end.clone() }).collect();
    (x_ref, u_ref)
}
