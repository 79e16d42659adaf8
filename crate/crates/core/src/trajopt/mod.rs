//! Receding-horizon trajectory optimization over per-axis polynomials.
//!
//! The decision vector stacks the monomial coefficients of both axes,
//! `D = [α_0..α_{2n-1} (x), α_0..α_{2n-1} (y)]`, in trajectory-relative time
//! `t_rel = t - start_time`. Costs follow the `Dᵀ H D + Fᵀ D` convention.

mod constraints;
mod cost;
mod planner;

pub use constraints::{assemble_constraints, dyn_sample_times, Constraints};
pub use cost::{
    collision_cost_terms, collision_direction, collision_potential, derivative_cost_hessian, endpoint_cost,
    CollisionTerms,
};
pub use planner::{plan, PlanInput, PlanOutcome, PlanStatus, Planner, SolveStats};

use nalgebra::DVector;

use crate::types::Vec2;

/// Row `r` with `r · α = d^deriv/dt^deriv Σ α_j t^j`.
pub fn basis_row(t: f64, degree: usize, deriv: usize) -> DVector<f64> {
    let mut row = DVector::zeros(degree + 1);
    if deriv > degree {
        return row;
    }
    for j in deriv..=degree {
        let falling: f64 = ((j - deriv + 1)..=j).map(|v| v as f64).product();
        row[j] = falling * t.powi((j - deriv) as i32);
    }
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyTrajectory {
    pub start_time: f64,
    pub horizon: f64,
    pub degree: usize,
    /// `[x coefficients; y coefficients]`, each `degree + 1` long.
    pub coeffs: DVector<f64>,
}

impl PolyTrajectory {
    pub fn new(start_time: f64, horizon: f64, degree: usize, coeffs: DVector<f64>) -> Self {
        assert_eq!(coeffs.len(), 2 * (degree + 1), "coefficient count must be 2·(degree+1)");
        Self { start_time, horizon, degree, coeffs }
    }

    /// Constant trajectory at `p`.
    pub fn stationary(start_time: f64, horizon: f64, degree: usize, p: Vec2) -> Self {
        let nc = degree + 1;
        let mut coeffs = DVector::zeros(2 * nc);
        coeffs[0] = p.x;
        coeffs[nc] = p.y;
        Self::new(start_time, horizon, degree, coeffs)
    }

    /// Constant-speed line from `from` (at `start_time`) to `to` (at the end
    /// of the horizon).
    pub fn straight_line(start_time: f64, horizon: f64, degree: usize, from: Vec2, to: Vec2) -> Self {
        let mut traj = Self::stationary(start_time, horizon, degree, from);
        let nc = degree + 1;
        if degree >= 1 {
            let v = (to - from) / horizon;
            traj.coeffs[1] = v.x;
            traj.coeffs[nc + 1] = v.y;
        }
        traj
    }

    pub fn n_coeffs(&self) -> usize {
        self.degree + 1
    }

    pub fn axis(&self, axis: usize) -> DVector<f64> {
        let nc = self.n_coeffs();
        self.coeffs.rows(axis * nc, nc).into_owned()
    }

    pub fn covers(&self, t: f64) -> bool {
        let eps = 1e-9;
        t >= self.start_time - eps && t <= self.start_time + self.horizon + eps
    }

    /// Derivative of order `deriv` at absolute time `t`. Times outside the
    /// validity window extrapolate the polynomial.
    pub fn evaluate(&self, t: f64, deriv: usize) -> Vec2 {
        let row = basis_row(t - self.start_time, self.degree, deriv);
        let nc = self.n_coeffs();
        Vec2::new(
            row.dot(&self.coeffs.rows(0, nc)),
            row.dot(&self.coeffs.rows(nc, nc)),
        )
    }

    /// Like [`evaluate`](Self::evaluate), also reporting whether `t` was
    /// outside the validity window.
    pub fn evaluate_flagged(&self, t: f64, deriv: usize) -> (Vec2, bool) {
        (self.evaluate(t, deriv), !self.covers(t))
    }

    /// The same curve with its time origin moved to `new_start`.
    pub fn reparametrized(&self, new_start: f64, horizon: f64) -> Self {
        let delta = new_start - self.start_time;
        let nc = self.n_coeffs();
        let mut coeffs = DVector::zeros(2 * nc);
        for axis in 0..2 {
            let a = self.coeffs.rows(axis * nc, nc);
            for k in 0..nc {
                // β_k = Σ_{j≥k} α_j C(j,k) δ^{j-k}
                let mut binom = 1.0;
                let mut acc = 0.0;
                for j in k..nc {
                    if j > k {
                        binom = binom * j as f64 / (j - k) as f64;
                    }
                    acc += a[j] * binom * delta.powi((j - k) as i32);
                }
                coeffs[axis * nc + k] = acc;
            }
        }
        Self::new(new_start, horizon, self.degree, coeffs)
    }
}
