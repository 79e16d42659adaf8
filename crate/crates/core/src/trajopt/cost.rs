use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{basis_row, PolyTrajectory};
use crate::config::PlannerConfig;
use crate::types::{ObstacleCircle, Vec2};

/// Block-diagonal `H` with `Dᵀ H D = ∫_{t0}^{t1} Q_{n-1}‖x^{(n-1)}‖² + Q_n‖x^{(n)}‖² dt`,
/// integrated in closed form term by term.
pub fn derivative_cost_hessian(cfg: &PlannerConfig, t0: f64, t1: f64) -> DMatrix<f64> {
    let nc = cfg.n_coeffs();
    let n = cfg.deriv_order;
    let mut block = DMatrix::zeros(nc, nc);
    let terms = [(n - 1, cfg.q_lower_deriv), (n, cfg.q_deriv)];
    for (k, weight) in terms {
        if weight == 0.0 {
            continue;
        }
        let falling = |j: usize| -> f64 { ((j - k + 1)..=j).map(|v| v as f64).product() };
        for i in k..nc {
            for j in k..nc {
                let p = (i - k + j - k) as i32;
                let integral = (t1.powi(p + 1) - t0.powi(p + 1)) / (p + 1) as f64;
                block[(i, j)] += weight * falling(i) * falling(j) * integral;
            }
        }
    }
    let mut h = DMatrix::zeros(2 * nc, 2 * nc);
    h.view_mut((0, 0), (nc, nc)).copy_from(&block);
    h.view_mut((nc, nc), (nc, nc)).copy_from(&block);
    h
}

/// Quadratic expansion of `Q_final·‖x_des - x(t)‖²` with the constant dropped:
/// `H = Q rᵀr`, `F = -2 Q x_des r` per axis.
pub fn endpoint_cost(x_des: &Vec2, t: f64, q_final: f64, degree: usize) -> (DMatrix<f64>, DVector<f64>) {
    let nc = degree + 1;
    let r = basis_row(t, degree, 0);
    let block = &r * r.transpose() * q_final;
    let mut h = DMatrix::zeros(2 * nc, 2 * nc);
    h.view_mut((0, 0), (nc, nc)).copy_from(&block);
    h.view_mut((nc, nc), (nc, nc)).copy_from(&block);
    let mut f = DVector::zeros(2 * nc);
    f.rows_mut(0, nc).copy_from(&(&r * (-2.0 * q_final * x_des.x)));
    f.rows_mut(nc, nc).copy_from(&(&r * (-2.0 * q_final * x_des.y)));
    (h, f)
}

/// `c(x) = (x - x_obs) / (e^{K_p (d - ρ)} d)` with `d` the distance to the
/// obstacle surface, floored at `d_min`. At the obstacle center the
/// direction falls back to `heading`.
pub fn collision_direction(x: &Vec2, obs: &ObstacleCircle, kp: f64, rho: f64, d_min: f64, heading: &Vec2) -> Vec2 {
    let rel = x - obs.center;
    let center_dist = rel.norm();
    let d = (center_dist - obs.radius).max(d_min);
    let scale = 1.0 / ((kp * (d - rho)).exp() * d);
    if center_dist <= 1e-12 {
        let h = if heading.norm() > 1e-12 { heading.normalize() } else { Vec2::new(1.0, 0.0) };
        // magnitude at the floor: ‖x - x_obs‖ / d = 1
        return h * (d * scale);
    }
    rel * scale
}

/// `‖c(x)‖` and its derivative with respect to the surface distance.
///
/// Below `d_min` the potential continues linearly with the slope it has at
/// `d_min`, so it keeps growing toward the obstacle center.
fn potential_and_slope(center_dist: f64, radius: f64, kp: f64, rho: f64, d_min: f64) -> (f64, f64) {
    let eval = |d: f64| {
        let rc = d + radius;
        let e = (kp * (d - rho)).exp();
        let phi = rc / (d * e);
        let slope = (d - rc * (1.0 + d * kp)) / (d * d * e);
        (phi, slope)
    };
    let d = center_dist - radius;
    if d >= d_min {
        eval(d)
    } else {
        let (phi, slope) = eval(d_min);
        (phi + slope * (d - d_min), slope)
    }
}

/// Scalar collision potential `‖c(x)‖` of one obstacle.
pub fn collision_potential(x: &Vec2, obs: &ObstacleCircle, cfg: &PlannerConfig) -> f64 {
    let dist = (x - obs.center).norm();
    potential_and_slope(dist, obs.radius, cfg.smoothness, cfg.obstacle_threshold, cfg.min_surface_distance).0
}

fn potential_gradient(x: &Vec2, obs: &ObstacleCircle, cfg: &PlannerConfig) -> (f64, Vec2) {
    let rel = x - obs.center;
    let dist = rel.norm();
    let (phi, slope) =
        potential_and_slope(dist, obs.radius, cfg.smoothness, cfg.obstacle_threshold, cfg.min_surface_distance);
    let grad = if dist > 1e-12 { rel * (slope / dist) } else { Vec2::zeros() };
    (phi, grad)
}

/// Quadratic model of the sampled collision cost about a linearization
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionTerms {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    /// Gradient of the sampled cost at `linearization`.
    pub gradient: DVector<f64>,
    /// Coefficients of the linearization trajectory in the new time origin.
    pub linearization: DVector<f64>,
    /// Sampled cost at the linearization point.
    pub value: f64,
    /// Speed weights `v(t_k)` used at each sample.
    pub speeds: Vec<f64>,
}

/// Sampled collision cost `Q_obs Σ_k Σ_obs ‖c(x(t_k))‖ v_k τ` over the
/// τ-grid `t0 + kτ`, expanded to second order about `prev` with a
/// Gauss-Newton Hessian (clamped to PSD).
///
/// `v_k` is the speed of `prev` at `t_k`, floored at `min_collision_speed`.
pub fn collision_cost_terms(
    prev: &PolyTrajectory,
    obstacles: &[ObstacleCircle],
    cfg: &PlannerConfig,
    t0: f64,
    horizon: f64,
) -> CollisionTerms {
    let nc = cfg.n_coeffs();
    let dim = 2 * nc;
    let base = prev.reparametrized(t0, horizon);
    let n_samples = (horizon / cfg.tau).round() as usize;
    let speeds: Vec<f64> = (1..=n_samples)
        .map(|k| prev.evaluate(t0 + k as f64 * cfg.tau, 1).norm().max(cfg.min_collision_speed))
        .collect();
    if obstacles.is_empty() || cfg.q_obs == 0.0 {
        return CollisionTerms {
            h: DMatrix::zeros(dim, dim),
            f: DVector::zeros(dim),
            gradient: DVector::zeros(dim),
            linearization: base.coeffs,
            value: 0.0,
            speeds,
        };
    }

    let mut gradient = DVector::zeros(dim);
    let mut gn = DMatrix::zeros(dim, dim);
    let mut value = 0.0;
    for (k, speed) in speeds.iter().enumerate() {
        let t_rel = (k + 1) as f64 * cfg.tau;
        let x = base.evaluate(t0 + t_rel, 0);
        let weight = cfg.q_obs * speed * cfg.tau;
        let mut phi = 0.0;
        let mut grad_x = Vec2::zeros();
        for obs in obstacles {
            let (p, g) = potential_gradient(&x, obs, cfg);
            phi += p;
            grad_x += g;
        }
        value += weight * phi;
        let row = basis_row(t_rel, cfg.poly_degree, 0);
        // chain rule through x = [row 0; 0 row] D
        let mut jac = DVector::zeros(dim);
        jac.rows_mut(0, nc).copy_from(&(&row * grad_x.x));
        jac.rows_mut(nc, nc).copy_from(&(&row * grad_x.y));
        gradient += &jac * weight;
        if phi > 1e-300 {
            // Hessian of (√(wφ))², Gauss-Newton: w ∇φ ∇φᵀ / (2φ)
            gn += &jac * jac.transpose() * (weight / (2.0 * phi));
        }
    }
    let gn = project_psd(&(0.5 * (&gn + gn.transpose())));
    let f = &gradient - &gn * &base.coeffs;
    CollisionTerms { h: gn * 0.5, f, gradient, linearization: base.coeffs, value, speeds }
}

fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}
