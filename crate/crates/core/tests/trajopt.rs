mod common;

use common::{central_gradient, integrate, poly_derivative, uniform};
use mrtp::saferegion::{box_halfplanes, HalfPlane, SafePolyhedron};
use mrtp::trajopt::{
    assemble_constraints, basis_row, collision_cost_terms, derivative_cost_hessian, endpoint_cost, plan, PlanInput,
    PlanStatus, PolyTrajectory,
};
use mrtp::{default_config, Aabb, ObstacleCircle, PlannerConfig, RobotState, SizeSpec, Vec2};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∫ Q_{n-1} (x^{(n-1)})² + Q_n (x^{(n)})²` for one axis with coefficients `a`.
fn quadrature_cost(a: &[f64], n: usize, weights: (f64, f64), t0: f64, t1: f64) -> f64 {
    integrate(t0, t1, 16, |t| {
        let lo = poly_derivative(a, n - 1, t);
        let hi = poly_derivative(a, n, t);
        weights.0 * lo * lo + weights.1 * hi * hi
    })
}

/// Hessian entry `(i, j)` recovered from the quadratic form by polarization.
fn quadrature_entry(nc: usize, n: usize, weights: (f64, f64), t0: f64, t1: f64, i: usize, j: usize) -> f64 {
    let e = |k: usize| {
        let mut v = vec![0.0; nc];
        v[k] = 1.0;
        v
    };
    if i == j {
        return quadrature_cost(&e(i), n, weights, t0, t1);
    }
    let mut sum = e(i);
    sum[j] = 1.0;
    let mut diff = e(i);
    diff[j] = -1.0;
    0.25 * (quadrature_cost(&sum, n, weights, t0, t1) - quadrature_cost(&diff, n, weights, t0, t1))
}

#[test]
fn hessian_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let n = rng.random_range(1..=5usize);
        let t0 = uniform(&mut rng, 0.0, 4.5);
        let t1 = uniform(&mut rng, t0 + 0.05, 5.0);
        let cfg = PlannerConfig {
            deriv_order: n,
            poly_degree: 2 * n - 1,
            q_lower_deriv: uniform(&mut rng, 0.0, 5.0),
            q_deriv: uniform(&mut rng, 0.0, 5.0),
            ..default_config()
        };
        let nc = cfg.n_coeffs();
        let h = derivative_cost_hessian(&cfg, t0, t1);
        for i in 0..nc {
            for j in 0..nc {
                let expected = quadrature_entry(nc, n, (cfg.q_lower_deriv, cfg.q_deriv), t0, t1, i, j);
                let tol = 1e-8 * expected.abs().max(1.0);
                assert!((h[(i, j)] - expected).abs() <= tol, "n={n} [{t0},{t1}] ({i},{j}): {} vs {expected}", h[(i, j)]);
                assert!((h[(i + nc, j + nc)] - expected).abs() <= tol);
                assert_eq!(h[(i, j + nc)], 0.0);
            }
        }
    }
}

#[test]
fn endpoint_cost_matches_expansion() {
    // (x_des - r·α)² = x_desᵀx_des - 2 x_des r·α + αᵀ rrᵀ α
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let target = Vec2::new(1.5, -0.7);
    let (h, f) = endpoint_cost(&target, 2.0, 3.0, 5);
    for _ in 0..10 {
        let d = DVector::from_fn(12, |_, _| uniform(&mut rng, -1.0, 1.0));
        let traj = PolyTrajectory::new(0.0, 3.0, 5, d.clone());
        let p = traj.evaluate(2.0, 0);
        let direct = 3.0 * (target - p).norm_squared();
        let model = d.dot(&(&h * &d)) + f.dot(&d) + 3.0 * target.norm_squared();
        assert!((direct - model).abs() < 1e-9 * direct.max(1.0));
    }
}

/// Independent evaluation of the sampled collision surrogate
/// `Q_obs Σ_k Σ_obs ‖c(x(t_k))‖ v_k τ` with speeds frozen.
fn sampled_cost(d: &DVector<f64>, obstacles: &[ObstacleCircle], speeds: &[f64], cfg: &PlannerConfig) -> f64 {
    let nc = cfg.n_coeffs();
    let (ax, ay) = (d.rows(0, nc), d.rows(nc, nc));
    speeds
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let t = (k + 1) as f64 * cfg.tau;
            let x = Vec2::new(poly_derivative(ax.as_slice(), 0, t), poly_derivative(ay.as_slice(), 0, t));
            let phi: f64 = obstacles
                .iter()
                .map(|o| {
                    let dist = (x - o.center).norm();
                    let surf = dist - o.radius;
                    dist / ((cfg.smoothness * (surf - cfg.obstacle_threshold)).exp() * surf)
                })
                .sum();
            cfg.q_obs * phi * v * cfg.tau
        })
        .sum()
}

fn random_path(rng: &mut ChaCha8Rng, cfg: &PlannerConfig) -> PolyTrajectory {
    let from = Vec2::new(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    let to = from + Vec2::new(uniform(rng, 1.0, 3.0), uniform(rng, -1.0, 1.0));
    let mut traj = PolyTrajectory::straight_line(0.0, cfg.horizon, cfg.poly_degree, from, to);
    let nc = cfg.n_coeffs();
    for axis in 0..2 {
        for j in 2..nc {
            traj.coeffs[axis * nc + j] += uniform(rng, -0.05, 0.05) / cfg.horizon.powi(j as i32 - 1);
        }
    }
    traj
}

/// Obstacles near the path whose surface stays at least 5 cm away from
/// every sample.
fn obstacles_near(rng: &mut ChaCha8Rng, path: &PolyTrajectory, cfg: &PlannerConfig) -> Vec<ObstacleCircle> {
    let samples: Vec<Vec2> = (1..=cfg.n_samples()).map(|k| path.evaluate(k as f64 * cfg.tau, 0)).collect();
    let count = rng.random_range(1..=4);
    let mut out = Vec::new();
    while out.len() < count {
        let anchor = samples[rng.random_range(0..samples.len())];
        let center = anchor + Vec2::new(uniform(rng, -1.2, 1.2), uniform(rng, -1.2, 1.2));
        let radius = uniform(rng, 0.1, 0.5);
        let clearance = samples.iter().map(|s| (s - center).norm() - radius).fold(f64::INFINITY, f64::min);
        if clearance >= 0.05 {
            out.push(ObstacleCircle { center, radius });
        }
    }
    out
}

#[test]
fn collision_gradient_matches_finite_differences() {
    let cfg = default_config();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..20 {
        let prev = random_path(&mut rng, &cfg);
        let obstacles = obstacles_near(&mut rng, &prev, &cfg);
        let terms = collision_cost_terms(&prev, &obstacles, &cfg, 0.0, cfg.horizon);
        let speeds: Vec<f64> = (1..=cfg.n_samples())
            .map(|k| prev.evaluate(k as f64 * cfg.tau, 1).norm().max(cfg.min_collision_speed))
            .collect();
        let d0 = prev.coeffs.clone();
        let value = sampled_cost(&d0, &obstacles, &speeds, &cfg);
        assert!((terms.value - value).abs() <= 1e-9 * value.max(1.0), "case {case}");
        let fd = central_gradient(&d0, 1e-6, |d| sampled_cost(d, &obstacles, &speeds, &cfg));
        let rel = |g: &DVector<f64>| (g - &fd).norm() / fd.norm();
        assert!(rel(&terms.gradient) <= 1e-4, "case {case}: gradient rel err {}", rel(&terms.gradient));
        let model_slope = &terms.h * &d0 * 2.0 + &terms.f;
        assert!(rel(&model_slope) <= 1e-4, "case {case}: model slope rel err {}", rel(&model_slope));
    }
}

fn workspace() -> Aabb {
    Aabb::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)).unwrap()
}

fn regions_with(cfg: &PlannerConfig, now: f64, extra: &[HalfPlane]) -> Vec<SafePolyhedron> {
    (1..=cfg.n_samples())
        .map(|k| {
            let mut halfplanes = extra.to_vec();
            halfplanes.extend(box_halfplanes(&workspace()));
            SafePolyhedron { stamp: now + k as f64 * cfg.tau, halfplanes, penetrated_by: vec![] }
        })
        .collect()
}

#[test]
fn empty_obstacle_set_matches_zero_weight() {
    let state = RobotState::at_rest(1, 2.0, Vec2::new(0.5, -0.5), SizeSpec::sphere(0.2));
    let base = default_config();
    let regions = regions_with(&base, 2.0, &[]);
    let input =
        PlanInput { state: &state, goal: Vec2::new(2.0, 1.0), waypoints: &[], regions: &regions, obstacles: &[], now: 2.0 };
    let a = plan(&input, None, &PlannerConfig { q_obs: 25.0, ..base.clone() });
    let b = plan(&input, None, &PlannerConfig { q_obs: 0.0, ..base });
    assert_eq!(a.status, PlanStatus::Optimal);
    assert!((&a.trajectory.coeffs - &b.trajectory.coeffs).amax() <= 1e-9);
}

#[test]
fn reaches_goal_when_endpoint_cost_dominates() {
    let cfg = PlannerConfig { q_final: 1e5, ..default_config() };
    let state = RobotState::at_rest(1, 0.0, Vec2::zeros(), SizeSpec::sphere(0.2));
    let regions = regions_with(&cfg, 0.0, &[]);
    let goal = Vec2::new(1.0, 0.5);
    let input = PlanInput { state: &state, goal, waypoints: &[], regions: &regions, obstacles: &[], now: 0.0 };
    let out = plan(&input, None, &cfg);
    assert_eq!(out.status, PlanStatus::Optimal);
    assert!((out.trajectory.evaluate(cfg.horizon, 0) - goal).norm() <= 1e-3);
}

fn objective_hessian(cfg: &PlannerConfig, prev: &PolyTrajectory, obstacles: &[ObstacleCircle]) -> DMatrix<f64> {
    let mut h = derivative_cost_hessian(cfg, 0.0, cfg.horizon);
    h += endpoint_cost(&Vec2::new(1.0, 1.0), cfg.horizon, cfg.q_final, cfg.poly_degree).0;
    h += collision_cost_terms(prev, obstacles, cfg, 0.0, cfg.horizon).h;
    for i in 0..h.nrows() {
        h[(i, i)] += cfg.regularization;
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regularized_objective_is_positive_definite(seed in any::<u64>()) {
        let cfg = default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev = random_path(&mut rng, &cfg);
        let obstacles = obstacles_near(&mut rng, &prev, &cfg);
        let h = objective_hessian(&cfg, &prev, &obstacles);
        prop_assert!((&h - h.transpose()).amax() <= 1e-9 * h.amax());
        prop_assert!(h.cholesky().is_some());
    }

    #[test]
    fn optimal_plans_satisfy_their_constraints(
        seed in any::<u64>(),
        vx in -0.5f64..0.5,
        vy in -0.5f64..0.5,
        wall in 0.6f64..3.0,
        angle in -0.8f64..0.8,
    ) {
        let cfg = default_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = RobotState {
            velocity: Vec2::new(vx, vy),
            ..RobotState::at_rest(1, 1.0, Vec2::new(uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0)), SizeSpec::sphere(0.2))
        };
        let normal = Vec2::new(angle.cos(), angle.sin());
        let plane = HalfPlane::new(normal, normal.dot(&state.position) + wall);
        let regions = regions_with(&cfg, 1.0, &[plane]);
        let goal = state.position + normal * 4.0;
        let prev = random_path(&mut rng, &cfg);
        let obstacles = vec![ObstacleCircle { center: state.position + Vec2::new(0.0, 1.5), radius: 0.3 }];
        let input = PlanInput { state: &state, goal, waypoints: &[], regions: &regions, obstacles: &obstacles, now: 1.0 };
        let out = plan(&input, Some(prev.reparametrized(1.0, cfg.horizon)), &cfg);
        prop_assert_eq!(out.status, PlanStatus::Optimal);
        let cons = assemble_constraints(&state, &[], &regions, &cfg, 1.0);
        let d = &out.trajectory.coeffs;
        let eq = (&cons.a_eq * d - &cons.b_eq).amax();
        prop_assert!(eq <= 1e-6, "equality residual {}", eq);
        let ad = &cons.a_in * d;
        for i in 0..ad.len() {
            prop_assert!(ad[i] <= cons.ub[i] + 1e-6 && ad[i] >= cons.lb[i] - 1e-6, "row {} = {} outside [{}, {}]", i, ad[i], cons.lb[i], cons.ub[i]);
        }
        for r in &regions {
            let p = out.trajectory.evaluate(r.stamp, 0);
            prop_assert!(r.halfplanes.iter().all(|h| h.violation(&p) <= 1e-6));
        }
    }

    #[test]
    fn basis_row_differentiates_monomials(t in 0.0f64..4.0, deriv in 0usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..6).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let row = basis_row(t, 5, deriv);
        let direct = poly_derivative(&a, deriv.min(6), t);
        let expected = if deriv > 5 { 0.0 } else { direct };
        prop_assert!((row.dot(&DVector::from_vec(a)) - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }
}
