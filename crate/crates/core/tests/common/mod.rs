//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the solver or the cost code under test; the
//! oracles are written from the defining equations.

#![allow(dead_code)]

use mrtp::prediction::{FootprintRegion, FootprintShape};
use mrtp::Vec2;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- QPs ----

/// Random convex QP `½xᵀHx + fᵀx` s.t. `A_eq x = b_eq`, `lb ≤ A_in x ≤ ub`,
/// feasible by construction around a hidden point.
#[derive(Debug, Clone)]
pub struct RandomQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, -1.0, 1.0))
}

/// Orthogonal factor of a random square matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    random_matrix(rng, n, n).qr().q()
}

/// `H = MᵀM + 1e-3·I` with `M = diag(s) Q`, singular values `s ∈ [0.3, 3]`.
pub fn random_hessian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let s = DVector::from_fn(n, |_, _| uniform(rng, 0.3, 3.0));
    let m = DMatrix::from_diagonal(&s) * q;
    m.transpose() * &m + DMatrix::identity(n, n) * 1e-3
}

/// Each inequality row is one-sided (`≤` or `≥`), so the exhaustive oracle
/// only enumerates subsets.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, n_eq: usize, n_in: usize) -> RandomQp {
    let h = random_hessian(rng, n);
    let f = DVector::from_fn(n, |_, _| uniform(rng, -1.0, 1.0));
    let x_feas = DVector::from_fn(n, |_, _| uniform(rng, -0.5, 0.5));
    let a_eq = random_matrix(rng, n_eq, n);
    let b_eq = &a_eq * &x_feas;
    let a_in = random_matrix(rng, n_in, n);
    let ax = &a_in * &x_feas;
    let mut lb = DVector::from_element(n_in, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(n_in, f64::INFINITY);
    for i in 0..n_in {
        let slack = uniform(rng, 0.0, 0.3);
        if rng.random_bool(0.5) {
            ub[i] = ax[i] + slack;
        } else {
            lb[i] = ax[i] - slack;
        }
    }
    RandomQp { h, f, a_eq, b_eq, a_in, lb, ub }
}

impl RandomQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    /// Inequalities as `G x ≤ g`.
    fn one_sided(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.a_in.nrows() {
            if self.ub[i].is_finite() {
                rows.push(self.a_in.row(i).clone_owned());
                rhs.push(self.ub[i]);
            }
            if self.lb[i].is_finite() {
                rows.push(-self.a_in.row(i).clone_owned());
                rhs.push(-self.lb[i]);
            }
        }
        let g = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        (g, DVector::from_vec(rhs))
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let eq = (&self.a_eq * x - &self.b_eq).amax();
        let (g, gv) = self.one_sided();
        let ineq = (&g * x - gv).iter().fold(0.0f64, |m, v| m.max(*v));
        eq.max(ineq)
    }
}

/// KKT solve with `active` rows of `G x ≤ g` held at equality together with
/// all equality rows. Returns `(x, multipliers of active rows)`.
fn kkt_solve(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    eq: (&DMatrix<f64>, &DVector<f64>),
    g: &DMatrix<f64>,
    gv: &DVector<f64>,
    active: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = f.len();
    let me = eq.0.nrows();
    let k = me + active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut rhs = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    rhs.rows_mut(0, n).copy_from(&(-f));
    for r in 0..k {
        let (row, b) = if r < me {
            (eq.0.row(r).clone_owned(), eq.1[r])
        } else {
            (g.row(active[r - me]).clone_owned(), gv[active[r - me]])
        };
        for j in 0..n {
            kkt[(n + r, j)] = row[j];
            kkt[(j, n + r)] = row[j];
        }
        rhs[n + r] = b;
    }
    let sol = kkt.lu().solve(&rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n + me, active.len()).into_owned()))
}

/// Exhaustive active-set oracle: every subset of inequality rows of size at
/// most `n - n_eq` is tried; the KKT point that is primal feasible with
/// non-negative multipliers is the global minimizer.
pub fn exhaustive_active_set(qp: &RandomQp) -> Option<(DVector<f64>, f64)> {
    let n = qp.n();
    let (g, gv) = qp.one_sided();
    let m = g.nrows();
    let max_k = n.saturating_sub(qp.a_eq.nrows());
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut subset = Vec::new();
    fn recurse(
        start: usize,
        m: usize,
        max_k: usize,
        subset: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        visit(subset);
        if subset.len() == max_k {
            return;
        }
        for i in start..m {
            subset.push(i);
            recurse(i + 1, m, max_k, subset, visit);
            subset.pop();
        }
    }
    let mut visit = |active: &[usize]| {
        let Some((x, mult)) = kkt_solve(&qp.h, &qp.f, (&qp.a_eq, &qp.b_eq), &g, &gv, active) else {
            return;
        };
        if mult.iter().any(|&l| l < -1e-9) {
            return;
        }
        if qp.max_violation(&x) > 1e-9 {
            return;
        }
        let obj = qp.objective(&x);
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((x, obj));
        }
    };
    recurse(0, m, max_k, &mut subset, &mut visit);
    best
}

/// Long-run accelerated projected gradient on the dual, followed by an exact
/// KKT solve on the active set it identifies. The refined point is used only
/// if it passes the KKT checks; otherwise the dual estimate stands.
pub fn projected_gradient_reference(qp: &RandomQp, iterations: usize) -> (DVector<f64>, f64) {
    let n = qp.n();
    let (g, gv) = qp.one_sided();
    // stack equalities as two-signed rows: [G; A_eq], multipliers λ ≥ 0 for G
    // rows and free for equality rows
    let me = qp.a_eq.nrows();
    let mi = g.nrows();
    let mut c = DMatrix::zeros(mi + me, n);
    c.rows_mut(0, mi).copy_from(&g);
    c.rows_mut(mi, me).copy_from(&qp.a_eq);
    let mut d = DVector::zeros(mi + me);
    d.rows_mut(0, mi).copy_from(&gv);
    d.rows_mut(mi, me).copy_from(&qp.b_eq);

    let h_inv = qp.h.clone().try_inverse().expect("H is positive definite");
    // dual: minimize ½ λᵀ C H⁻¹ Cᵀ λ + (C H⁻¹ f + d)ᵀ λ
    let q = &c * &h_inv * c.transpose();
    let lin = &c * &h_inv * &qp.f + &d;
    let lipschitz = q.clone().symmetric_eigen().eigenvalues.amax().max(1e-12);
    let step = 1.0 / lipschitz;
    let project = |v: &mut DVector<f64>| {
        for i in 0..mi {
            v[i] = v[i].max(0.0);
        }
    };
    let dual_obj = |l: &DVector<f64>| 0.5 * l.dot(&(&q * l)) + lin.dot(l);
    let mut lam = DVector::zeros(mi + me);
    let mut prev = lam.clone();
    let mut t = 1.0f64;
    let mut last_obj = dual_obj(&lam);
    for _ in 0..iterations {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let yv = &lam + (&lam - &prev) * beta;
        let mut next = &yv - (&q * &yv + &lin) * step;
        project(&mut next);
        prev = std::mem::replace(&mut lam, next);
        t = t_next;
        let obj = dual_obj(&lam);
        if obj > last_obj {
            // adaptive restart
            t = 1.0;
            prev = lam.clone();
        }
        last_obj = obj;
    }
    let x_dual = -&h_inv * (&qp.f + c.transpose() * &lam);

    let active: Vec<usize> = (0..mi).filter(|&i| lam[i] > 1e-9 || (g.row(i) * &x_dual)[0] - gv[i] > -1e-9).collect();
    if let Some((x, mult)) = kkt_solve(&qp.h, &qp.f, (&qp.a_eq, &qp.b_eq), &g, &gv, &active) {
        if mult.iter().all(|&l| l >= -1e-9) && qp.max_violation(&x) <= 1e-9 {
            let obj = qp.objective(&x);
            return (x, obj);
        }
    }
    let obj = qp.objective(&x_dual);
    (x_dual, obj)
}

// --------------------------------------------------------- quadrature ----

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let legendre = |x: f64| -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=order {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    };
    (0..order)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `∫_a^b f` by Gauss-Legendre with `order` nodes.
pub fn integrate(a: f64, b: f64, order: usize, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(order).into_iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// `k`-th derivative of `Σ α_j t^j`, evaluated directly.
pub fn poly_derivative(alpha: &[f64], k: usize, t: f64) -> f64 {
    alpha
        .iter()
        .enumerate()
        .skip(k)
        .map(|(j, a)| {
            let falling: f64 = ((j - k + 1)..=j).map(|v| v as f64).product();
            a * falling * t.powi((j - k) as i32)
        })
        .sum()
}

// ------------------------------------------------ finite differences ----

/// Central-difference gradient of `f` at `x` with per-coordinate step
/// `h·max(1, |x_i|)`.
pub fn central_gradient(x: &DVector<f64>, h: f64, f: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let step = h * x[i].abs().max(1.0);
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += step;
        minus[i] -= step;
        (f(&plus) - f(&minus)) / (2.0 * step)
    })
}

// ------------------------------------------------------ lidar scenes ----

/// Discs around the origin, separated in bearing by at least `gap` radians
/// so that each one forms its own cluster.
pub fn disc_scene(rng: &mut ChaCha8Rng, count: usize, gap: f64) -> Vec<(f64, f64, f64)> {
    let mut discs: Vec<(f64, f64, f64)> = Vec::new();
    let mut attempts = 0;
    while discs.len() < count && attempts < 1000 {
        attempts += 1;
        let bearing = uniform(rng, -std::f64::consts::PI, std::f64::consts::PI);
        let dist = uniform(rng, 0.8, 3.0);
        let radius = uniform(rng, 0.08, 0.5);
        let half_width = (radius / dist).asin();
        let clear = discs.iter().all(|&(b, d, r)| {
            let other = (r / d).asin();
            let mut sep = (bearing - b).abs();
            if sep > std::f64::consts::PI {
                sep = std::f64::consts::TAU - sep;
            }
            sep > half_width + other + gap
        });
        if clear {
            discs.push((bearing, dist, radius));
        }
    }
    discs
}

// ------------------------------------------------------- footprints ----

/// Points on the boundary of `region` grown by `r`, plus the same points
/// pulled two thirds and one third of the way toward the center.
pub fn footprint_samples(region: &FootprintRegion, r: f64, n: usize) -> Vec<Vec2> {
    let mut boundary = Vec::with_capacity(2 * n);
    match region.shape {
        FootprintShape::Circle { radius } => {
            for k in 0..n {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                boundary.push(region.center + Vec2::new(a.cos(), a.sin()) * (radius + r));
            }
        }
        FootprintShape::Square { half_side } => {
            let per_edge = n.div_ceil(8).max(2);
            for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                let corner = region.center + Vec2::new(sx, sy) * half_side;
                // rounded corner arc
                for k in 0..=per_edge {
                    let a = std::f64::consts::FRAC_PI_2 * k as f64 / per_edge as f64;
                    boundary.push(corner + Vec2::new(sx * a.cos(), sy * a.sin()) * r);
                }
                // flat edges leaving this corner
                for k in 0..per_edge {
                    let s = 2.0 * half_side * k as f64 / per_edge as f64;
                    boundary.push(corner + Vec2::new(sx * r, -sy * s));
                    boundary.push(corner + Vec2::new(-sx * s, sy * r));
                }
            }
        }
    }
    let mut out = boundary.clone();
    for s in [0.66, 0.33] {
        out.extend(boundary.iter().map(|p| region.center + (p - region.center) * s));
    }
    out
}
