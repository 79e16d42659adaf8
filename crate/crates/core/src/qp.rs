//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    ½ xᵀ H x + fᵀ x
//! subject to  A_eq x = b_eq
//!             lb <= A_in x <= ub
//! ```
//!
//! with an operator-splitting (ADMM) iteration in the style of OSQP:
//! Ruiz equilibration, over-relaxation, a residual-balanced penalty and a
//! final active-set polish that solves the reduced KKT system exactly.
//! Equality rows are folded into the inequality block as `lb = ub`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Build a problem, symmetrizing `h` and checking dimensions.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        lb: DVector<f64>,
        ub: DVector<f64>,
    ) -> Result<Self> {
        let n = f.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::Dimension(format!("H is {}x{}, expected {n}x{n}", h.nrows(), h.ncols())));
        }
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return Err(Error::Dimension(format!(
                "A_eq is {}x{} with {} right-hand sides, expected {n} columns",
                a_eq.nrows(),
                a_eq.ncols(),
                b_eq.len()
            )));
        }
        if a_in.ncols() != n || a_in.nrows() != lb.len() || a_in.nrows() != ub.len() {
            return Err(Error::Dimension(format!(
                "A_in is {}x{} with {}/{} bounds, expected {n} columns",
                a_in.nrows(),
                a_in.ncols(),
                lb.len(),
                ub.len()
            )));
        }
        let h = 0.5 * (&h + h.transpose());
        Ok(Self { h, f, a_eq, b_eq, a_in, lb, ub })
    }

    /// Unconstrained problem.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let n = f.len();
        Self::new(
            h,
            f,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DVector::zeros(0),
        )
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn n_rows(&self) -> usize {
        self.a_eq.nrows() + self.a_in.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Stacked `[A_eq; A_in]` with bounds `[b_eq; lb]`, `[b_eq; ub]`.
    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let n = self.n_vars();
        let (me, mi) = (self.a_eq.nrows(), self.a_in.nrows());
        let mut a = DMatrix::zeros(me + mi, n);
        a.rows_mut(0, me).copy_from(&self.a_eq);
        a.rows_mut(me, mi).copy_from(&self.a_in);
        let mut l = DVector::zeros(me + mi);
        let mut u = DVector::zeros(me + mi);
        l.rows_mut(0, me).copy_from(&self.b_eq);
        u.rows_mut(0, me).copy_from(&self.b_eq);
        l.rows_mut(me, mi).copy_from(&self.lb);
        u.rows_mut(me, mi).copy_from(&self.ub);
        (a, l, u)
    }

    /// Worst violation of any constraint row at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let (a, l, u) = self.stacked();
        let ax = a * x;
        ax.iter()
            .zip(l.iter().zip(u.iter()))
            .map(|(v, (lo, hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the stacked rows `[A_eq; A_in]`; positive at an upper
    /// bound, negative at a lower bound.
    pub y: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Penalty in use at exit, for warm starts.
    pub rho: f64,
    pub polished: bool,
}

impl QpSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart { x: self.x.clone(), y: Some(self.y.clone()), rho: Some(self.rho) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub y: Option<DVector<f64>>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    pub adaptive_rho_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
    pub warm_start: Option<WarmStart>,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 0.0,
            eps_prim_inf: 1e-5,
            max_iter: 4000,
            adaptive_rho_interval: 25,
            scaling_iters: 10,
            polish: true,
            warm_start: None,
        }
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const INF_BOUND: f64 = 1e20;
// ADMM accuracy at which active-set polishing is attempted.
const POLISH_TRIGGER: f64 = 1e-3;
const POLISH_REFINEMENTS: usize = 25;
// Iterations between residual and certificate checks.
const CHECK_INTERVAL: usize = 5;

/// Problem after Ruiz equilibration: `x = D x̄`, `z̄ = E z`, `ȳ = c E⁻¹ y`.
struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Tiny norms are treated as 1, large ones capped.
fn limit_norm(norm: f64) -> f64 {
    if norm < 1e-4 {
        1.0
    } else {
        norm.min(1e4)
    }
}

fn equilibrate(p: &DMatrix<f64>, q: &DVector<f64>, a: &DMatrix<f64>, l: &DVector<f64>, u: &DVector<f64>, iters: usize) -> Scaled {
    let (n, m) = (q.len(), l.len());
    let mut p = p.clone();
    let mut q = q.clone();
    let mut a = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut c = 1.0;
    for _ in 0..iters {
        let dv = DVector::from_fn(n, |j, _| {
            let pc = p.column(j).amax();
            let ac = if m > 0 { a.column(j).amax() } else { 0.0 };
            1.0 / limit_norm(pc.max(ac)).sqrt()
        });
        let ev = DVector::from_fn(m, |i, _| 1.0 / limit_norm(a.row(i).amax()).sqrt());
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dv[i] * dv[j];
            }
            for i in 0..m {
                a[(i, j)] *= ev[i] * dv[j];
            }
            q[j] *= dv[j];
        }
        d.component_mul_assign(&dv);
        e.component_mul_assign(&ev);

        let mean_col = if n > 0 { (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64 } else { 1.0 };
        let gamma = 1.0 / limit_norm(mean_col.max(inf_norm(&q)));
        p *= gamma;
        q *= gamma;
        c *= gamma;
    }
    let l = l.component_mul(&e);
    let u = u.component_mul(&e);
    Scaled { p, q, a, l, u, d, e, c }
}

fn rho_vector(l: &DVector<f64>, u: &DVector<f64>, open: &[(bool, bool)], rho: f64) -> DVector<f64> {
    DVector::from_fn(l.len(), |i, _| {
        if open[i].0 && open[i].1 {
            RHO_MIN
        } else if (u[i] - l[i]).abs() <= 1e-12 * (1.0 + u[i].abs()) {
            RHO_EQ_SCALE * rho
        } else {
            rho
        }
    })
}

fn factor(p: &DMatrix<f64>, a: &DMatrix<f64>, rho: &DVector<f64>, sigma: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = p.nrows();
    let mut k = p + DMatrix::identity(n, n) * sigma;
    if a.nrows() > 0 {
        let mut ra = a.clone();
        for (i, mut row) in ra.row_iter_mut().enumerate() {
            row *= rho[i];
        }
        k += a.transpose() * ra;
    }
    Cholesky::new(k)
}

struct Residuals {
    prim: f64,
    dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

/// Unscaled residuals of a scaled iterate.
fn residuals(s: &Scaled, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Residuals {
    let ax = &s.a * x;
    let px = &s.p * x;
    let aty = s.a.transpose() * y;
    let inv_e = s.e.map(|v| 1.0 / v);
    let inv_d = s.d.map(|v| 1.0 / v);
    let prim = inf_norm(&(&ax - z).component_mul(&inv_e));
    let dual = inf_norm(&(&px + &s.q + &aty).component_mul(&inv_d)) / s.c;
    let prim_scale = inf_norm(&ax.component_mul(&inv_e)).max(inf_norm(&z.component_mul(&inv_e)));
    let dual_scale = inf_norm(&px.component_mul(&inv_d))
        .max(inf_norm(&aty.component_mul(&inv_d)))
        .max(inf_norm(&s.q.component_mul(&inv_d)))
        / s.c;
    Residuals { prim, dual, prim_scale, dual_scale }
}

fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(l[i], u[i]))
}

fn support(l: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (0..w.len()).map(|i| if w[i] > 0.0 { u[i] * w[i] } else if w[i] < 0.0 { l[i] * w[i] } else { 0.0 }).sum()
}

/// Primal infeasibility certificate test on a dual direction, in the
/// equilibrated space. `open` marks rows whose lower/upper bound is infinite.
///
/// A Farkas certificate needs `Aᵀw = 0` and a negative support value. The
/// ADMM direction only satisfies the first condition approximately, so when
/// its support is clearly negative it is also projected onto `ker Aᵀ` over
/// its own row support and the projected vector is tested exactly.
fn certifies_infeasible(a: &DMatrix<f64>, l: &DVector<f64>, u: &DVector<f64>, open: &[(bool, bool)], dy: &DVector<f64>, eps: f64) -> bool {
    let sign_ok = |i: usize, v: f64| !((open[i].1 && v > 0.0) || (open[i].0 && v < 0.0));
    let dy = DVector::from_fn(dy.len(), |i, _| if sign_ok(i, dy[i]) { dy[i] } else { 0.0 });
    let norm = inf_norm(&dy);
    if norm < 1e-12 {
        return false;
    }
    let sup = support(l, u, &dy);
    if sup > -eps * norm {
        return false;
    }
    if inf_norm(&(a.transpose() * &dy)) <= eps * norm {
        return true;
    }
    let rows: Vec<usize> = (0..dy.len()).filter(|&i| dy[i].abs() > 1e-3 * norm).collect();
    let n = a.ncols();
    let a_s = DMatrix::from_fn(rows.len(), n, |r, j| a[(rows[r], j)]);
    let w_s = DVector::from_fn(rows.len(), |r, _| dy[rows[r]]);
    let gram = a_s.transpose() * &a_s;
    let Some(coef) = gram.clone().pseudo_inverse(1e-12 * gram.amax().max(1e-300)).ok().map(|pinv| pinv * (a_s.transpose() * &w_s)) else {
        return false;
    };
    let w_s = &w_s - &a_s * coef;
    let mut w = DVector::zeros(dy.len());
    for (r, &i) in rows.iter().enumerate() {
        if w_s[r] != 0.0 && (!sign_ok(i, w_s[r]) || w_s[r].signum() != dy[i].signum()) {
            return false;
        }
        w[i] = w_s[r];
    }
    let wn = inf_norm(&w);
    let a_norm = a.amax().max(1e-300);
    wn > 0.0 && inf_norm(&(a.transpose() * &w)) <= 1e-9 * a_norm * wn && support(l, u, &w) <= -eps * wn
}

/// Outcome of an active-set polish, unscaled.
struct Polished {
    x: DVector<f64>,
    y: DVector<f64>,
    prim: f64,
    dual: f64,
}

/// Active-set guess from a scaled iterate: -1 lower active, +1 upper
/// active, 2 equality, 0 inactive.
fn guess_active(s: &Scaled, z: &DVector<f64>, y: &DVector<f64>) -> Vec<i8> {
    (0..s.l.len())
        .map(|i| {
            if (s.u[i] - s.l[i]).abs() <= 1e-12 * (1.0 + s.u[i].abs()) {
                2
            } else if z[i] - s.l[i] < -y[i] {
                -1
            } else if s.u[i] - z[i] < y[i] {
                1
            } else {
                0
            }
        })
        .collect()
}

/// Solve the scaled equality-constrained QP on `active`. Returns the scaled
/// primal and the full scaled multiplier vector.
fn solve_reduced(s: &Scaled, active: &[i8]) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (s.q.len(), s.l.len());
    let rows: Vec<usize> = (0..m).filter(|&i| active[i] != 0).collect();
    let dim = n + rows.len();
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&s.p);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&s.q));
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = s.a[(i, j)];
            kkt[(j, n + r)] = s.a[(i, j)];
        }
        rhs[n + r] = if active[i] == 1 { s.u[i] } else { s.l[i] };
    }
    let delta = 1e-10;
    let mut kreg = kkt.clone();
    for i in 0..n {
        kreg[(i, i)] += delta;
    }
    for i in n..dim {
        kreg[(i, i)] -= delta;
    }
    let lu = kreg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let r = &rhs - &kkt * &sol;
        if inf_norm(&r) <= 1e-15 * (1.0 + inf_norm(&rhs)) {
            break;
        }
        sol += lu.solve(&r)?;
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut ys = DVector::zeros(m);
    for (r, &i) in rows.iter().enumerate() {
        ys[i] = sol[n + r];
    }
    Some((sol.rows(0, n).into_owned(), ys))
}

/// Active-set polish: starting from the ADMM guess, repeatedly solve the
/// reduced KKT system, drop rows whose multiplier has the wrong sign and add
/// rows the reduced solution violates. Returns the first candidate that is
/// primal feasible with correctly signed multipliers, or the last candidate
/// if the refinement budget runs out.
fn polish(
    s: &Scaled,
    mut active: Vec<i8>,
    orig: (&DMatrix<f64>, &DVector<f64>, &DMatrix<f64>, &DVector<f64>, &DVector<f64>),
    tol: f64,
    refinements: usize,
) -> Option<Polished> {
    let (p0, q0, a0, l0, u0) = orig;
    let m = s.l.len();
    let mut last = None;
    for _ in 0..=refinements {
        // more active rows than variables means a degenerate guess; the
        // reduced system is singular and expensive, so leave it to ADMM
        if active.iter().filter(|&&a| a != 0).count() > s.q.len() {
            break;
        }
        let (xs, ys) = solve_reduced(s, &active)?;
        let x = xs.component_mul(&s.d);
        let y = ys.component_mul(&s.e) / s.c;
        let ax = a0 * &x;
        let prim = (0..m).map(|i| (l0[i] - ax[i]).max(ax[i] - u0[i]).max(0.0)).fold(0.0, f64::max);
        let dual = inf_norm(&(p0 * &x + q0 + a0.transpose() * &y));
        let sign_tol = tol * (1.0 + inf_norm(&y));
        let zs = &s.a * &xs;
        // one change per step: the worst wrong-signed multiplier leaves,
        // otherwise the worst violated row enters
        let wrong = (0..m)
            .filter_map(|i| match active[i] {
                -1 if y[i] > sign_tol => Some((i, y[i])),
                1 if y[i] < -sign_tol => Some((i, -y[i])),
                _ => None,
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let violated = (0..m)
            .filter(|&i| active[i] == 0)
            .filter_map(|i| {
                let scale = tol * (1.0 + zs[i].abs());
                if zs[i] < s.l[i] - scale {
                    Some((i, -1, s.l[i] - zs[i]))
                } else if zs[i] > s.u[i] + scale {
                    Some((i, 1, zs[i] - s.u[i]))
                } else {
                    None
                }
            })
            .max_by(|a, b| a.2.total_cmp(&b.2));
        let changed = if let Some((i, _)) = wrong {
            active[i] = 0;
            true
        } else if let Some((i, side, _)) = violated {
            active[i] = side;
            true
        } else {
            false
        };
        last = Some(Polished { x, y, prim, dual });
        if !changed {
            break;
        }
    }
    last
}

/// Solve a convex QP. `H` must be positive semidefinite and the problem
/// bounded below.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    let n = problem.n_vars();
    if n == 0 {
        return Err(Error::Dimension("problem has no variables".into()));
    }
    let (a0, l0, u0) = problem.stacked();
    let m = l0.len();
    let p0 = &problem.h;
    let q0 = &problem.f;

    if let Some(i) = (0..m).find(|&i| l0[i] > u0[i] || l0[i].is_nan() || u0[i].is_nan()) {
        return Ok(QpSolution {
            x: DVector::zeros(n),
            y: DVector::zeros(m),
            objective: f64::NAN,
            status: QpStatus::Infeasible,
            iterations: 0,
            primal_residual: l0[i] - u0[i],
            dual_residual: f64::NAN,
            rho: settings.rho,
            polished: false,
        });
    }
    let l_clip = l0.map(|v| v.max(-INF_BOUND));
    let u_clip = u0.map(|v| v.min(INF_BOUND));
    let open: Vec<(bool, bool)> = (0..m).map(|i| (l_clip[i] <= -INF_BOUND, u_clip[i] >= INF_BOUND)).collect();

    let s = equilibrate(p0, q0, &a0, &l_clip, &u_clip, settings.scaling_iters);
    let mut rho = settings.warm_start.as_ref().and_then(|w| w.rho).unwrap_or(settings.rho);
    let mut rho_vec = rho_vector(&s.l, &s.u, &open, rho);
    let mut chol = factor(&s.p, &s.a, &rho_vec, settings.sigma)
        .ok_or_else(|| Error::Dimension("KKT matrix is not positive definite".into()))?;

    let (mut x, mut y) = match &settings.warm_start {
        Some(w) if w.x.len() == n => {
            let x = w.x.component_div(&s.d);
            let y = match &w.y {
                Some(y) if y.len() == m => y.component_div(&s.e) * s.c,
                _ => DVector::zeros(m),
            };
            (x, y)
        }
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = project(&(&s.a * &x), &s.l, &s.u);

    let tol_ok = |r: &Residuals| {
        r.prim <= settings.eps_abs + settings.eps_rel * r.prim_scale
            && r.dual <= settings.eps_abs + settings.eps_rel * r.dual_scale
    };
    let mut last_polish_set: Option<Vec<i8>> = None;
    let dual_floor = inf_norm(q0).max(p0.amax()).max(1.0);
    let polish_ok = |p: &Polished| p.prim <= settings.eps_abs && p.dual <= settings.eps_abs.max(1e-10 * dual_floor);
    let mut best_polish: Option<Polished> = None;
    let alpha = settings.alpha;

    let finish = |x: DVector<f64>, y: DVector<f64>, status: QpStatus, it: usize, prim: f64, dual: f64, rho: f64, polished: bool| {
        let objective = problem.objective(&x);
        QpSolution { x, y, objective, status, iterations: it, primal_residual: prim, dual_residual: dual, rho, polished }
    };

    let mut y_check = y.clone();
    let mut rhs = DVector::zeros(n);
    let mut work = DVector::zeros(m);
    let mut z_tilde = DVector::zeros(m);
    for it in 1..=settings.max_iter {
        // x̃ = K⁻¹(σx − q + Aᵀ(ρz − y))
        work.copy_from(&z);
        work.component_mul_assign(&rho_vec);
        work -= &y;
        rhs.copy_from(&s.q);
        rhs.gemv_tr(1.0, &s.a, &work, -1.0);
        rhs.axpy(settings.sigma, &x, 1.0);
        chol.solve_mut(&mut rhs);
        z_tilde.gemv(1.0, &s.a, &rhs, 0.0);
        x.axpy(alpha, &rhs, 1.0 - alpha);
        for i in 0..m {
            let relaxed = alpha * z_tilde[i] + (1.0 - alpha) * z[i];
            let z_new = (relaxed + y[i] / rho_vec[i]).clamp(s.l[i], s.u[i]);
            y[i] += rho_vec[i] * (relaxed - z_new);
            z[i] = z_new;
        }
        if !(it == 1 || it % CHECK_INTERVAL == 0 || it == settings.max_iter) {
            continue;
        }

        let res = residuals(&s, &x, &z, &y);
        let converged = tol_ok(&res);
        let near = res.prim <= POLISH_TRIGGER * (1.0 + res.prim_scale) && res.dual <= POLISH_TRIGGER * (1.0 + res.dual_scale);

        let periodic = settings.adaptive_rho_interval > 0 && it % settings.adaptive_rho_interval == 0;
        if settings.polish && (near || converged || periodic) {
            let set = guess_active(&s, &z, &y);
            if last_polish_set.as_ref() != Some(&set) {
                if let Some(pol) = polish(&s, set.clone(), (p0, q0, &a0, &l0, &u0), settings.eps_abs, POLISH_REFINEMENTS) {
                    if polish_ok(&pol) {
                        return Ok(finish(pol.x, pol.y, QpStatus::Solved, it, pol.prim, pol.dual, rho, true));
                    }
                    if best_polish.as_ref().is_none_or(|b| pol.prim.max(pol.dual) < b.prim.max(b.dual)) {
                        best_polish = Some(pol);
                    }
                }
                last_polish_set = Some(set);
            }
        }
        if converged {
            let xu = x.component_mul(&s.d);
            let yu = y.component_mul(&s.e) / s.c;
            return Ok(finish(xu, yu, QpStatus::Solved, it, res.prim, res.dual, rho, false));
        }

        let dy = &y - &y_check;
        y_check.copy_from(&y);
        if certifies_infeasible(&s.a, &s.l, &s.u, &open, &dy, settings.eps_prim_inf) {
            let xu = x.component_mul(&s.d);
            let yu = y.component_mul(&s.e) / s.c;
            return Ok(finish(xu, yu, QpStatus::Infeasible, it, res.prim, res.dual, rho, false));
        }

        if settings.adaptive_rho_interval > 0 && it % settings.adaptive_rho_interval == 0 && m > 0 {
            let ax = &s.a * &x;
            let px = &s.p * &x;
            let aty = s.a.transpose() * &y;
            let prim_n = inf_norm(&(&ax - &z)) / inf_norm(&ax).max(inf_norm(&z)).max(1e-12);
            let dual_n = inf_norm(&(&px + &s.q + &aty))
                / inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&s.q)).max(1e-12);
            let candidate = (rho * (prim_n / dual_n.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if candidate.is_finite() && (candidate > 5.0 * rho || candidate < 0.2 * rho) {
                rho = candidate;
                rho_vec = rho_vector(&s.l, &s.u, &open, rho);
                if let Some(c) = factor(&s.p, &s.a, &rho_vec, settings.sigma) {
                    chol = c;
                }
            }
        }
    }

    let res = residuals(&s, &x, &z, &y);
    if let Some(pol) = best_polish.filter(|p| p.prim.max(p.dual) < res.prim.max(res.dual)) {
        return Ok(finish(pol.x, pol.y, QpStatus::MaxIter, settings.max_iter, pol.prim, pol.dual, rho, true));
    }
    let xu = x.component_mul(&s.d);
    let yu = y.component_mul(&s.e) / s.c;
    Ok(finish(xu, yu, QpStatus::MaxIter, settings.max_iter, res.prim, res.dual, rho, false))
}
