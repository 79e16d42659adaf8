use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::constraints::assemble_with_limits;
use super::cost::{collision_cost_terms, derivative_cost_hessian, endpoint_cost};
use super::PolyTrajectory;
use crate::config::{DynLimits, PlannerConfig};
use crate::qp::{solve_qp, QpProblem, QpSettings, QpStatus, WarmStart};
use crate::saferegion::{contains, SafePolyhedron};
use crate::types::{ObstacleCircle, RobotState, Vec2, Waypoint};

/// Accepted constraint violation for a returned trajectory.
const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Optimal,
    ReusedPrevious,
    RelaxedDynamics,
    Failed,
}

impl PlanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanStatus::Optimal => "optimal",
            PlanStatus::ReusedPrevious => "reused_previous",
            PlanStatus::RelaxedDynamics => "relaxed_dynamics",
            PlanStatus::Failed => "failed",
        }
    }
}

impl fmt::Display for PlanStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    /// Solver iterations summed over all attempts.
    pub iterations: usize,
    /// Wall time of the whole `plan` call, seconds.
    pub runtime: f64,
    /// QP solves attempted (nominal, relaxed).
    pub attempts: usize,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub trajectory: PolyTrajectory,
    pub status: PlanStatus,
    pub stats: SolveStats,
}

/// Everything one planning cycle reads.
#[derive(Debug, Clone, Copy)]
pub struct PlanInput<'a> {
    pub state: &'a RobotState,
    /// Target of the soft endpoint cost at the end of the horizon.
    pub goal: Vec2,
    /// Hard position constraints; those beyond the horizon are ignored.
    pub waypoints: &'a [Waypoint],
    /// Regions for the ego center, already shrunk by the ego footprint.
    pub regions: &'a [SafePolyhedron],
    pub obstacles: &'a [ObstacleCircle],
    pub now: f64,
}

/// Receding-horizon planner for one robot. Keeps the previous trajectory
/// for linearization, reuse and warm starts.
#[derive(Debug, Clone)]
pub struct Planner {
    pub cfg: PlannerConfig,
    pub qp_settings: QpSettings,
    previous: Option<PolyTrajectory>,
    last_status: Option<PlanStatus>,
    warm: Option<WarmStart>,
}

enum Attempt {
    Solved(PolyTrajectory),
    Rejected(String),
}

impl Planner {
    pub fn new(cfg: PlannerConfig) -> Self {
        Self { cfg, qp_settings: QpSettings::default(), previous: None, last_status: None, warm: None }
    }

    pub fn previous(&self) -> Option<&PolyTrajectory> {
        self.previous.as_ref()
    }

    pub fn last_status(&self) -> Option<PlanStatus> {
        self.last_status
    }

    /// Seed the previous trajectory, e.g. when resuming.
    pub fn set_previous(&mut self, traj: Option<PolyTrajectory>) {
        self.previous = traj;
        self.warm = None;
    }

    pub fn plan(&mut self, input: &PlanInput<'_>) -> PlanOutcome {
        let started = Instant::now();
        let mut stats = SolveStats::default();
        let (trajectory, status) = self.plan_inner(input, &mut stats);
        stats.runtime = started.elapsed().as_secs_f64();
        match status {
            PlanStatus::Optimal | PlanStatus::RelaxedDynamics | PlanStatus::Failed => {
                self.previous = Some(trajectory.clone());
            }
            PlanStatus::ReusedPrevious => {}
        }
        self.last_status = Some(status);
        PlanOutcome { trajectory, status, stats }
    }

    fn plan_inner(&mut self, input: &PlanInput<'_>, stats: &mut SolveStats) -> (PolyTrajectory, PlanStatus) {
        let cfg = &self.cfg;
        let stop = PolyTrajectory::stationary(input.now, cfg.horizon, cfg.poly_degree, input.state.position);
        if let Err(e) = cfg.validate().and_then(|_| input.state.validate()) {
            stats.diagnostic = Some(e.to_string());
            return (stop, PlanStatus::Failed);
        }

        let nominal = self.attempt(input, &cfg.dyn_limits.clone(), stats);
        match nominal {
            Attempt::Solved(traj) => return (traj, PlanStatus::Optimal),
            Attempt::Rejected(msg) => stats.diagnostic = Some(format!("nominal: {msg}")),
        }

        if let Some(prev) = &self.previous {
            if self.last_status != Some(PlanStatus::ReusedPrevious) && trajectory_inside(prev, input.regions) {
                return (prev.clone(), PlanStatus::ReusedPrevious);
            }
        }

        let relaxed_limits = self.cfg.dyn_limits.relaxed(self.cfg.relax_factor);
        match self.attempt(input, &relaxed_limits, stats) {
            Attempt::Solved(traj) => (traj, PlanStatus::RelaxedDynamics),
            Attempt::Rejected(msg) => {
                let prior = stats.diagnostic.take().unwrap_or_default();
                stats.diagnostic = Some(format!("{prior}; relaxed: {msg}"));
                (stop, PlanStatus::Failed)
            }
        }
    }

    fn attempt(&mut self, input: &PlanInput<'_>, limits: &DynLimits, stats: &mut SolveStats) -> Attempt {
        if let Some(region) = input.regions.iter().find(|r| r.is_infeasible()) {
            return Attempt::Rejected(format!(
                "region at t={:.3} penetrated by peers {:?}",
                region.stamp, region.penetrated_by
            ));
        }
        let cfg = &self.cfg;
        let linearization = match &self.previous {
            Some(prev) => prev.clone(),
            None => PolyTrajectory::straight_line(
                input.now,
                cfg.horizon,
                cfg.poly_degree,
                input.state.position,
                input.goal,
            ),
        };
        let (h, f) = objective(cfg, &linearization, input);
        let cons = assemble_with_limits(input.state, input.waypoints, input.regions, cfg, limits, input.now);
        let problem = match QpProblem::new(h, f, cons.a_eq, cons.b_eq, cons.a_in, cons.lb, cons.ub) {
            Ok(p) => p,
            Err(e) => return Attempt::Rejected(e.to_string()),
        };

        let Some(reduced) = Reduced::new(&problem, cfg.n_coeffs(), cfg.horizon) else {
            return Attempt::Rejected("equality constraints are inconsistent".into());
        };

        if reduced.problem.n_vars() == 0 {
            // equalities pin every coefficient
            let x = reduced.to_full(&DVector::zeros(0));
            let violation = problem.max_violation(&x);
            if violation > FEASIBILITY_TOL {
                return Attempt::Rejected(format!("constraint violation {violation:.2e}"));
            }
            return Attempt::Solved(PolyTrajectory::new(input.now, cfg.horizon, cfg.poly_degree, x));
        }

        let mut settings = self.qp_settings.clone();
        let x0 = reduced.to_reduced(&linearization.reparametrized(input.now, cfg.horizon).coeffs);
        settings.warm_start = Some(match &self.warm {
            Some(w) => WarmStart {
                x: x0,
                y: w.y.clone().filter(|y| y.len() == reduced.problem.n_rows()),
                rho: w.rho,
            },
            None => WarmStart { x: x0, y: None, rho: None },
        });
        stats.attempts += 1;
        let sol = match solve_qp(&reduced.problem, &settings) {
            Ok(s) => s,
            Err(e) => return Attempt::Rejected(e.to_string()),
        };
        stats.iterations += sol.iterations;
        if sol.status != QpStatus::Solved {
            return Attempt::Rejected(format!("qp {:?} after {} iterations", sol.status, sol.iterations));
        }
        let x = reduced.to_full(&sol.x);
        let violation = problem.max_violation(&x);
        if violation > FEASIBILITY_TOL {
            return Attempt::Rejected(format!("constraint violation {violation:.2e}"));
        }
        self.warm = Some(sol.warm_start());
        Attempt::Solved(PolyTrajectory::new(input.now, cfg.horizon, cfg.poly_degree, x))
    }
}

/// The planning QP restated over the free directions of its equality
/// constraints. Coefficients are first normalized to unit horizon
/// (`x = S β`, `S_jj = T^-k` for power `k`), then `β = β_p + N z` with `N` an
/// orthonormal null-space basis of the scaled equality block. The reduced
/// problem has only inequality rows and is far better conditioned.
struct Reduced {
    problem: QpProblem,
    scale: DVector<f64>,
    particular: DVector<f64>,
    null: DMatrix<f64>,
}

impl Reduced {
    fn new(full: &QpProblem, n_coeffs: usize, horizon: f64) -> Option<Self> {
        let n = full.n_vars();
        let scale = DVector::from_fn(n, |i, _| horizon.powi(-((i % n_coeffs) as i32)));
        let a_eq = &full.a_eq * DMatrix::from_diagonal(&scale);
        let (particular, null) = if a_eq.nrows() == 0 {
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            let eig = (a_eq.transpose() * &a_eq).symmetric_eigen();
            let top = eig.eigenvalues.amax();
            let cutoff = 1e-10 * top.max(1e-300);
            let (range, kernel): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| eig.eigenvalues[i] > cutoff);
            let atb = a_eq.transpose() * &full.b_eq;
            let mut particular = DVector::zeros(n);
            for &i in &range {
                let v = eig.eigenvectors.column(i);
                particular += v * (v.dot(&atb) / eig.eigenvalues[i]);
            }
            let residual = (&a_eq * &particular - &full.b_eq).amax();
            if residual > 1e-9 * (1.0 + full.b_eq.amax()) {
                return None;
            }
            let null = DMatrix::from_fn(n, kernel.len(), |r, c| eig.eigenvectors[(r, kernel[c])]);
            (particular, null)
        };
        let sn = DMatrix::from_diagonal(&scale) * &null;
        let x_p = particular.component_mul(&scale);
        let h = sn.transpose() * &full.h * &sn;
        let f = sn.transpose() * (&full.h * &x_p + &full.f);
        let a_in = &full.a_in * &sn;
        let shift = &full.a_in * &x_p;
        let problem = QpProblem::new(
            h,
            f,
            DMatrix::zeros(0, sn.ncols()),
            DVector::zeros(0),
            a_in,
            &full.lb - &shift,
            &full.ub - &shift,
        )
        .ok()?;
        Some(Self { problem, scale, particular, null })
    }

    fn to_full(&self, z: &DVector<f64>) -> DVector<f64> {
        (&self.particular + &self.null * z).component_mul(&self.scale)
    }

    fn to_reduced(&self, x: &DVector<f64>) -> DVector<f64> {
        self.null.transpose() * (x.component_div(&self.scale) - &self.particular)
    }
}

/// One-shot plan with no memory of earlier cycles beyond `prev`.
pub fn plan(input: &PlanInput<'_>, prev: Option<PolyTrajectory>, cfg: &PlannerConfig) -> PlanOutcome {
    let mut planner = Planner::new(cfg.clone());
    planner.set_previous(prev);
    planner.plan(input)
}

/// `H_net`, `F_net` in the solver's `½xᵀPx + qᵀx` form.
fn objective(cfg: &PlannerConfig, linearization: &PolyTrajectory, input: &PlanInput<'_>) -> (DMatrix<f64>, DVector<f64>) {
    let dim = 2 * cfg.n_coeffs();
    let mut h = derivative_cost_hessian(cfg, 0.0, cfg.horizon);
    let (h_fin, f_fin) = endpoint_cost(&input.goal, cfg.horizon, cfg.q_final, cfg.poly_degree);
    h += h_fin;
    let mut f = f_fin;
    if !input.obstacles.is_empty() {
        let terms = collision_cost_terms(linearization, input.obstacles, cfg, input.now, cfg.horizon);
        h += terms.h;
        f += terms.f;
    }
    for i in 0..dim {
        h[(i, i)] += cfg.regularization;
    }
    (h * 2.0, f)
}

fn trajectory_inside(traj: &PolyTrajectory, regions: &[SafePolyhedron]) -> bool {
    regions
        .iter()
        .all(|r| !r.is_infeasible() && contains(r, &traj.evaluate(r.stamp, 0), FEASIBILITY_TOL))
}
