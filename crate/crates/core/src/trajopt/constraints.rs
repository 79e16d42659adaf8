use nalgebra::{DMatrix, DVector};

use super::basis_row;
use crate::config::{DynLimits, PlannerConfig};
use crate::saferegion::SafePolyhedron;
use crate::types::{RobotState, Waypoint};

const TIME_EPS: f64 = 1e-9;

/// Linear constraints of one planning cycle, in trajectory-relative time.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    /// Leading rows of `a_in` that come from safe regions; the rest are
    /// derivative bounds.
    pub n_region_rows: usize,
    /// Waypoints beyond the horizon, left for later cycles.
    pub deferred: Vec<Waypoint>,
}

/// `n_dyn_samples` uniform times over `[0, t_h]`, both ends included.
pub fn dyn_sample_times(cfg: &PlannerConfig) -> Vec<f64> {
    let n = cfg.n_dyn_samples;
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| cfg.horizon * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Initial-state and waypoint equalities, region half-planes and derivative
/// bounds for a plan starting at `now`.
///
/// Derivatives up to acceleration are pinned to `state0`. At `t = 0` the
/// bounds of pinned derivatives are widened to contain the current value so
/// that a state slightly outside the limits does not make every later cycle
/// infeasible.
pub fn assemble_constraints(
    state0: &RobotState,
    waypoints: &[Waypoint],
    regions: &[SafePolyhedron],
    cfg: &PlannerConfig,
    now: f64,
) -> Constraints {
    assemble_with_limits(state0, waypoints, regions, cfg, &cfg.dyn_limits, now)
}

pub(crate) fn assemble_with_limits(
    state0: &RobotState,
    waypoints: &[Waypoint],
    regions: &[SafePolyhedron],
    cfg: &PlannerConfig,
    limits: &DynLimits,
    now: f64,
) -> Constraints {
    let degree = cfg.poly_degree;
    let nc = degree + 1;
    let dim = 2 * nc;
    let pinned = cfg.deriv_order.min(3);
    let initial = [state0.position, state0.velocity, state0.acceleration];

    let mut eq_rows: Vec<(DVector<f64>, usize, f64)> = Vec::new();
    for k in 0..pinned.min(degree + 1) {
        let r = basis_row(0.0, degree, k);
        eq_rows.push((r.clone(), 0, initial[k].x));
        eq_rows.push((r, 1, initial[k].y));
    }
    let mut deferred = Vec::new();
    for wp in waypoints {
        let t_rel = wp.stamp - now;
        if t_rel <= TIME_EPS {
            continue;
        }
        if t_rel > cfg.horizon + TIME_EPS {
            deferred.push(*wp);
            continue;
        }
        let r = basis_row(t_rel, degree, 0);
        eq_rows.push((r.clone(), 0, wp.position.x));
        eq_rows.push((r, 1, wp.position.y));
    }
    let mut a_eq = DMatrix::zeros(eq_rows.len(), dim);
    let mut b_eq = DVector::zeros(eq_rows.len());
    for (i, (r, axis, v)) in eq_rows.iter().enumerate() {
        a_eq.view_mut((i, axis * nc), (1, nc)).copy_from(&r.transpose());
        b_eq[i] = *v;
    }

    let mut in_rows: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    for region in regions {
        let t_rel = region.stamp - now;
        if t_rel < -TIME_EPS || t_rel > cfg.horizon + TIME_EPS {
            continue;
        }
        let r = basis_row(t_rel, degree, 0);
        for h in &region.halfplanes {
            let mut row = DVector::zeros(dim);
            row.rows_mut(0, nc).copy_from(&(&r * h.normal.x));
            row.rows_mut(nc, nc).copy_from(&(&r * h.normal.y));
            in_rows.push((row, f64::NEG_INFINITY, h.offset));
        }
    }
    let n_region_rows = in_rows.len();

    let times = dyn_sample_times(cfg);
    for k in 1..=cfg.deriv_order.min(degree) {
        let (Some(&lo), Some(&hi)) = (limits.lower.get(k - 1), limits.upper.get(k - 1)) else {
            continue;
        };
        for &t in &times {
            let r = basis_row(t, degree, k);
            for axis in 0..2 {
                let (mut lo, mut hi) = (lo, hi);
                if t == 0.0 && k < pinned {
                    let v = initial[k][axis];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let mut row = DVector::zeros(dim);
                row.rows_mut(axis * nc, nc).copy_from(&r);
                in_rows.push((row, lo, hi));
            }
        }
    }
    let mut a_in = DMatrix::zeros(in_rows.len(), dim);
    let mut lb = DVector::zeros(in_rows.len());
    let mut ub = DVector::zeros(in_rows.len());
    for (i, (row, lo, hi)) in in_rows.iter().enumerate() {
        a_in.set_row(i, &row.transpose());
        lb[i] = *lo;
        ub[i] = *hi;
    }

    Constraints { a_eq, b_eq, a_in, lb, ub, n_region_rows, deferred }
}
