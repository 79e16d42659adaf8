//! Planner configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-derivative box limits applied on every axis. Index `k` bounds the
/// `(k+1)`-th derivative, so `lower[0]`/`upper[0]` are velocity limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DynLimits {
    pub fn symmetric(bounds: &[f64]) -> Self {
        Self {
            lower: bounds.iter().map(|b| -b).collect(),
            upper: bounds.to_vec(),
        }
    }

    /// Widen every interval about its midpoint by `factor`.
    pub fn relaxed(&self, factor: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * factor;
                (mid - half, mid + half)
            })
            .unzip();
        Self { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Planning horizon `t_h`, seconds.
    pub horizon: f64,
    /// Prediction and region discretization `τ`, seconds.
    pub tau: f64,
    /// Replanning period, seconds.
    pub replan_period: f64,
    /// `n`: the cost penalizes derivatives `n-1` and `n`.
    pub deriv_order: usize,
    /// Must equal `2n - 1`.
    pub poly_degree: usize,
    /// Weight on the squared `(n-1)`-th derivative.
    pub q_lower_deriv: f64,
    /// Weight on the squared `n`-th derivative.
    pub q_deriv: f64,
    pub q_final: f64,
    pub q_obs: f64,
    /// Obstacle clearance threshold `ρ`, meters.
    pub obstacle_threshold: f64,
    /// Collision-cost sharpness `K_p`.
    pub smoothness: f64,
    pub dyn_limits: DynLimits,
    pub n_dyn_samples: usize,
    /// Use `½·a·Δt²` in peer prediction instead of `a·Δt²`.
    pub half_accel: bool,
    /// Peer states older than this are flagged stale.
    pub staleness_limit: f64,
    /// Factor applied to the dynamic limits in the second fallback step.
    pub relax_factor: f64,
    /// Floor on the speed weight of the collision cost, m/s.
    pub min_collision_speed: f64,
    /// Floor on the obstacle surface distance, meters.
    pub min_surface_distance: f64,
    /// Extra clearance added to every peer footprint, meters.
    pub peer_margin: f64,
    /// Diagonal added to the objective Hessian.
    pub regularization: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        default_config()
    }
}

/// Planner defaults: a 3 s horizon sampled every 0.1 s, replanned at 25 Hz,
/// with degree-5 polynomials and a 0.75 m obstacle threshold.
pub fn default_config() -> PlannerConfig {
    PlannerConfig {
        horizon: 3.0,
        tau: 0.1,
        replan_period: 0.04,
        deriv_order: 3,
        poly_degree: 5,
        q_lower_deriv: 1.0,
        q_deriv: 1.0,
        q_final: 100.0,
        q_obs: 10.0,
        obstacle_threshold: 0.75,
        smoothness: 10.0,
        dyn_limits: DynLimits::symmetric(&[1.0, 1.5, 6.0]),
        n_dyn_samples: 16,
        half_accel: false,
        staleness_limit: 1.0,
        relax_factor: 1.5,
        min_collision_speed: 0.1,
        min_surface_distance: 1e-3,
        peer_margin: 0.0,
        regularization: 1e-8,
    }
}

impl PlannerConfig {
    /// Number of prediction/region samples, `t_h / τ`.
    pub fn n_samples(&self) -> usize {
        (self.horizon / self.tau).round() as usize
    }

    /// Coefficients per axis.
    pub fn n_coeffs(&self) -> usize {
        self.poly_degree + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be non-negative, got {v}")))
            }
        };
        positive("horizon", self.horizon)?;
        positive("tau", self.tau)?;
        positive("replan_period", self.replan_period)?;
        let ratio = self.horizon / self.tau;
        if (ratio - ratio.round()).abs() * self.tau > 1e-9 {
            return Err(Error::invalid("tau", format!("must divide horizon {} exactly", self.horizon)));
        }
        if self.deriv_order == 0 {
            return Err(Error::invalid("deriv_order", "must be at least 1"));
        }
        if self.poly_degree != 2 * self.deriv_order - 1 {
            return Err(Error::invalid(
                "poly_degree",
                format!("must equal 2*deriv_order-1 = {}", 2 * self.deriv_order - 1),
            ));
        }
        non_negative("q_lower_deriv", self.q_lower_deriv)?;
        non_negative("q_deriv", self.q_deriv)?;
        non_negative("q_final", self.q_final)?;
        non_negative("q_obs", self.q_obs)?;
        non_negative("obstacle_threshold", self.obstacle_threshold)?;
        positive("smoothness", self.smoothness)?;
        let lim = &self.dyn_limits;
        if lim.lower.len() != self.deriv_order || lim.upper.len() != self.deriv_order {
            return Err(Error::invalid(
                "dyn_limits",
                format!("expected {} lower and upper bounds (one per derivative order)", self.deriv_order),
            ));
        }
        for (k, (lo, hi)) in lim.lower.iter().zip(&lim.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid(
                    format!("dyn_limits.lower[{k}]"),
                    format!("lower bound {lo} exceeds upper bound {hi}"),
                ));
            }
        }
        if self.n_dyn_samples == 0 {
            return Err(Error::invalid("n_dyn_samples", "must be at least 1"));
        }
        positive("staleness_limit", self.staleness_limit)?;
        if !(self.relax_factor.is_finite() && self.relax_factor >= 1.0) {
            return Err(Error::invalid("relax_factor", "must be at least 1"));
        }
        non_negative("min_collision_speed", self.min_collision_speed)?;
        positive("min_surface_distance", self.min_surface_distance)?;
        non_negative("peer_margin", self.peer_margin)?;
        non_negative("regularization", self.regularization)?;
        Ok(())
    }
}
