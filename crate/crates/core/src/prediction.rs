//! Forward simulation of peer robots and footprint inflation.

use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::types::{RobotState, SizeSpec, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FootprintShape {
    Circle { radius: f64 },
    /// Axis-aligned square `center ± half_side`.
    Square { half_side: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintRegion {
    pub shape: FootprintShape,
    pub center: Vec2,
}

impl FootprintRegion {
    pub fn circle(center: Vec2, radius: f64) -> Self {
        Self { shape: FootprintShape::Circle { radius }, center }
    }

    pub fn square(center: Vec2, half_side: f64) -> Self {
        Self { shape: FootprintShape::Square { half_side }, center }
    }

    /// Grow the region by `margin` while keeping its shape.
    pub fn grown(&self, margin: f64) -> Self {
        let shape = match self.shape {
            FootprintShape::Circle { radius } => FootprintShape::Circle { radius: radius + margin },
            FootprintShape::Square { half_side } => FootprintShape::Square { half_side: half_side + margin },
        };
        Self { shape, ..*self }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        let d = p - self.center;
        match self.shape {
            FootprintShape::Circle { radius } => d.norm() <= radius,
            FootprintShape::Square { half_side } => d.x.abs() <= half_side && d.y.abs() <= half_side,
        }
    }

    /// Minimum of `normal · p` over the region.
    pub fn support_min(&self, normal: &Vec2) -> f64 {
        let c = normal.dot(&self.center);
        match self.shape {
            FootprintShape::Circle { radius } => c - radius * normal.norm(),
            FootprintShape::Square { half_side } => c - half_side * (normal.x.abs() + normal.y.abs()),
        }
    }

    /// Largest distance from the center to the boundary.
    pub fn outer_radius(&self) -> f64 {
        match self.shape {
            FootprintShape::Circle { radius } => radius,
            FootprintShape::Square { half_side } => half_side * std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerPrediction {
    pub robot_id: u32,
    /// Set when the source state was older than the staleness limit.
    pub stale: bool,
    pub samples: Vec<(f64, FootprintRegion)>,
}

/// Constant-acceleration extrapolation `P + v·Δt + a·Δt²`, or with a `½`
/// on the acceleration term when `half_accel` is set.
pub fn predict_position(state: &RobotState, t: f64, half_accel: bool) -> Result<Vec2> {
    if t < state.stamp {
        return Err(Error::TimeBeforeStamp { t, stamp: state.stamp });
    }
    let dt = t - state.stamp;
    let k = if half_accel { 0.5 } else { 1.0 };
    Ok(state.position + state.velocity * dt + state.acceleration * (k * dt * dt))
}

/// Rotation-invariant footprint for a declared size: three dimensions give
/// the square `P ± √2·max(dims)`, otherwise a circle of the largest planar
/// dimension.
pub fn inflate_footprint(position: Vec2, spec: &SizeSpec) -> Result<FootprintRegion> {
    let dims = spec.dims();
    match dims.len() {
        1 => Ok(FootprintRegion::circle(position, dims[0])),
        2 => Ok(FootprintRegion::circle(position, spec.max_dim())),
        3 => Ok(FootprintRegion::square(position, std::f64::consts::SQRT_2 * spec.max_dim())),
        _ => Err(Error::invalid("size", "expected 1 to 3 dimensions")),
    }
}

/// Footprints at `now + k·τ`, `k = 1..=t_h/τ`.
pub fn predict_horizon(state: &RobotState, cfg: &PlannerConfig, now: f64) -> Result<PeerPrediction> {
    if now < state.stamp {
        return Err(Error::TimeBeforeStamp { t: now, stamp: state.stamp });
    }
    let samples = (1..=cfg.n_samples())
        .map(|k| {
            let t = now + k as f64 * cfg.tau;
            let p = predict_position(state, t, cfg.half_accel)?;
            Ok((t, inflate_footprint(p, &state.size)?.grown(cfg.peer_margin)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeerPrediction {
        robot_id: state.robot_id,
        stale: now - state.stamp > cfg.staleness_limit,
        samples,
    })
}
