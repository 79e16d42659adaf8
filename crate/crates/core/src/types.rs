//! Value types shared by every stage of the planner.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Declared body dimensions of a robot, in meters.
///
/// One entry describes a sphere (radius), two a cylinder (radius, height)
/// and three a cuboid. Only the planar footprint matters to the planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeSpec {
    dims: Vec<f64>,
}

impl SizeSpec {
    pub fn new(dims: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::invalid(
                "size",
                format!("expected 1 to 3 dimensions, got {}", dims.len()),
            ));
        }
        if let Some((i, d)) = dims.iter().enumerate().find(|(_, d)| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::invalid(format!("size[{i}]"), format!("must be positive, got {d}")));
        }
        Ok(Self { dims })
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(vec![radius]).expect("sphere radius must be positive")
    }

    pub fn dims(&self) -> &[f64] {
        &self.dims
    }

    pub fn max_dim(&self) -> f64 {
        self.dims.iter().copied().fold(0.0, f64::max)
    }

    /// Radius of the rotation-invariant footprint used for erosion and
    /// ground-truth collision checks.
    ///
    /// Circle models use their radius; the cuboid model uses the half side of
    /// its bounding square, `√2·max(dims)`.
    pub fn footprint_radius(&self) -> f64 {
        match self.dims.len() {
            1 => self.dims[0],
            2 => self.max_dim(),
            _ => std::f64::consts::SQRT_2 * self.max_dim(),
        }
    }
}

/// Time-stamped kinematic state broadcast by each robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub robot_id: u32,
    pub stamp: f64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub size: SizeSpec,
}

impl RobotState {
    pub fn at_rest(robot_id: u32, stamp: f64, position: Vec2, size: SizeSpec) -> Self {
        Self {
            robot_id,
            stamp,
            position,
            velocity: Vec2::zeros(),
            acceleration: Vec2::zeros(),
            size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stamp.is_finite() && self.stamp >= 0.0) {
            return Err(Error::invalid("stamp", "must be finite and non-negative"));
        }
        let finite = |v: &Vec2| v.iter().all(|c| c.is_finite());
        if !finite(&self.position) {
            return Err(Error::invalid("position", "must be finite"));
        }
        if !finite(&self.velocity) {
            return Err(Error::invalid("velocity", "must be finite"));
        }
        if !finite(&self.acceleration) {
            return Err(Error::invalid("acceleration", "must be finite"));
        }
        Ok(())
    }
}

/// A time-stamped pose the trajectory must pass through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub stamp: f64,
    pub position: Vec2,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y) || !min.iter().chain(max.iter()).all(|c| c.is_finite()) {
            return Err(Error::invalid("bounds", "min must be strictly below max and finite"));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: &Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }
}

/// Circular obstacle primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleCircle {
    pub center: Vec2,
    pub radius: f64,
}

impl ObstacleCircle {
    pub fn new(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("center", "must be finite"));
        }
        Ok(Self { center, radius })
    }
}
