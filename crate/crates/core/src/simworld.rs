//! Deterministic 2D kinematic world: wall segments, disc obstacles, lidar
//! raycasting and ground-truth collision checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{RangeScan, NO_RETURN};
use crate::trajopt::{PlanOutcome, PlanStatus};
use crate::types::{Aabb, ObstacleCircle, RobotState, Vec2};

/// Velocity factor applied per step to a robot whose plan failed.
const STOP_DECAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn distance(&self, p: &Vec2) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (self.a + ab * s - p).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub walls: Vec<Segment>,
    pub discs: Vec<ObstacleCircle>,
    pub bounds: Aabb,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.walls.iter().enumerate() {
            if !w.a.iter().chain(w.b.iter()).all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("walls[{i}]"), "non-finite endpoint"));
            }
        }
        for (i, d) in self.discs.iter().enumerate() {
            if !(d.center.iter().all(|c| c.is_finite()) && d.radius.is_finite() && d.radius > 0.0) {
                return Err(Error::invalid(format!("discs[{i}]"), "center must be finite and radius positive"));
            }
        }
        Aabb::new(self.bounds.min, self.bounds.max)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub beams: usize,
    /// Field of view, radians. A full turn starts at the heading; narrower
    /// fields are centered on it.
    pub fov: f64,
    pub max_range: f64,
    /// Scans per second.
    pub rate: f64,
    /// Range resolution, meters.
    pub quantization: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self { beams: 360, fov: std::f64::consts::TAU, max_range: 3.5, rate: 5.0, quantization: 1e-3 }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beams < 1 {
            return Err(Error::invalid("beams", "must be at least 1"));
        }
        if !(self.fov > 0.0 && self.fov <= std::f64::consts::TAU + 1e-9) {
            return Err(Error::invalid("fov", "must be in (0, 2π]"));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::invalid("max_range", "must be positive"));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid("rate", "must be positive"));
        }
        if !(self.quantization.is_finite() && self.quantization >= 0.0) {
            return Err(Error::invalid("quantization", "must be non-negative"));
        }
        Ok(())
    }

    fn full_turn(&self) -> bool {
        self.fov >= std::f64::consts::TAU - 1e-9
    }

    pub fn angle_min(&self) -> f64 {
        if self.full_turn() || self.beams == 1 {
            0.0
        } else {
            -0.5 * self.fov
        }
    }

    pub fn angle_increment(&self) -> f64 {
        if self.full_turn() {
            self.fov / self.beams as f64
        } else if self.beams == 1 {
            self.fov
        } else {
            self.fov / (self.beams - 1) as f64
        }
    }
}

/// Distance along the unit ray `origin + s·dir` to the circle, if hit.
pub fn ray_circle(origin: &Vec2, dir: &Vec2, circle: &ObstacleCircle) -> Option<f64> {
    let m = origin - circle.center;
    let b = m.dot(dir);
    let c = m.norm_squared() - circle.radius * circle.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let near = -b - root;
    if near >= 0.0 {
        return Some(near);
    }
    let far = -b + root;
    (far >= 0.0).then_some(far)
}

/// Distance along the unit ray to the segment, if hit.
pub fn ray_segment(origin: &Vec2, dir: &Vec2, seg: &Segment) -> Option<f64> {
    let e = seg.b - seg.a;
    let cross = |u: &Vec2, v: &Vec2| u.x * v.y - u.y * v.x;
    let denom = cross(dir, &e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = seg.a - origin;
    let s = cross(&w, &e) / denom;
    let u = cross(&w, dir) / denom;
    (s >= 0.0 && (0.0..=1.0).contains(&u)).then_some(s)
}

/// Synthesize a scan from `position` facing `heading`. Ranges are rounded
/// to the lidar's quantization; beams without a hit within range report
/// [`NO_RETURN`].
pub fn raycast_scan(world: &World, position: Vec2, heading: f64, spec: &LidarSpec, stamp: f64) -> RangeScan {
    let angle_min = spec.angle_min();
    let angle_increment = spec.angle_increment();
    let ranges = (0..spec.beams)
        .map(|i| {
            let a = heading + angle_min + i as f64 * angle_increment;
            let dir = Vec2::new(a.cos(), a.sin());
            let hit = world
                .discs
                .iter()
                .filter_map(|d| ray_circle(&position, &dir, d))
                .chain(world.walls.iter().filter_map(|w| ray_segment(&position, &dir, w)))
                .fold(f64::INFINITY, f64::min);
            let hit = if spec.quantization > 0.0 { (hit / spec.quantization).round() * spec.quantization } else { hit };
            if hit > 0.0 && hit <= spec.max_range {
                hit
            } else {
                NO_RETURN
            }
        })
        .collect();
    RangeScan {
        angle_min,
        angle_increment,
        ranges,
        max_range: spec.max_range,
        stamp,
        ego_position: position,
        ego_heading: heading,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CollisionKind {
    RobotRobot,
    RobotObstacle,
    RobotWall,
}

impl CollisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CollisionKind::RobotRobot => "robot-robot",
            CollisionKind::RobotObstacle => "robot-obstacle",
            CollisionKind::RobotWall => "robot-wall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub time: f64,
    pub kind: CollisionKind,
    /// Robot id (the smaller one for robot-robot contacts).
    pub robot: u32,
    /// Other robot id, or disc / wall index.
    pub other: u32,
    pub penetration: f64,
}

/// A robot body for collision checks: id, center and rotation-invariant
/// radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub id: u32,
    pub position: Vec2,
    pub radius: f64,
}

/// All contacts at `time`, ordered by kind, robot and other id so the result
/// does not depend on the order of `bodies`.
pub fn check_collisions(bodies: &[Body], world: &World, time: f64) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for (i, a) in bodies.iter().enumerate() {
        for b in &bodies[i + 1..] {
            let depth = a.radius + b.radius - (a.position - b.position).norm();
            if depth > 0.0 {
                events.push(CollisionEvent {
                    time,
                    kind: CollisionKind::RobotRobot,
                    robot: a.id.min(b.id),
                    other: a.id.max(b.id),
                    penetration: depth,
                });
            }
        }
        for (k, disc) in world.discs.iter().enumerate() {
            let depth = a.radius + disc.radius - (a.position - disc.center).norm();
            if depth > 0.0 {
                events.push(CollisionEvent {
                    time,
                    kind: CollisionKind::RobotObstacle,
                    robot: a.id,
                    other: k as u32,
                    penetration: depth,
                });
            }
        }
        for (k, wall) in world.walls.iter().enumerate() {
            let depth = a.radius - wall.distance(&a.position);
            if depth > 0.0 {
                events.push(CollisionEvent {
                    time,
                    kind: CollisionKind::RobotWall,
                    robot: a.id,
                    other: k as u32,
                    penetration: depth,
                });
            }
        }
    }
    events.sort_by(|x, y| (x.kind, x.robot, x.other).cmp(&(y.kind, y.robot, y.other)));
    events
}

/// Advance one robot by `dt` along its plan. A robot whose plan failed
/// holds its position while its reported velocity decays.
pub fn step_robot(state: &RobotState, outcome: &PlanOutcome, dt: f64) -> RobotState {
    let t = state.stamp + dt;
    if outcome.status == PlanStatus::Failed {
        return RobotState {
            stamp: t,
            velocity: if dt > 0.0 { state.velocity * STOP_DECAY } else { state.velocity },
            acceleration: Vec2::zeros(),
            ..state.clone()
        };
    }
    if dt == 0.0 {
        return state.clone();
    }
    let traj = &outcome.trajectory;
    RobotState {
        stamp: t,
        position: traj.evaluate(t, 0),
        velocity: traj.evaluate(t, 1),
        acceleration: traj.evaluate(t, 2),
        ..state.clone()
    }
}

/// Advance every robot; `outcomes[i]` belongs to `states[i]`.
pub fn step_world(states: &[RobotState], outcomes: &[PlanOutcome], dt: f64) -> Vec<RobotState> {
    states.iter().zip(outcomes).map(|(s, o)| step_robot(s, o, dt)).collect()
}
