//! Range-scan segmentation and circular obstacle extraction.
//!
//! A scan is cut into runs of consecutive returns; each run is one obstacle
//! and is summarized by a circle that contains all of its projected points.

use std::ops::RangeInclusive;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ObstacleCircle, Vec2};

/// Sentinel for a beam with no reflection.
pub const NO_RETURN: f64 = f64::INFINITY;

/// A planar range scan.
///
/// Beam `i` points along `ego_heading + angle_min + i * angle_increment`
/// in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub ranges: Vec<f64>,
    pub max_range: f64,
    pub stamp: f64,
    pub ego_position: Vec2,
    pub ego_heading: f64,
}

impl RangeScan {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_increment.is_finite() && self.angle_increment > 0.0) {
            return Err(Error::invalid("angle_increment", "must be positive"));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::invalid("max_range", "must be positive"));
        }
        for (i, &r) in self.ranges.iter().enumerate() {
            if r.is_finite() && !(r > 0.0 && r <= self.max_range) {
                return Err(Error::invalid(format!("ranges[{i}]"), format!("{r} outside (0, max_range]")));
            }
            if r.is_nan() {
                return Err(Error::invalid(format!("ranges[{i}]"), "NaN range"));
            }
        }
        Ok(())
    }

    /// World-frame direction of beam `i`.
    pub fn beam_angle(&self, i: usize) -> f64 {
        self.ego_heading + self.angle_min + i as f64 * self.angle_increment
    }

    pub fn has_return(&self, i: usize) -> bool {
        self.ranges[i].is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Added to every fitted radius, meters.
    pub inflation_margin: f64,
    /// Radius given to single-return clusters, meters.
    pub point_radius_floor: f64,
    /// Clusters spanning more than this angle are split, radians.
    pub max_cluster_angle: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            inflation_margin: 0.0,
            point_radius_floor: 0.05,
            max_cluster_angle: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// World position of a single return.
pub fn project_return(range: f64, beam_angle: f64, ego_position: &Vec2) -> Result<Vec2> {
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::invalid("range", format!("must be finite and positive, got {range}")));
    }
    if !beam_angle.is_finite() || !ego_position.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("beam_angle", "non-finite input"));
    }
    Ok(Vec2::new(
        range * beam_angle.cos() + ego_position.x,
        range * beam_angle.sin() + ego_position.y,
    ))
}

/// Maximal runs of consecutive finite returns, in scan order.
pub fn segment_scan(scan: &RangeScan) -> Vec<RangeInclusive<usize>> {
    let mut clusters = Vec::new();
    let mut start = None;
    for (i, r) in scan.ranges.iter().enumerate() {
        match (r.is_finite(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                clusters.push(s..=i - 1);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        clusters.push(s..=scan.ranges.len() - 1);
    }
    clusters
}

/// Recursively split clusters whose angular extent exceeds `max_angle`.
///
/// The cut goes at the interior local range minimum closest to the middle of
/// the run, or at the middle when the ranges are monotone.
pub fn split_long_clusters(
    scan: &RangeScan,
    clusters: Vec<RangeInclusive<usize>>,
    max_angle: f64,
) -> Vec<RangeInclusive<usize>> {
    let mut out = Vec::with_capacity(clusters.len());
    let mut stack: Vec<RangeInclusive<usize>> = clusters.into_iter().rev().collect();
    while let Some(c) = stack.pop() {
        let (s, e) = (*c.start(), *c.end());
        let extent = (e - s) as f64 * scan.angle_increment;
        if extent <= max_angle || e - s < 2 {
            out.push(c);
            continue;
        }
        let mid = (s + e) / 2;
        let r = &scan.ranges;
        let cut = (s + 1..e)
            .filter(|&i| r[i] <= r[i - 1] && r[i] <= r[i + 1])
            .min_by_key(|&i| i.abs_diff(mid))
            .filter(|&i| i > s + 1 && i + 1 < e)
            .unwrap_or(mid);
        // left half keeps the cut point
        stack.push(cut + 1..=e);
        stack.push(s..=cut);
    }
    out
}

/// Extract one circle per (split) cluster.
pub fn scan_to_obstacles(scan: &RangeScan, cfg: &PerceptionConfig) -> Result<Vec<ObstacleCircle>> {
    scan.validate()?;
    let rotated = starting_after_gap(scan);
    let scan = rotated.as_ref().unwrap_or(scan);
    let clusters = split_long_clusters(scan, segment_scan(scan), cfg.max_cluster_angle);
    let mut out = Vec::with_capacity(clusters.len());
    for c in clusters {
        let points = c
            .map(|i| project_return(scan.ranges[i], scan.beam_angle(i), &scan.ego_position))
            .collect::<Result<Vec<_>>>()?;
        out.push(fit_cluster(&points, &scan.ego_position, cfg));
    }
    Ok(out)
}

/// A full-turn scan whose first and last beams both hit would cut the object
/// across the seam in two. Restart such a scan just after a missing return.
fn starting_after_gap(scan: &RangeScan) -> Option<RangeScan> {
    let n = scan.ranges.len();
    let full_turn = n as f64 * scan.angle_increment >= std::f64::consts::TAU - 1e-9;
    if !full_turn || n < 2 || !scan.has_return(0) || !scan.has_return(n - 1) {
        return None;
    }
    let start = (0..n).find(|&i| !scan.has_return(i))? + 1;
    let mut ranges = scan.ranges.clone();
    ranges.rotate_left(start);
    Some(RangeScan {
        angle_min: scan.angle_min + start as f64 * scan.angle_increment,
        ranges,
        ..scan.clone()
    })
}

/// Circle that contains every point of a cluster.
pub fn fit_cluster(points: &[Vec2], ego: &Vec2, cfg: &PerceptionConfig) -> ObstacleCircle {
    if points.len() == 1 {
        return ObstacleCircle {
            center: points[0],
            radius: cfg.point_radius_floor.max(cfg.inflation_margin),
        };
    }
    let mec = minimal_enclosing_circle(points);
    let (center, fitted) = match least_squares_circle(points) {
        Some((c, r)) if arc_fit_plausible(points, ego, &c, r, mec.1) => (c, r),
        _ => mec,
    };
    let reach = points.iter().map(|p| (p - center).norm()).fold(fitted, f64::max);
    let radius = (reach + cfg.inflation_margin).max(f64::MIN_POSITIVE);
    ObstacleCircle { center, radius }
}

// Least-squares circles are only trusted for convex arcs seen from outside:
// the center must lie beyond the points and the circle may not be much
// larger than the enclosing one (straight walls fit near-infinite circles).
const MAX_FIT_TO_MEC_RATIO: f64 = 2.0;

fn arc_fit_plausible(points: &[Vec2], ego: &Vec2, center: &Vec2, radius: f64, mec_radius: f64) -> bool {
    if points.len() < 3 || !(radius.is_finite() && radius > 0.0) {
        return false;
    }
    if radius > MAX_FIT_TO_MEC_RATIO * mec_radius.max(1e-9) {
        return false;
    }
    let centroid = points.iter().sum::<Vec2>() / points.len() as f64;
    (center - ego).norm() > (centroid - ego).norm()
}

/// Smallest circle containing all points (Welzl-style incremental
/// construction over a fixed-seed shuffle).
pub fn minimal_enclosing_circle(points: &[Vec2]) -> (Vec2, f64) {
    assert!(!points.is_empty(), "minimal_enclosing_circle of no points");
    let mut pts = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed));
    let inside = |c: &(Vec2, f64), p: &Vec2| (p - c.0).norm() <= c.1 * (1.0 + 1e-12) + 1e-12;

    let mut circle = (pts[0], 0.0);
    for i in 1..pts.len() {
        if inside(&circle, &pts[i]) {
            continue;
        }
        circle = (pts[i], 0.0);
        for j in 0..i {
            if inside(&circle, &pts[j]) {
                continue;
            }
            circle = circle_two(&pts[i], &pts[j]);
            for k in 0..j {
                if !inside(&circle, &pts[k]) {
                    circle = circle_three(&pts[i], &pts[j], &pts[k]);
                }
            }
        }
    }
    circle
}

fn circle_two(a: &Vec2, b: &Vec2) -> (Vec2, f64) {
    let c = 0.5 * (a + b);
    (c, 0.5 * (a - b).norm())
}

fn circle_three(a: &Vec2, b: &Vec2, c: &Vec2) -> (Vec2, f64) {
    let (bx, by) = (b.x - a.x, b.y - a.y);
    let (cx, cy) = (c.x - a.x, c.y - a.y);
    let d = 2.0 * (bx * cy - by * cx);
    let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
    if d.abs() <= 1e-14 * scale {
        // collinear: the widest pair spans the circle
        return [circle_two(a, b), circle_two(a, c), circle_two(b, c)]
            .into_iter()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    let center = Vec2::new(a.x + ux, a.y + uy);
    let r = [a, b, c].iter().map(|p| (*p - center).norm()).fold(0.0, f64::max);
    (center, r)
}

/// Algebraic (Kåsa) circle fit refined by Gauss-Newton on the geometric
/// residuals `‖p - c‖ - r`.
pub fn least_squares_circle(points: &[Vec2]) -> Option<(Vec2, f64)> {
    if points.len() < 3 {
        return None;
    }
    let origin = points.iter().sum::<Vec2>() / points.len() as f64;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for p in points {
        let q = p - origin;
        let row = Vector3::new(q.x, q.y, 1.0);
        ata += row * row.transpose();
        atb += row * -(q.x * q.x + q.y * q.y);
    }
    let sol = ata.lu().solve(&atb)?;
    let mut center = Vec2::new(-0.5 * sol.x, -0.5 * sol.y);
    let r2 = center.norm_squared() - sol.z;
    if !(r2.is_finite() && r2 > 0.0) {
        return None;
    }
    let mut radius = r2.sqrt();

    for _ in 0..20 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for p in points {
            let q = p - origin;
            let diff = q - center;
            let dist = diff.norm();
            if dist < 1e-12 {
                return None;
            }
            let res = dist - radius;
            let j = Vector3::new(-diff.x / dist, -diff.y / dist, -1.0);
            jtj += j * j.transpose();
            jtr += j * res;
        }
        let step = jtj.lu().solve(&(-jtr))?;
        center += Vec2::new(step.x, step.y);
        radius += step.z;
        if step.norm() < 1e-13 * (1.0 + radius) {
            break;
        }
    }
    let center = center + origin;
    (center.iter().all(|c| c.is_finite()) && radius.is_finite() && radius > 0.0).then_some((center, radius))
}
