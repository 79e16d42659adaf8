//! Convex safe regions: at each sample time the ego is confined to the
//! intersection of one supporting half-plane per peer footprint and the
//! workspace box.

use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::prediction::{FootprintRegion, PeerPrediction};
use crate::trajopt::PolyTrajectory;
use crate::types::{Aabb, SizeSpec, Vec2};

/// `{p : normal · p <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Vec2, offset: f64) -> Self {
        let n = normal.norm();
        Self { normal: normal / n, offset: offset / n }
    }

    pub fn violation(&self, p: &Vec2) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafePolyhedron {
    pub stamp: f64,
    pub halfplanes: Vec<HalfPlane>,
    /// Peers whose region contained the ego anchor; set means no sound
    /// region could be built for this sample.
    pub penetrated_by: Vec<u32>,
}

impl SafePolyhedron {
    pub fn is_infeasible(&self) -> bool {
        !self.penetrated_by.is_empty()
    }
}

/// Half-planes of the workspace box.
pub fn box_halfplanes(workspace: &Aabb) -> [HalfPlane; 4] {
    [
        HalfPlane::new(Vec2::new(1.0, 0.0), workspace.max.x),
        HalfPlane::new(Vec2::new(-1.0, 0.0), -workspace.min.x),
        HalfPlane::new(Vec2::new(0.0, 1.0), workspace.max.y),
        HalfPlane::new(Vec2::new(0.0, -1.0), -workspace.min.y),
    ]
}

/// Supporting half-plane of `peer` facing `ego_point`.
///
/// The normal points from the ego toward the peer center and the offset is
/// the minimum of `normal · p` over the peer region, so the plane touches the
/// region and the whole region lies on the far side.
pub fn supporting_halfplane(ego_point: &Vec2, peer: &FootprintRegion, peer_id: u32) -> Result<HalfPlane> {
    let d = peer.center - ego_point;
    let dist = d.norm();
    if peer.contains(ego_point) || dist <= 1e-12 {
        return Err(Error::EgoPenetration { peer_id });
    }
    let normal = d / dist;
    Ok(HalfPlane { normal, offset: peer.support_min(&normal) })
}

/// Region for one sample time. Peers whose region does not reach the
/// workspace are ignored.
pub fn safe_polyhedron(
    stamp: f64,
    ego_point: &Vec2,
    peers: &[(u32, FootprintRegion)],
    workspace: &Aabb,
) -> SafePolyhedron {
    let mut halfplanes = Vec::with_capacity(peers.len() + 4);
    let mut penetrated_by = Vec::new();
    for (id, peer) in peers {
        if workspace.distance(&peer.center) > peer.outer_radius() {
            continue;
        }
        match supporting_halfplane(ego_point, peer, *id) {
            Ok(h) => halfplanes.push(h),
            Err(_) => penetrated_by.push(*id),
        }
    }
    halfplanes.extend(box_halfplanes(workspace));
    SafePolyhedron { stamp, halfplanes, penetrated_by }
}

/// Shrunk regions at `now + k·τ` for the whole horizon.
///
/// Each peer plane is anchored at the ego's previously planned position for
/// that time. Where that point lies inside the peer's predicted region the
/// current position is tried instead; only when both are inside is the
/// sample flagged.
pub fn horizon_regions(
    cfg: &PlannerConfig,
    now: f64,
    ego_position: &Vec2,
    ego_size: &SizeSpec,
    previous: Option<&PolyTrajectory>,
    peers: &[PeerPrediction],
    workspace: &Aabb,
) -> Vec<SafePolyhedron> {
    (1..=cfg.n_samples())
        .map(|k| {
            let stamp = now + k as f64 * cfg.tau;
            let planned = previous.map(|p| p.evaluate(stamp, 0));
            let mut halfplanes = Vec::with_capacity(peers.len() + 4);
            let mut penetrated_by = Vec::new();
            for peer in peers {
                let Some((_, region)) = peer.samples.get(k - 1) else { continue };
                if workspace.distance(&region.center) > region.outer_radius() {
                    continue;
                }
                let plane = planned
                    .iter()
                    .chain(std::iter::once(ego_position))
                    .find_map(|anchor| supporting_halfplane(anchor, region, peer.robot_id).ok());
                match plane {
                    Some(h) => halfplanes.push(h),
                    None => penetrated_by.push(peer.robot_id),
                }
            }
            halfplanes.extend(box_halfplanes(workspace));
            shrink_by_ego(&SafePolyhedron { stamp, halfplanes, penetrated_by }, ego_size)
        })
        .collect()
}

/// Erode the region by the ego's rotation-invariant footprint radius so that
/// constraining the ego center keeps its whole body inside.
pub fn shrink_by_ego(poly: &SafePolyhedron, ego: &SizeSpec) -> SafePolyhedron {
    shrink_by_radius(poly, ego.footprint_radius())
}

pub fn shrink_by_radius(poly: &SafePolyhedron, radius: f64) -> SafePolyhedron {
    SafePolyhedron {
        halfplanes: poly
            .halfplanes
            .iter()
            .map(|h| HalfPlane { offset: h.offset - radius, ..*h })
            .collect(),
        ..poly.clone()
    }
}

pub fn contains(poly: &SafePolyhedron, point: &Vec2, tol: f64) -> bool {
    poly.halfplanes.iter().all(|h| h.violation(point) <= tol)
}
