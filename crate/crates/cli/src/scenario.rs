//! Scenario files: strict TOML schema, validation and spawn sampling.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use mrtp::bus::BusConfig;
use mrtp::perception::PerceptionConfig;
use mrtp::simworld::{LidarSpec, Segment, World};
use mrtp::{Aabb, DynLimits, ObstacleCircle, PlannerConfig, SizeSpec, Vec2, Waypoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use toml::Spanned;

/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("intersection_4", include_str!("../scenarios/intersection_4.toml")),
    ("intersection_8", include_str!("../scenarios/intersection_8.toml")),
    ("corridor_swap_2", include_str!("../scenarios/corridor_swap_2.toml")),
    ("open_field_10", include_str!("../scenarios/open_field_10.toml")),
    ("static_obstacles_1", include_str!("../scenarios/static_obstacles_1.toml")),
];

const SPAWN_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    /// Dotted key path, e.g. `robots[1].size[0]`.
    pub path: String,
    /// 1-based line in the source file, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.path.is_empty(), self.line) {
            (true, Some(line)) => write!(f, "line {line}: {}", self.message),
            (true, None) => f.write_str(&self.message),
            (false, Some(line)) => write!(f, "{} (line {line}): {}", self.path, self.message),
            (false, None) => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    duration: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_goal_tolerance")]
    goal_tolerance: f64,
    world: WorldFile,
    #[serde(default)]
    planner: PlannerConfig,
    #[serde(default)]
    perception: PerceptionConfig,
    #[serde(default)]
    bus: BusConfig,
    #[serde(default)]
    lidar: LidarSpec,
    robots: Vec<Spanned<RobotFile>>,
}

fn default_goal_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    bounds: BoxFile,
    #[serde(default)]
    walls: Vec<Spanned<WallFile>>,
    #[serde(default)]
    discs: Vec<Spanned<DiscFile>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallFile {
    from: [f64; 2],
    to: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscFile {
    center: [f64; 2],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesiredFile {
    t: f64,
    position: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    id: u32,
    start: [f64; 2],
    #[serde(default)]
    heading: f64,
    #[serde(default)]
    velocity: [f64; 2],
    size: Vec<f64>,
    desired: Vec<DesiredFile>,
    dyn_limits: Option<DynLimits>,
    spawn_zone: Option<BoxFile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSetup {
    pub id: u32,
    pub start: Vec2,
    pub heading: f64,
    pub velocity: Vec2,
    pub size: SizeSpec,
    /// Time-stamped desired poses; the last one is the goal.
    pub desired: Vec<Waypoint>,
    pub dyn_limits: Option<DynLimits>,
    /// When set, `start` is resampled uniformly in this box per seed.
    pub spawn_zone: Option<Aabb>,
}

impl RobotSetup {
    pub fn goal(&self) -> Vec2 {
        self.desired.last().expect("validated non-empty").position
    }

    /// Desired poses before the goal; these are hard waypoints.
    pub fn waypoints(&self) -> &[Waypoint] {
        &self.desired[..self.desired.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub seed: u64,
    pub goal_tolerance: f64,
    pub world: World,
    pub planner: PlannerConfig,
    pub perception: PerceptionConfig,
    pub bus: BusConfig,
    pub lidar: LidarSpec,
    pub robots: Vec<RobotSetup>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn vec2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

/// Parse and validate scenario text. `name` is used when the file has none.
pub fn parse_scenario(src: &str, name: &str) -> Result<Scenario, ScenarioError> {
    let de = toml::Deserializer::parse(src).map_err(|e| ScenarioError {
        path: String::new(),
        line: e.span().map(|s| line_of(src, s.start)),
        message: e.message().to_string(),
    })?;
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError {
            path: if path == "." { String::new() } else { path },
            line: inner.span().map(|s| line_of(src, s.start)),
            message: inner.message().to_string(),
        }
    })?;
    build(file, src, name)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
    match std::fs::read_to_string(path) {
        Ok(src) => parse_scenario(&src, &stem),
        Err(e) => match bundled(&path.to_string_lossy()) {
            Some(src) => parse_scenario(src, &stem),
            None => Err(ScenarioError {
                path: String::new(),
                line: None,
                message: format!("cannot read {}: {e}", path.display()),
            }),
        },
    }
}

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

fn build(file: ScenarioFile, src: &str, default_name: &str) -> Result<Scenario, ScenarioError> {
    let at = |path: &str, line: Option<usize>| {
        let path = path.to_string();
        move |e: mrtp::Error| {
            let (field, message) = match e {
                mrtp::Error::Invalid { field, reason } => (field, reason),
                other => (String::new(), other.to_string()),
            };
            let path = match (path.is_empty(), field.is_empty()) {
                (true, _) => field,
                (false, true) => path.clone(),
                (false, false) if field.starts_with('[') => format!("{path}{field}"),
                (false, false) => format!("{path}.{field}"),
            };
            ScenarioError { path, line, message }
        }
    };
    let invalid = |path: &str, line: Option<usize>, message: String| ScenarioError {
        path: path.to_string(),
        line,
        message,
    };

    if !(file.duration.is_finite() && file.duration > 0.0) {
        return Err(invalid("duration", None, format!("must be positive, got {}", file.duration)));
    }
    if !(file.goal_tolerance.is_finite() && file.goal_tolerance > 0.0) {
        return Err(invalid("goal_tolerance", None, "must be positive".into()));
    }

    let bounds = Aabb::new(vec2(file.world.bounds.min), vec2(file.world.bounds.max))
        .map_err(at("world.bounds", None))?;
    let mut walls = Vec::new();
    for (i, w) in file.world.walls.iter().enumerate() {
        let line = Some(line_of(src, w.span().start));
        let (a, b) = (vec2(w.get_ref().from), vec2(w.get_ref().to));
        if !a.iter().chain(b.iter()).all(|c| c.is_finite()) {
            return Err(invalid(&format!("world.walls[{i}]"), line, "endpoints must be finite".into()));
        }
        walls.push(Segment { a, b });
    }
    let mut discs = Vec::new();
    for (i, d) in file.world.discs.iter().enumerate() {
        let line = Some(line_of(src, d.span().start));
        let disc = ObstacleCircle::new(vec2(d.get_ref().center), d.get_ref().radius)
            .map_err(at(&format!("world.discs[{i}]"), line))?;
        discs.push(disc);
    }
    let world = World { walls, discs, bounds };

    file.planner.validate().map_err(at("planner", None))?;
    file.bus.validate().map_err(at("bus", None))?;
    file.lidar.validate().map_err(at("lidar", None))?;
    let p = &file.perception;
    for (key, v, strict) in [
        ("inflation_margin", p.inflation_margin, false),
        ("point_radius_floor", p.point_radius_floor, false),
        ("max_cluster_angle", p.max_cluster_angle, true),
    ] {
        if !(v.is_finite() && (v > 0.0 || (!strict && v == 0.0))) {
            return Err(invalid(&format!("perception.{key}"), None, format!("invalid value {v}")));
        }
    }

    if file.robots.is_empty() {
        return Err(invalid("robots", None, "at least one robot is required".into()));
    }
    let mut robots = Vec::new();
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, spanned) in file.robots.iter().enumerate() {
        let line = Some(line_of(src, spanned.span().start));
        let r = spanned.get_ref();
        let path = format!("robots[{i}]");
        if let Some(first) = seen.insert(r.id, i) {
            return Err(invalid(
                &format!("{path}.id"),
                line,
                format!("duplicate robot id {} (also robots[{first}])", r.id),
            ));
        }
        let size = SizeSpec::new(r.size.clone()).map_err(at(&path, line))?;
        let start = vec2(r.start);
        let velocity = vec2(r.velocity);
        if !start.iter().chain(velocity.iter()).all(|c| c.is_finite()) || !r.heading.is_finite() {
            return Err(invalid(&path, line, "start, heading and velocity must be finite".into()));
        }
        if !bounds.contains(&start) {
            return Err(invalid(&format!("{path}.start"), line, "outside world bounds".into()));
        }
        if r.desired.is_empty() {
            return Err(invalid(&format!("{path}.desired"), line, "at least one desired pose is required".into()));
        }
        let mut desired = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (k, d) in r.desired.iter().enumerate() {
            let dpath = format!("{path}.desired[{k}]");
            if !(d.t.is_finite() && d.t >= 0.0 && d.t <= file.duration) {
                return Err(invalid(&format!("{dpath}.t"), line, format!("stamp {} outside [0, duration]", d.t)));
            }
            if d.t <= last {
                return Err(invalid(&format!("{dpath}.t"), line, "stamps must increase".into()));
            }
            last = d.t;
            let position = vec2(d.position);
            if !bounds.contains(&position) {
                return Err(invalid(&format!("{dpath}.position"), line, "outside world bounds".into()));
            }
            desired.push(Waypoint { stamp: d.t, position });
        }
        if let Some(limits) = &r.dyn_limits {
            let cfg = PlannerConfig { dyn_limits: limits.clone(), ..file.planner.clone() };
            cfg.validate().map_err(at(&path, line))?;
        }
        let spawn_zone = match &r.spawn_zone {
            Some(z) => {
                let zone = Aabb::new(vec2(z.min), vec2(z.max)).map_err(at(&format!("{path}.spawn_zone"), line))?;
                if !(bounds.contains(&zone.min) && bounds.contains(&zone.max)) {
                    return Err(invalid(&format!("{path}.spawn_zone"), line, "outside world bounds".into()));
                }
                Some(zone)
            }
            None => None,
        };
        robots.push(RobotSetup {
            id: r.id,
            start,
            heading: r.heading,
            velocity,
            size,
            desired,
            dyn_limits: r.dyn_limits.clone(),
            spawn_zone,
        });
    }

    for (i, a) in robots.iter().enumerate() {
        if a.spawn_zone.is_some() {
            continue;
        }
        for b in robots[i + 1..].iter().filter(|b| b.spawn_zone.is_none()) {
            let gap = (a.start - b.start).norm() - a.size.footprint_radius() - b.size.footprint_radius();
            if gap <= 0.0 {
                return Err(invalid(
                    &format!("robots[{i}].start"),
                    None,
                    format!("robots {} and {} overlap at the start", a.id, b.id),
                ));
            }
        }
    }

    Ok(Scenario {
        name: file.name.unwrap_or_else(|| default_name.to_string()),
        duration: file.duration,
        seed: file.seed,
        goal_tolerance: file.goal_tolerance,
        world,
        planner: file.planner,
        perception: file.perception,
        bus: file.bus,
        lidar: file.lidar,
        robots,
    })
}

impl Scenario {
    /// Start positions for `seed`. Robots with spawn zones are placed by
    /// rejection sampling against robots already placed and the world's
    /// obstacles; if no free spot turns up the last draw is kept and the
    /// overlap surfaces as a collision.
    pub fn sample_starts(&self, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut placed: Vec<(Vec2, f64)> = Vec::new();
        for robot in &self.robots {
            let radius = robot.size.footprint_radius();
            let start = match &robot.spawn_zone {
                None => robot.start,
                Some(zone) => {
                    let mut candidate = robot.start;
                    for _ in 0..SPAWN_ATTEMPTS {
                        candidate = Vec2::new(
                            rng.random_range(zone.min.x..=zone.max.x),
                            rng.random_range(zone.min.y..=zone.max.y),
                        );
                        if self.spot_is_free(&candidate, radius, &placed) {
                            break;
                        }
                    }
                    candidate
                }
            };
            placed.push((start, radius));
        }
        placed.into_iter().map(|(p, _)| p).collect()
    }

    fn spot_is_free(&self, p: &Vec2, radius: f64, placed: &[(Vec2, f64)]) -> bool {
        placed.iter().all(|(q, r)| (p - q).norm() > radius + r)
            && self.world.discs.iter().all(|d| (p - d.center).norm() > radius + d.radius)
            && self.world.walls.iter().all(|w| w.distance(p) > radius)
    }

    /// Planner configuration for one robot, with its own limits applied.
    pub fn planner_for(&self, robot: &RobotSetup) -> PlannerConfig {
        match &robot.dyn_limits {
            Some(limits) => PlannerConfig { dyn_limits: limits.clone(), ..self.planner.clone() },
            None => self.planner.clone(),
        }
    }
}
