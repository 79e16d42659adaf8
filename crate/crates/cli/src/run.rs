//! The decentralized simulation loop and its reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mrtp::bus::Bus;
use mrtp::perception::scan_to_obstacles;
use mrtp::prediction::predict_horizon;
use mrtp::saferegion::horizon_regions;
use mrtp::simworld::{check_collisions, raycast_scan, step_robot, Body, CollisionEvent};
use mrtp::trajopt::{PlanInput, PlanOutcome, PlanStatus, Planner};
use mrtp::{ObstacleCircle, RobotState, Vec2, Waypoint};
use serde::Serialize;

use crate::plot::render_svg;
use crate::scenario::Scenario;

const TIME_EPS: f64 = 1e-9;
/// Speed under which a robot at its goal counts as settled.
const SETTLED_SPEED: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Collision,
    GoalTimeout,
    PlannerFailed,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Collision => "collision",
            FailureKind::GoalTimeout => "goal-timeout",
            FailureKind::PlannerFailed => "planner-failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotReport {
    pub id: u32,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub final_position: [f64; 2],
    /// Distance to the goal at the end of the run, meters.
    pub final_error: f64,
    pub reached_goal: bool,
    /// Time from which the robot stayed within tolerance of its goal.
    pub arrival_time: Option<f64>,
    /// `arrival_time` minus the goal's stamp, seconds.
    pub lateness: Option<f64>,
    pub status_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: String,
    pub robot: u32,
    pub other: u32,
    pub penetration: f64,
}

impl From<&CollisionEvent> for EventRecord {
    fn from(e: &CollisionEvent) -> Self {
        Self { time: e.time, kind: e.kind.as_str().to_string(), robot: e.robot, other: e.other, penetration: e.penetration }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleStats {
    pub time: f64,
    pub robot: u32,
    pub status: PlanStatus,
    pub attempts: usize,
    pub iterations: usize,
    /// Seconds.
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusTransition {
    pub time: f64,
    pub robot: u32,
    pub from: Option<PlanStatus>,
    pub to: PlanStatus,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveSummary {
    pub cycles: usize,
    pub median_runtime_ms: f64,
    pub p95_runtime_ms: f64,
    pub max_runtime_ms: f64,
    pub total_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub simulated_time: f64,
    pub success: bool,
    pub failure: Option<FailureKind>,
    pub goal_tolerance: f64,
    pub robots: Vec<RobotReport>,
    /// Contact onsets; a contact that persists is reported once.
    pub collisions: Vec<EventRecord>,
    /// Smallest `‖p_i - p_j‖ - r_i - r_j` seen, meters.
    pub min_pair_clearance: Option<f64>,
    pub solve: SolveSummary,
    #[serde(skip)]
    pub cycles: Vec<CycleStats>,
    #[serde(skip)]
    pub transitions: Vec<StatusTransition>,
}

/// Text logs of one run, byte-for-byte reproducible from (scenario, seed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLogs {
    pub trajectories_csv: String,
    pub events_csv: String,
    pub transitions_csv: String,
    /// Executed positions per robot, in scenario order.
    pub paths: Vec<Vec<Vec2>>,
}

struct Agent {
    id: u32,
    radius: f64,
    state: RobotState,
    heading: f64,
    planner: Planner,
    goal: Vec2,
    waypoints: Vec<Waypoint>,
    goal_stamp: f64,
    obstacles: Vec<ObstacleCircle>,
    last_status: Option<PlanStatus>,
    last_outside: Option<f64>,
    status_counts: BTreeMap<String, usize>,
}

/// Run `scenario` with `seed` (the scenario's own seed when `None`).
pub fn run(scenario: &Scenario, seed: Option<u64>) -> (RunReport, RunLogs) {
    let seed = seed.unwrap_or(scenario.seed);
    let dt = scenario.planner.replan_period;
    let n_steps = (scenario.duration / dt).round() as usize;
    let starts = scenario.sample_starts(seed);

    let mut agents: Vec<Agent> = scenario
        .robots
        .iter()
        .zip(&starts)
        .map(|(setup, start)| {
            let mut state = RobotState::at_rest(setup.id, 0.0, *start, setup.size.clone());
            state.velocity = setup.velocity;
            Agent {
                id: setup.id,
                radius: setup.size.footprint_radius(),
                state,
                heading: setup.heading,
                planner: Planner::new(scenario.planner_for(setup)),
                goal: setup.goal(),
                waypoints: setup.waypoints().to_vec(),
                goal_stamp: setup.desired.last().unwrap().stamp,
                obstacles: Vec::new(),
                last_status: None,
                last_outside: Some(0.0),
                status_counts: BTreeMap::new(),
            }
        })
        .collect();

    let mut bus_cfg = scenario.bus.clone();
    bus_cfg.seed = bus_cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(seed);
    let bus = Bus::new(bus_cfg, agents.iter().map(|a| a.id));

    let mut logs = RunLogs {
        trajectories_csv: String::from("time,id,x,y,vx,vy,status\n"),
        events_csv: String::from("time,kind,robot,other,penetration\n"),
        transitions_csv: String::from("time,id,from,to,diagnostic\n"),
        paths: agents.iter().map(|a| vec![a.state.position]).collect(),
    };
    let mut collisions: Vec<EventRecord> = Vec::new();
    let mut cycles = Vec::new();
    let mut transitions = Vec::new();
    let mut active_contacts = Vec::new();
    let mut min_clearance: Option<f64> = None;
    let mut planner_failures: BTreeMap<u32, usize> = BTreeMap::new();

    let record_contacts = |events: Vec<CollisionEvent>,
                           active: &mut Vec<(u8, u32, u32)>,
                           collisions: &mut Vec<EventRecord>,
                           csv: &mut String| {
        let now: Vec<(u8, u32, u32)> = events.iter().map(|e| (e.kind as u8, e.robot, e.other)).collect();
        for (e, key) in events.iter().zip(&now) {
            if !active.contains(key) {
                let rec = EventRecord::from(e);
                let _ = writeln!(
                    csv,
                    "{:.3},{},{},{},{:.6}",
                    rec.time, rec.kind, rec.robot, rec.other, rec.penetration
                );
                collisions.push(rec);
            }
        }
        *active = now;
    };

    let bodies = |agents: &[Agent]| -> Vec<Body> {
        agents.iter().map(|a| Body { id: a.id, position: a.state.position, radius: a.radius }).collect()
    };
    let update_clearance = |agents: &[Agent], min_clearance: &mut Option<f64>| {
        for (i, a) in agents.iter().enumerate() {
            for b in &agents[i + 1..] {
                let c = (a.state.position - b.state.position).norm() - a.radius - b.radius;
                *min_clearance = Some(min_clearance.map_or(c, |m: f64| m.min(c)));
            }
        }
    };

    record_contacts(
        check_collisions(&bodies(&agents), &scenario.world, 0.0),
        &mut active_contacts,
        &mut collisions,
        &mut logs.events_csv,
    );
    update_clearance(&agents, &mut min_clearance);

    let scan_period = 1.0 / scenario.lidar.rate;
    let mut next_broadcast = 0.0;
    let mut next_scan = 0.0;
    let mut simulated = 0.0;

    for step in 0..n_steps {
        let now = step as f64 * dt;

        if now + TIME_EPS >= next_broadcast {
            for a in &agents {
                let mut msg = a.state.clone();
                msg.stamp = now;
                bus.broadcast(&msg, now);
            }
            while next_broadcast <= now + TIME_EPS {
                next_broadcast += scenario.bus.broadcast_period;
            }
        }
        if now + TIME_EPS >= next_scan {
            for a in agents.iter_mut() {
                let scan = raycast_scan(&scenario.world, a.state.position, a.heading, &scenario.lidar, now);
                a.obstacles = scan_to_obstacles(&scan, &scenario.perception).unwrap_or_default();
            }
            while next_scan <= now + TIME_EPS {
                next_scan += scan_period;
            }
        }

        let mut outcomes: Vec<PlanOutcome> = Vec::with_capacity(agents.len());
        for a in agents.iter_mut() {
            let cfg = &a.planner.cfg;
            let peers: Vec<_> = bus
                .latest_states(a.id, now)
                .iter()
                .filter_map(|s| predict_horizon(s, cfg, now).ok())
                .collect();
            let regions = horizon_regions(
                cfg,
                now,
                &a.state.position,
                &a.state.size,
                a.planner.previous(),
                &peers,
                &scenario.world.bounds,
            );
            let mut state = a.state.clone();
            state.stamp = now;
            let input = PlanInput {
                state: &state,
                goal: a.goal,
                waypoints: &a.waypoints,
                regions: &regions,
                obstacles: &a.obstacles,
                now,
            };
            let outcome = a.planner.plan(&input);
            if outcome.status == PlanStatus::Failed {
                *planner_failures.entry(a.id).or_default() += 1;
            }
            *a.status_counts.entry(outcome.status.to_string()).or_default() += 1;
            if a.last_status != Some(outcome.status) {
                let diagnostic = outcome.stats.diagnostic.clone();
                let _ = writeln!(
                    logs.transitions_csv,
                    "{:.3},{},{},{},{}",
                    now,
                    a.id,
                    a.last_status.map_or("none", |s| s.as_str()),
                    outcome.status,
                    csv_field(diagnostic.as_deref().unwrap_or(""))
                );
                transitions.push(StatusTransition {
                    time: now,
                    robot: a.id,
                    from: a.last_status,
                    to: outcome.status,
                    diagnostic,
                });
                a.last_status = Some(outcome.status);
            }
            cycles.push(CycleStats {
                time: now,
                robot: a.id,
                status: outcome.status,
                attempts: outcome.stats.attempts,
                iterations: outcome.stats.iterations,
                runtime: outcome.stats.runtime,
            });
            let _ = writeln!(
                logs.trajectories_csv,
                "{:.3},{},{:.6},{:.6},{:.6},{:.6},{}",
                now,
                a.id,
                a.state.position.x,
                a.state.position.y,
                a.state.velocity.x,
                a.state.velocity.y,
                outcome.status
            );
            outcomes.push(outcome);
        }

        let next = now + dt;
        for ((a, outcome), path) in agents.iter_mut().zip(&outcomes).zip(logs.paths.iter_mut()) {
            let mut state = a.state.clone();
            state.stamp = now;
            a.state = step_robot(&state, outcome, dt);
            if a.state.velocity.norm() > 0.05 {
                a.heading = a.state.velocity.y.atan2(a.state.velocity.x);
            }
            path.push(a.state.position);
            if (a.state.position - a.goal).norm() > scenario.goal_tolerance {
                a.last_outside = Some(next);
            }
        }
        simulated = next;

        record_contacts(
            check_collisions(&bodies(&agents), &scenario.world, next),
            &mut active_contacts,
            &mut collisions,
            &mut logs.events_csv,
        );
        update_clearance(&agents, &mut min_clearance);

        let settled = agents.iter().all(|a| {
            (a.state.position - a.goal).norm() <= scenario.goal_tolerance
                && a.state.velocity.norm() < SETTLED_SPEED
                && next + TIME_EPS >= a.goal_stamp
        });
        if settled {
            break;
        }
    }

    let robots: Vec<RobotReport> = agents
        .iter()
        .zip(&starts)
        .map(|(a, start)| {
            let error = (a.state.position - a.goal).norm();
            let reached = error <= scenario.goal_tolerance;
            let arrival = if reached { a.last_outside.or(Some(0.0)) } else { None };
            RobotReport {
                id: a.id,
                start: [start.x, start.y],
                goal: [a.goal.x, a.goal.y],
                final_position: [a.state.position.x, a.state.position.y],
                final_error: error,
                reached_goal: reached,
                arrival_time: arrival,
                lateness: arrival.map(|t| t - a.goal_stamp),
                status_counts: a.status_counts.clone(),
            }
        })
        .collect();

    let failure = if !collisions.is_empty() {
        Some(FailureKind::Collision)
    } else if robots.iter().any(|r| !r.reached_goal && planner_failures.get(&r.id).copied().unwrap_or(0) > 0) {
        Some(FailureKind::PlannerFailed)
    } else if robots.iter().any(|r| !r.reached_goal) {
        Some(FailureKind::GoalTimeout)
    } else {
        None
    };

    let report = RunReport {
        scenario: scenario.name.clone(),
        seed,
        simulated_time: simulated,
        success: failure.is_none(),
        failure,
        goal_tolerance: scenario.goal_tolerance,
        robots,
        collisions,
        min_pair_clearance: min_clearance,
        solve: summarize(&cycles),
        cycles,
        transitions,
    };
    (report, logs)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn summarize(cycles: &[CycleStats]) -> SolveSummary {
    if cycles.is_empty() {
        return SolveSummary::default();
    }
    let mut times: Vec<f64> = cycles.iter().map(|c| c.runtime * 1e3).collect();
    times.sort_by(f64::total_cmp);
    let pick = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
    SolveSummary {
        cycles: cycles.len(),
        median_runtime_ms: pick(0.5),
        p95_runtime_ms: pick(0.95),
        max_runtime_ms: *times.last().unwrap(),
        total_iterations: cycles.iter().map(|c| c.iterations).sum(),
    }
}

/// Write `trajectories.csv`, `events.csv`, `transitions.csv`,
/// `solve_stats.csv`, `report.json` and `paths.svg` into `dir`.
pub fn write_outputs(scenario: &Scenario, report: &RunReport, logs: &RunLogs, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectories.csv"), &logs.trajectories_csv)?;
    fs::write(dir.join("events.csv"), &logs.events_csv)?;
    fs::write(dir.join("transitions.csv"), &logs.transitions_csv)?;
    let mut stats = String::from("time,id,status,attempts,iterations,runtime_ms\n");
    for c in &report.cycles {
        let _ = writeln!(
            stats,
            "{:.3},{},{},{},{},{:.3}",
            c.time,
            c.robot,
            c.status,
            c.attempts,
            c.iterations,
            c.runtime * 1e3
        );
    }
    fs::write(dir.join("solve_stats.csv"), stats)?;
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    fs::write(dir.join("report.json"), json + "\n")?;
    fs::write(dir.join("paths.svg"), render_svg(scenario, &logs.paths))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRun {
    pub seed: u64,
    pub success: bool,
    pub failure: Option<FailureKind>,
    pub collisions: usize,
    pub min_pair_clearance: Option<f64>,
    pub max_final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub scenario: String,
    pub runs: Vec<BatchRun>,
    pub success_rate: f64,
    /// Failure counts keyed by kind.
    pub failures: BTreeMap<String, usize>,
}

/// Run seeds `0..n_seeds`, writing each run's outputs under
/// `out_dir/seed_<n>` when a directory is given.
pub fn batch(scenario: &Scenario, n_seeds: u64, out_dir: Option<&Path>) -> std::io::Result<BatchReport> {
    let mut runs = Vec::new();
    let mut failures = BTreeMap::new();
    for seed in 0..n_seeds {
        let (report, logs) = run(scenario, Some(seed));
        if let Some(dir) = out_dir {
            let sub: PathBuf = dir.join(format!("seed_{seed}"));
            write_outputs(scenario, &report, &logs, &sub)?;
        }
        if let Some(kind) = report.failure {
            *failures.entry(kind.as_str().to_string()).or_insert(0) += 1;
        }
        runs.push(BatchRun {
            seed,
            success: report.success,
            failure: report.failure,
            collisions: report.collisions.len(),
            min_pair_clearance: report.min_pair_clearance,
            max_final_error: report.robots.iter().map(|r| r.final_error).fold(0.0, f64::max),
        });
    }
    let successes = runs.iter().filter(|r| r.success).count();
    let success_rate = if runs.is_empty() { 0.0 } else { successes as f64 / runs.len() as f64 };
    Ok(BatchReport { scenario: scenario.name.clone(), runs, success_rate, failures })
}
