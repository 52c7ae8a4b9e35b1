//! Closed-loop multi-agent simulation.
//!
//! Every cycle each active agent plans against its own snapshot of the world,
//! in which the other agents appear as constant-velocity disks at their
//! current positions and last executed velocities. All agents then execute
//! the first step of their chosen trajectories simultaneously.

use std::sync::Arc;

use glam::DVec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostContext, CostMode};
use crate::error::Result;
use crate::geometry::egocentric_coords;
use crate::kinematics::{rollout, RobotState, TrajectoryParam};
use crate::navigation::NavigationField;
use crate::optimizer::{derive_named_seed, derive_seed, plan, OptimizerConfig, PlanSettings};
use crate::scenarios::{AgentSpec, ScenarioConfig};
use crate::world::{
    distance_to_nearest, predict_obstacle, DynamicObstacle, Motion, OccupancyGrid, World,
};

/// Speed below which an agent counts as halted.
pub const DEADLOCK_SPEED: f64 = 0.05;
/// Halting time that constitutes a deadlock.
pub const DEADLOCK_WINDOW: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Deadlocked,
    Collided,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Deadlocked => "deadlocked",
            Outcome::Collided => "collided",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub d_o: f64,
    pub nf_distance: f64,
}

impl TraceRow {
    pub fn position(&self) -> DVec2 {
        DVec2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    /// Mean `|dv| / h` over executed steps.
    pub mean_linear_accel: f64,
    /// Mean `|d omega| / h` over executed steps.
    pub mean_angular_accel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub id: String,
    pub outcome: Outcome,
    pub time_to_goal: Option<f64>,
    pub path_length: f64,
    /// `None` when no hazard was ever at finite distance.
    pub min_clearance: Option<f64>,
    pub smoothness: Smoothness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplanSummary {
    pub t: f64,
    pub agent: String,
    pub best_cost: f64,
    pub best_param: TrajectoryParam,
    pub n_evaluated: usize,
}

/// Contact between an agent and the map (`other = None`) or another body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub t: f64,
    pub agent: String,
    pub other: Option<String>,
}

/// Evaluated candidate trajectories for one agent and cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFan {
    pub t: f64,
    pub agent: String,
    pub candidates: Vec<Vec<DVec2>>,
    pub best: Vec<DVec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: String,
    pub agents: Vec<AgentResult>,
    pub traces: Vec<Vec<TraceRow>>,
    /// Sampled centre positions `(t, x, y)` of scripted obstacles.
    pub obstacle_traces: Vec<(String, Vec<[f64; 3]>)>,
    pub contacts: Vec<ContactEvent>,
    pub replan_log: Vec<ReplanSummary>,
    pub fans: Vec<CandidateFan>,
    pub errors: Vec<String>,
}

impl SimResult {
    pub fn all_reached(&self) -> bool {
        self.agents.iter().all(|a| a.outcome == Outcome::Reached)
    }

    pub fn agent(&self, id: &str) -> Option<&AgentResult> {
        self.agents.iter().find(|a| a.id == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Record candidate fans every this many cycles (0 disables).
    pub fan_stride: usize,
    /// Cap on candidates kept per fan.
    pub fan_limit: usize,
    /// Stop the run at this time instead of the scenario duration.
    pub stop_at: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            fan_stride: 0,
            fan_limit: 60,
            stop_at: None,
        }
    }
}

/// True iff the trace contains a contiguous halt of at least
/// [`DEADLOCK_WINDOW`] seconds away from the goal.
pub fn detect_deadlock(trace: &[TraceRow], goal_tolerance: f64) -> bool {
    let mut since: Option<f64> = None;
    for row in trace {
        if row.v.abs() < DEADLOCK_SPEED && row.nf_distance > goal_tolerance {
            let start = *since.get_or_insert(row.t);
            if row.t - start >= DEADLOCK_WINDOW - 1e-9 {
                return true;
            }
        } else {
            since = None;
        }
    }
    false
}

/// A disk taking part in contact checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Body {
    pub id: String,
    pub position: DVec2,
    pub radius: f64,
    /// Scripted obstacles are not agents; contacts among them are ignored.
    pub is_agent: bool,
}

/// Contacts at one instant: every agent touching the map, and every touching
/// pair involving at least one agent (reported once per pair).
pub fn detect_collision(bodies: &[Body], grid: &OccupancyGrid, t: f64) -> Vec<ContactEvent> {
    let mut events = Vec::new();
    for b in bodies.iter().filter(|b| b.is_agent) {
        if grid.distance_at(b.position) <= b.radius {
            events.push(ContactEvent {
                t,
                agent: b.id.clone(),
                other: None,
            });
        }
    }
    for (i, a) in bodies.iter().enumerate() {
        for b in &bodies[i + 1..] {
            if !(a.is_agent || b.is_agent) {
                continue;
            }
            if a.position.distance(b.position) <= a.radius + b.radius {
                let (agent, other) = if a.is_agent { (a, b) } else { (b, a) };
                events.push(ContactEvent {
                    t,
                    agent: agent.id.clone(),
                    other: Some(other.id.clone()),
                });
            }
        }
    }
    events
}

struct AgentRun<'a> {
    spec: &'a AgentSpec,
    nav: NavigationField,
    state: RobotState,
    active: bool,
    outcome: Option<Outcome>,
    time_to_goal: Option<f64>,
    trace: Vec<TraceRow>,
    path_length: f64,
    accel_sum: (f64, f64),
    steps: usize,
    in_contact: bool,
    warm_target: Option<(crate::geometry::Pose, f64)>,
}

/// What other planners observe about an agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSnapshot {
    pub id: String,
    pub position: DVec2,
    pub velocity: DVec2,
    pub radius: f64,
}

/// Obstacles seen by agent `skip` at time `t`: every other agent as a
/// constant-velocity disk, plus the scripted obstacles.
pub fn snapshot_obstacles(
    agents: &[AgentSnapshot],
    skip: usize,
    scripted: &[DynamicObstacle],
    t: f64,
) -> Vec<DynamicObstacle> {
    agents
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, a)| DynamicObstacle {
            id: a.id.clone(),
            radius: a.radius,
            motion: Motion::ConstantVelocity {
                position: a.position,
                velocity: a.velocity,
                epoch: t,
            },
        })
        .chain(scripted.iter().cloned())
        .collect()
}

fn snapshots(runs: &[AgentRun<'_>]) -> Vec<AgentSnapshot> {
    runs.iter()
        .map(|r| AgentSnapshot {
            id: r.spec.id.clone(),
            position: r.state.pose.position(),
            velocity: if r.active {
                r.state.velocity()
            } else {
                DVec2::ZERO
            },
            radius: r.spec.radius,
        })
        .collect()
}

/// Runs `scenario` to completion.
pub fn run(scenario: &ScenarioConfig, options: &SimOptions) -> Result<SimResult> {
    let grid = Arc::new(scenario.map.to_grid()?);
    let h = scenario.agents.first().map_or(0.2, |a| a.planner.step);
    let scripted = &scenario.scripted_obstacles;

    let mut runs: Vec<AgentRun<'_>> = scenario
        .agents
        .iter()
        .map(|spec| AgentRun {
            spec,
            nav: NavigationField::new(&grid, spec.goal.position(), spec.radius),
            state: RobotState::at_rest(spec.start, 0.0),
            active: true,
            outcome: None,
            time_to_goal: None,
            trace: Vec::new(),
            path_length: 0.0,
            accel_sum: (0.0, 0.0),
            steps: 0,
            in_contact: false,
            warm_target: None,
        })
        .collect();

    let mut contacts = Vec::new();
    let mut replan_log = Vec::new();
    let mut fans = Vec::new();
    let mut errors = Vec::new();
    let mut obstacle_traces: Vec<(String, Vec<[f64; 3]>)> = scripted
        .iter()
        .map(|o| (o.id.clone(), Vec::new()))
        .collect();
    let stop = options
        .stop_at
        .unwrap_or(scenario.duration)
        .min(scenario.duration);

    let mut cycle: u64 = 0;
    let mut t = 0.0;
    observe(
        &mut runs,
        &grid,
        scripted,
        t,
        &mut contacts,
        &mut obstacle_traces,
        true,
    );

    while runs.iter().any(|r| r.active) && t < stop - 1e-9 {
        let seen = snapshots(&runs);
        let plans: Vec<Option<Result<crate::optimizer::PlanResult>>> = (0..runs.len())
            .into_par_iter()
            .map(|i| {
                let r = &runs[i];
                if !r.active {
                    return None;
                }
                let spec = r.spec;
                let world = World::new(
                    grid.clone(),
                    snapshot_obstacles(&seen, i, scripted, t),
                    spec.radius,
                );
                let ctx = CostContext {
                    world: &world,
                    nav: &r.nav,
                    goal: spec.goal.position(),
                    v_limit: spec.planner.v_limit,
                };
                let optimizer = OptimizerConfig {
                    seed: derive_seed(
                        derive_named_seed(scenario.seed ^ spec.optimizer.seed, &spec.id),
                        cycle,
                    ),
                    ..spec.optimizer
                };
                let settings = PlanSettings {
                    planner: &spec.planner,
                    cost: &spec.cost,
                    optimizer: &optimizer,
                };
                let warm = r.warm_target.map(|(target, v_max)| {
                    let c = egocentric_coords(&r.state.pose, &target);
                    TrajectoryParam {
                        r: c.r,
                        theta: c.theta,
                        delta: c.delta,
                        v_max,
                    }
                });
                Some(plan(&r.state, &spec.goal, &ctx, &settings, warm))
            })
            .collect();

        for (i, p) in plans.into_iter().enumerate() {
            let Some(p) = p else { continue };
            let r = &mut runs[i];
            match p {
                Ok(result) => {
                    replan_log.push(ReplanSummary {
                        t,
                        agent: r.spec.id.clone(),
                        best_cost: result.best_cost,
                        best_param: result.best_param,
                        n_evaluated: result.evaluated.len(),
                    });
                    if options.fan_stride > 0 && cycle % options.fan_stride as u64 == 0 {
                        let stride = (result.evaluated.len() / options.fan_limit.max(1)).max(1);
                        let candidates = result
                            .evaluated
                            .iter()
                            .step_by(stride)
                            .take(options.fan_limit)
                            .filter_map(|c| rollout(&r.state, &c.param, &r.spec.planner).ok())
                            .map(|tr| tr.positions().collect())
                            .collect();
                        fans.push(CandidateFan {
                            t,
                            agent: r.spec.id.clone(),
                            candidates,
                            best: result.best_trajectory.positions().collect(),
                        });
                    }
                    let next = result.best_trajectory.states[1];
                    r.path_length += next.pose.position().distance(r.state.pose.position());
                    r.accel_sum.0 += (next.v - r.state.v).abs() / h;
                    r.accel_sum.1 += (next.omega - r.state.omega).abs() / h;
                    r.steps += 1;
                    r.warm_target = Some((result.best_trajectory.target, result.best_param.v_max));
                    r.state = next;
                }
                Err(e) => {
                    errors.push(format!("t={t:.2} agent {}: {e}", r.spec.id));
                    r.state = RobotState {
                        v: 0.0,
                        omega: 0.0,
                        t: t + h,
                        ..r.state
                    };
                    r.active = false;
                    r.outcome = Some(Outcome::Timeout);
                }
            }
        }
        cycle += 1;
        t = cycle as f64 * h;
        for r in runs.iter_mut() {
            r.state.t = t;
        }
        observe(
            &mut runs,
            &grid,
            scripted,
            t,
            &mut contacts,
            &mut obstacle_traces,
            false,
        );
    }

    let agents = runs
        .iter()
        .map(|r| {
            let min_clearance = r
                .trace
                .iter()
                .map(|row| row.d_o)
                .fold(f64::INFINITY, f64::min);
            let n = r.steps.max(1) as f64;
            AgentResult {
                id: r.spec.id.clone(),
                outcome: r.outcome.unwrap_or(Outcome::Timeout),
                time_to_goal: r.time_to_goal,
                path_length: r.path_length,
                min_clearance: min_clearance.is_finite().then_some(min_clearance),
                smoothness: Smoothness {
                    mean_linear_accel: r.accel_sum.0 / n,
                    mean_angular_accel: r.accel_sum.1 / n,
                },
            }
        })
        .collect();

    Ok(SimResult {
        scenario: scenario.name.clone(),
        agents,
        traces: runs.into_iter().map(|r| r.trace).collect(),
        obstacle_traces,
        contacts,
        replan_log,
        fans,
        errors,
    })
}

/// Records trace rows and applies the termination rules at time `t`.
fn observe(
    runs: &mut [AgentRun<'_>],
    grid: &Arc<OccupancyGrid>,
    scripted: &[DynamicObstacle],
    t: f64,
    contacts: &mut Vec<ContactEvent>,
    obstacle_traces: &mut [(String, Vec<[f64; 3]>)],
    initial: bool,
) {
    for (o, (_, tr)) in scripted.iter().zip(obstacle_traces.iter_mut()) {
        let p = predict_obstacle(o, t);
        tr.push([t, p.x, p.y]);
    }
    let mut bodies: Vec<Body> = runs
        .iter()
        .map(|r| Body {
            id: r.spec.id.clone(),
            position: r.state.pose.position(),
            radius: r.spec.radius,
            is_agent: true,
        })
        .collect();
    bodies.extend(scripted.iter().map(|o| Body {
        id: o.id.clone(),
        position: predict_obstacle(o, t),
        radius: o.radius,
        is_agent: false,
    }));
    let events = detect_collision(&bodies, grid, t);
    let touching = |id: &str| {
        events
            .iter()
            .any(|e| e.agent == id || e.other.as_deref() == Some(id))
    };

    let in_contact: Vec<bool> = runs.iter().map(|r| touching(&r.spec.id)).collect();
    let seen = snapshots(runs);
    let clearances: Vec<f64> = (0..runs.len())
        .map(|i| {
            let world = World::new(
                grid.clone(),
                snapshot_obstacles(&seen, i, scripted, t),
                runs[i].spec.radius,
            );
            distance_to_nearest(&world, runs[i].state.pose.position(), t)
        })
        .collect();
    let active_ids: Vec<&str> = runs
        .iter()
        .filter(|r| r.active)
        .map(|r| r.spec.id.as_str())
        .collect();
    contacts.extend(
        events
            .iter()
            .filter(|e| {
                active_ids.contains(&e.agent.as_str())
                    || e.other.as_deref().is_some_and(|o| active_ids.contains(&o))
            })
            .cloned(),
    );

    for (i, r) in runs.iter_mut().enumerate() {
        if !r.active {
            continue;
        }
        let s = r.state;
        let nf_distance = r.nav.distance(s.pose.position());
        r.trace.push(TraceRow {
            t,
            x: s.pose.x,
            y: s.pose.y,
            heading: s.pose.heading,
            v: s.v,
            omega: s.omega,
            d_o: clearances[i],
            nf_distance,
        });
        let tolerance = r.spec.cost.goal_tolerance;
        let fresh_contact = in_contact[i] && !r.in_contact && !initial;
        r.in_contact = in_contact[i];
        let outcome = if nf_distance <= tolerance {
            r.time_to_goal = Some(t);
            Some(Outcome::Reached)
        } else if fresh_contact {
            Some(Outcome::Collided)
        } else if detect_deadlock(&r.trace, tolerance) {
            Some(Outcome::Deadlocked)
        } else {
            None
        };
        if let Some(o) = outcome {
            r.outcome = Some(o);
            r.active = false;
            r.state.v = 0.0;
            r.state.omega = 0.0;
        }
    }
}

/// Convenience for callers that override every agent's cost mode.
pub fn with_mode(scenario: &ScenarioConfig, mode: CostMode) -> ScenarioConfig {
    let mut s = scenario.clone();
    for a in &mut s.agents {
        a.cost.mode = mode;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, v: f64, nf: f64) -> TraceRow {
        TraceRow {
            t,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            v,
            omega: 0.0,
            d_o: 1.0,
            nf_distance: nf,
        }
    }

    fn trace(f: impl Fn(f64) -> f64, seconds: f64) -> Vec<TraceRow> {
        (0..=(seconds / 0.2).round() as usize)
            .map(|k| {
                let t = k as f64 * 0.2;
                row(t, f(t), 2.0)
            })
            .collect()
    }

    #[test]
    fn deadlock_examples() {
        assert!(detect_deadlock(&trace(|_| 0.0, 6.0), 0.3));
        assert!(!detect_deadlock(&trace(|_| 0.5, 20.0), 0.3));
        let pause = trace(|t| if (2.0..5.0).contains(&t) { 0.0 } else { 0.5 }, 20.0);
        assert!(!detect_deadlock(&pause, 0.3));
        // Resting at the goal is not a deadlock.
        let at_goal: Vec<_> = (0..40).map(|k| row(k as f64 * 0.2, 0.0, 0.1)).collect();
        assert!(!detect_deadlock(&at_goal, 0.3));
    }

    #[test]
    fn collision_examples() {
        let grid = OccupancyGrid::empty(10, 10, 1.0, DVec2::ZERO).unwrap();
        let body = |id: &str, x: f64, r: f64| Body {
            id: id.into(),
            position: DVec2::new(x, 5.0),
            radius: r,
            is_agent: true,
        };
        let touching = [body("a", 2.0, 0.4), body("b", 2.79, 0.4)];
        let events = detect_collision(&touching, &grid, 0.0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].other.as_deref(), Some("b"));
        let apart = [body("a", 2.0, 0.4), body("b", 3.0, 0.4)];
        assert!(detect_collision(&apart, &grid, 0.0).is_empty());
    }
}
