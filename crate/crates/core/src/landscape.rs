//! Candidate-trajectory landscapes at a frozen moment of a run.
//!
//! The scenario is simulated up to time `t`, the world is frozen, and one
//! agent's sampled candidates are ranked by cost, expected time-to-goal or
//! terminal time-to-collision. Candidates that touch an obstacle (final
//! survivability exactly zero) are left out of every ranking.

use std::fmt::Write as _;
use std::sync::Arc;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::cost::{expected_time_to_goal, terminal_ttc, trajectory_cost, CostContext};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::kinematics::{rollout, RobotState, TrajectoryParam};
use crate::navigation::NavigationField;
use crate::optimizer::{anchor_candidates, shifted_halton};
use crate::report::Figure;
use crate::scenarios::ScenarioConfig;
use crate::simulator::{run, snapshot_obstacles, AgentSnapshot, Outcome, SimOptions};
use crate::world::World;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    /// Lowest total cost first.
    Cost,
    /// Lowest expected time-to-goal first.
    Ttg,
    /// Highest terminal time-to-collision first.
    Ttc,
}

impl std::str::FromStr for Rank {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cost" => Ok(Rank::Cost),
            "ttg" => Ok(Rank::Ttg),
            "ttc" => Ok(Rank::Ttc),
            other => Err(format!(
                "unknown ranking `{other}` (expected cost, ttg or ttc)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeEntry {
    pub param: TrajectoryParam,
    pub cost: f64,
    pub ttg: f64,
    pub ttc: f64,
    pub path: Vec<DVec2>,
    pub terminal: Pose,
}

#[derive(Clone, Debug)]
pub struct Landscape {
    pub agent: String,
    pub t: f64,
    pub state: RobotState,
    pub others: Vec<AgentSnapshot>,
    /// Ranked best first and truncated to the requested count.
    pub entries: Vec<LandscapeEntry>,
}

impl Landscape {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,r,theta,delta,v_max,cost,ttg,ttc\n");
        let num = |x: f64| {
            if x.is_finite() {
                format!("{x}")
            } else {
                "inf".into()
            }
        };
        for (k, e) in self.entries.iter().enumerate() {
            let p = e.param;
            let _ = writeln!(
                s,
                "{k},{},{},{},{},{},{},{}",
                p.r,
                p.theta,
                p.delta,
                p.v_max,
                num(e.cost),
                num(e.ttg),
                num(e.ttc)
            );
        }
        s
    }

    pub fn figure(&self, scenario: &ScenarioConfig) -> Figure {
        let mut agents = vec![(
            self.state.pose.position(),
            scenario.agent(&self.agent).map_or(0.0, |a| a.radius),
        )];
        agents.extend(self.others.iter().map(|o| (o.position, o.radius)));
        Figure {
            candidates: self.entries.iter().map(|e| e.path.clone()).collect(),
            agents,
            goals: scenario
                .agent(&self.agent)
                .map(|a| a.goal.position())
                .into_iter()
                .collect(),
            ..Figure::default()
        }
    }
}

/// Simulates `scenario` up to `t` and ranks `agent`'s candidates.
pub fn landscape(
    scenario: &ScenarioConfig,
    agent: &str,
    t: f64,
    rank: Rank,
    top: usize,
) -> Result<Landscape> {
    let index = scenario
        .agents
        .iter()
        .position(|a| a.id == agent)
        .ok_or_else(|| Error::Validation(format!("no agent `{agent}`")))?;
    if !(0.0..=scenario.duration).contains(&t) {
        return Err(Error::Validation(format!(
            "snapshot time {t} outside [0, {}]",
            scenario.duration
        )));
    }
    let options = SimOptions {
        stop_at: Some(t),
        ..SimOptions::default()
    };
    let result = run(scenario, &options)?;
    let snapshots: Vec<(AgentSnapshot, RobotState)> = scenario
        .agents
        .iter()
        .zip(&result.traces)
        .zip(&result.agents)
        .map(|((spec, trace), outcome)| {
            let row = trace.last().expect("initial state is always traced");
            let moving = outcome.outcome == Outcome::Timeout;
            let (v, omega) = if moving {
                (row.v, row.omega)
            } else {
                (0.0, 0.0)
            };
            let state = RobotState {
                pose: Pose::new(row.x, row.y, row.heading),
                v,
                omega,
                t: row.t,
            };
            let snap = AgentSnapshot {
                id: spec.id.clone(),
                position: state.pose.position(),
                velocity: state.velocity(),
                radius: spec.radius,
            };
            (snap, state)
        })
        .collect();
    let spec = &scenario.agents[index];
    let state = snapshots[index].1;
    let seen: Vec<AgentSnapshot> = snapshots.iter().map(|(s, _)| s.clone()).collect();

    let grid = Arc::new(scenario.map.to_grid()?);
    let world = World::new(
        grid.clone(),
        snapshot_obstacles(&seen, index, &scenario.scripted_obstacles, state.t),
        spec.radius,
    );
    let nav = NavigationField::new(&grid, spec.goal.position(), spec.radius);
    let ctx = CostContext {
        world: &world,
        nav: &nav,
        goal: spec.goal.position(),
        v_limit: spec.planner.v_limit,
    };
    let bounds = spec.optimizer.bounds_for(&spec.planner);
    let mut params = anchor_candidates(&state, &spec.goal, &bounds, &spec.planner, None);
    let (lo, span): (Vec<f64>, Vec<f64>) = [bounds.r, bounds.theta, bounds.delta, bounds.v_max]
        .iter()
        .map(|[lo, hi]| (*lo, hi - lo))
        .unzip();
    params.extend(
        shifted_halton(
            spec.optimizer.n_global_samples,
            scenario.seed ^ spec.optimizer.seed,
        )
        .into_iter()
        .map(|u| bounds.project(std::array::from_fn(|d| lo[d] + u[d] * span[d]))),
    );

    let mut entries = params
        .iter()
        .filter_map(|z| {
            let traj = match rollout(&state, z, &spec.planner) {
                Ok(t) => t,
                Err(e) => return Some(Err(e)),
            };
            let breakdown = match trajectory_cost(&traj, &ctx, &spec.cost) {
                Ok(b) => b,
                Err(e) => return Some(Err(e)),
            };
            if breakdown.final_survivability() == 0.0 {
                return None;
            }
            let end = traj.terminal();
            Some(Ok(LandscapeEntry {
                param: *z,
                cost: breakdown.total,
                ttg: expected_time_to_goal(end, ctx.goal, &spec.cost),
                ttc: terminal_ttc(end, &world, spec.planner.v_limit),
                path: traj.positions().collect(),
                terminal: end.pose,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    match rank {
        Rank::Cost => entries.sort_by(|a, b| a.cost.total_cmp(&b.cost)),
        Rank::Ttg => entries.sort_by(|a, b| a.ttg.total_cmp(&b.ttg)),
        Rank::Ttc => entries.sort_by(|a, b| b.ttc.total_cmp(&a.ttc)),
    }
    entries.truncate(top);

    Ok(Landscape {
        agent: agent.to_string(),
        t: state.t,
        state,
        others: seen
            .into_iter()
            .enumerate()
            .filter(|(j, _)| *j != index)
            .map(|(_, s)| s)
            .collect(),
        entries,
    })
}
