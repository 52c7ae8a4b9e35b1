//! Expected trajectory cost.
//!
//! For segments `i = 1..N` the cost sums
//! `p_s_i * J_progress_i + J_action_i + (1 - p_s_i) * J_collision_i`, where
//! the survivability `p_s_i` is the running product of `1 - p_c_k`. Two modes
//! are supported:
//!
//! * [`CostMode::BaselineMpepc`]: `p_c = exp(-d_o^2 / sigma_d^2)` and no
//!   terminal term.
//! * [`CostMode::DsMpepc`]: the distance term is discounted along directions
//!   with a long time-to-collision,
//!   `p_c = exp(-d_o^2 / sigma_d^2) * (1 - a * exp(-(1/TTC)^2 / sigma^2))`,
//!   and a bounded terminal bonus built from the expected time-to-goal and
//!   time-to-collision at the end of the horizon is added.
//!
//! Infinite TTC/TTG values are carried as `f64::INFINITY`, so `1/TTC` is
//! exactly zero for them.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{RobotState, Trajectory};
use crate::navigation::NavigationField;
use crate::world::{distance_to_nearest, time_to_collision, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    BaselineMpepc,
    DsMpepc,
}

impl CostMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CostMode::BaselineMpepc => "baseline_mpepc",
            CostMode::DsMpepc => "ds_mpepc",
        }
    }
}

impl std::str::FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mpepc" | "baseline" | "baseline_mpepc" => Ok(CostMode::BaselineMpepc),
            "ds" | "ds_mpepc" => Ok(CostMode::DsMpepc),
            other => Err(format!(
                "unknown cost mode `{other}` (expected ds or mpepc)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Width of the distance-based collision bell.
    pub sigma_d: f64,
    /// Weight of the anticipatory (TTC) discount, in `[0, 1)`.
    pub a: f64,
    pub sigma_inv_ttc: f64,
    pub sigma_inv_ttg: f64,
    pub w_progress: f64,
    pub w_action_v: f64,
    pub w_action_w: f64,
    pub c_collision: f64,
    pub goal_tolerance: f64,
    pub v_epsilon: f64,
    /// Adds the terminal bonus in `DsMpepc` mode.
    pub terminal: bool,
    pub mode: CostMode,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            sigma_d: 0.15,
            a: 0.7,
            sigma_inv_ttc: 0.5,
            sigma_inv_ttg: 1e-3,
            w_progress: 4.0,
            w_action_v: 0.02,
            w_action_w: 0.02,
            c_collision: 1.0,
            goal_tolerance: 0.3,
            v_epsilon: 1e-3,
            terminal: true,
            mode: CostMode::DsMpepc,
        }
    }
}

impl CostParams {
    pub fn baseline() -> Self {
        Self {
            mode: CostMode::BaselineMpepc,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.sigma_d > 0.0) {
            return err("sigma_d must be positive");
        }
        if !(0.0..1.0).contains(&self.a) {
            return err("a must lie in [0, 1)");
        }
        if !(self.sigma_inv_ttc > 0.0 && self.sigma_inv_ttg > 0.0) {
            return err("sigma_inv_ttc and sigma_inv_ttg must be positive");
        }
        let weights = [
            self.w_progress,
            self.w_action_v,
            self.w_action_w,
            self.c_collision,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return err("cost weights must be non-negative");
        }
        if !(self.goal_tolerance >= 0.0 && self.v_epsilon >= 0.0) {
            return err("goal_tolerance and v_epsilon must be non-negative");
        }
        Ok(())
    }

    fn terminal_active(&self) -> bool {
        self.mode == CostMode::DsMpepc && self.terminal
    }
}

/// Per-segment terms. `p_c_distance` is the purely distance-based probability;
/// `p_c` is the one used by the active mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentEvaluation {
    pub index: usize,
    pub d_o: f64,
    pub d_g: f64,
    pub ttc: f64,
    pub p_c_distance: f64,
    pub p_c: f64,
    pub p_s: f64,
    pub j_progress: f64,
    pub j_action: f64,
    pub j_collision: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalEvaluation {
    pub ttg: f64,
    pub ttc_terminal: f64,
    pub c_ttg: f64,
    pub c_ttc: f64,
    pub p_s_n: f64,
    pub j_terminal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub segments: Vec<SegmentEvaluation>,
    pub terminal: Option<TerminalEvaluation>,
    pub total: f64,
}

impl CostBreakdown {
    /// Survivability at the end of the horizon.
    pub fn final_survivability(&self) -> f64 {
        self.segments.last().map_or(1.0, |s| s.p_s)
    }
}

/// Everything besides the trajectory that a cost evaluation reads.
#[derive(Clone, Copy, Debug)]
pub struct CostContext<'a> {
    pub world: &'a World,
    pub nav: &'a NavigationField,
    pub goal: DVec2,
    /// Speed assumed for the terminal time-to-collision.
    pub v_limit: f64,
}

/// `exp(-d_o^2 / sigma_d^2)`.
pub fn collision_probability(d_o: f64, params: &CostParams) -> f64 {
    (-(d_o * d_o) / (params.sigma_d * params.sigma_d)).exp()
}

/// `exp(-(1/x)^2 / sigma^2)`, equal to 1 at `x = inf` and 0 at `x = 0`.
fn inverse_bell(x: f64, sigma: f64) -> f64 {
    let inv = 1.0 / x;
    (-(inv * inv) / (sigma * sigma)).exp()
}

/// Distance term scaled by the anticipatory factor
/// `1 - a * exp(-(1/ttc)^2 / sigma_inv_ttc^2)`.
pub fn modified_collision_probability(d_o: f64, ttc: f64, params: &CostParams) -> f64 {
    collision_probability(d_o, params) * (1.0 - params.a * inverse_bell(ttc, params.sigma_inv_ttc))
}

/// Running product of `1 - p_c`.
pub fn survivability(p_c: &[f64]) -> Vec<f64> {
    p_c.iter()
        .scan(1.0, |p_s, &p| {
            *p_s *= 1.0 - p;
            Some(*p_s)
        })
        .collect()
}

/// Distance to the goal divided by the speed component toward it.
pub fn expected_time_to_goal(terminal: &RobotState, goal: DVec2, params: &CostParams) -> f64 {
    let to_goal = goal - terminal.pose.position();
    let d = to_goal.length();
    if d <= params.goal_tolerance {
        return 0.0;
    }
    let v_g = terminal.velocity().dot(to_goal / d);
    if v_g > params.v_epsilon {
        d / v_g
    } else {
        f64::INFINITY
    }
}

/// Time-to-collision if the robot kept its terminal heading at `v_limit`.
pub fn terminal_ttc(terminal: &RobotState, world: &World, v_limit: f64) -> f64 {
    let velocity = v_limit * terminal.pose.direction();
    time_to_collision(world, terminal.pose.position(), velocity, terminal.t)
}

/// `J_terminal = -p_s_N * C_TTG * C_TTC`, always in `[-1, 0]`.
pub fn terminal_cost(
    terminal: &RobotState,
    p_s_n: f64,
    ctx: &CostContext<'_>,
    params: &CostParams,
) -> TerminalEvaluation {
    let ttg = expected_time_to_goal(terminal, ctx.goal, params);
    let ttc = terminal_ttc(terminal, ctx.world, ctx.v_limit);
    terminal_value(ttg, ttc, p_s_n, params)
}

/// Terminal evaluation from precomputed TTG and TTC.
pub fn terminal_value(ttg: f64, ttc: f64, p_s_n: f64, params: &CostParams) -> TerminalEvaluation {
    let c_ttg = inverse_bell(ttg, params.sigma_inv_ttg);
    let c_ttc = inverse_bell(ttc, params.sigma_inv_ttc);
    TerminalEvaluation {
        ttg,
        ttc_terminal: ttc,
        c_ttg,
        c_ttc,
        p_s_n,
        j_terminal: -p_s_n * (c_ttg * c_ttc),
    }
}

/// Sums the segment terms the way the planner does. Exposed so callers can
/// re-total stored segments.
pub fn sum_segments(segments: &[SegmentEvaluation]) -> f64 {
    segments
        .iter()
        .map(|s| s.p_s * s.j_progress + s.j_action + (1.0 - s.p_s) * s.j_collision)
        .sum()
}

/// Evaluates the expected cost of `traj`.
///
/// Segment `i` spans states `i - 1` and `i`; its clearance and
/// time-to-collision are the worse of the two end states, each taken with
/// obstacles predicted to that state's timestamp.
pub fn trajectory_cost(
    traj: &Trajectory,
    ctx: &CostContext<'_>,
    params: &CostParams,
) -> Result<CostBreakdown> {
    let states = &traj.states;
    if states.len() < 2 {
        return Err(Error::InvalidConfig(
            "trajectory needs at least one segment".into(),
        ));
    }
    if let Some(s) = states.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("trajectory state {s:?}")));
    }
    let ds = params.mode == CostMode::DsMpepc;
    let world = ctx.world;
    let mut clearance = Vec::with_capacity(states.len());
    let mut ttc = Vec::with_capacity(states.len());
    let mut nf = Vec::with_capacity(states.len());
    for s in states {
        let p = s.pose.position();
        clearance.push(distance_to_nearest(world, p, s.t));
        ttc.push(if ds {
            time_to_collision(world, p, s.velocity(), s.t)
        } else {
            f64::INFINITY
        });
        nf.push(ctx.nav.distance(p));
    }

    let h = states[1].t - states[0].t;
    let mut segments = Vec::with_capacity(states.len() - 1);
    let mut p_s = 1.0;
    for i in 1..states.len() {
        let d_o = clearance[i - 1].min(clearance[i]);
        let seg_ttc = ttc[i - 1].min(ttc[i]);
        let p_c_distance = collision_probability(d_o, params);
        let p_c = if ds {
            modified_collision_probability(d_o, seg_ttc, params)
        } else {
            p_c_distance
        };
        p_s *= 1.0 - p_c;
        let s = &states[i];
        segments.push(SegmentEvaluation {
            index: i,
            d_o,
            d_g: nf[i],
            ttc: seg_ttc,
            p_c_distance,
            p_c,
            p_s,
            j_progress: params.w_progress * (nf[i] - nf[i - 1]),
            j_action: h * (params.w_action_v * s.v * s.v + params.w_action_w * s.omega * s.omega),
            j_collision: params.c_collision,
        });
    }

    let terminal = params
        .terminal_active()
        .then(|| terminal_cost(traj.terminal(), p_s, ctx, params));
    let total = sum_segments(&segments) + terminal.map_or(0.0, |t| t.j_terminal);
    Ok(CostBreakdown {
        segments,
        terminal,
        total,
    })
}
