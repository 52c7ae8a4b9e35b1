//! Closed-loop rollout of a differential-drive robot toward the target encoded
//! by a trajectory parameter.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    control_law_curvature, egocentric_coords, target_from_param, velocity_modulation, ControlGains,
    Pose,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    /// Linear velocity over the segment that ended at this state.
    pub v: f64,
    pub omega: f64,
    pub t: f64,
}

impl RobotState {
    pub fn at_rest(pose: Pose, t: f64) -> Self {
        Self {
            pose,
            v: 0.0,
            omega: 0.0,
            t,
        }
    }

    /// World-frame velocity vector.
    pub fn velocity(&self) -> DVec2 {
        self.v * self.pose.direction()
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite() && self.v.is_finite() && self.omega.is_finite() && self.t.is_finite()
    }
}

/// The planner's decision variable `(r, theta, delta, v_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParam {
    pub r: f64,
    pub theta: f64,
    pub delta: f64,
    pub v_max: f64,
}

impl TrajectoryParam {
    /// The halting candidate: target equals the current pose.
    pub const NULL: Self = Self {
        r: 0.0,
        theta: 0.0,
        delta: 0.0,
        v_max: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.theta, self.delta, self.v_max]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            r: a[0],
            theta: a[1],
            delta: a[2],
            v_max: a[3],
        }
    }

    pub fn is_null(&self) -> bool {
        self.r == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States at `t0, t0 + h, ..., t0 + N h`.
    pub states: Vec<RobotState>,
    pub param: TrajectoryParam,
    pub target: Pose,
}

impl Trajectory {
    pub fn terminal(&self) -> &RobotState {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn positions(&self) -> impl Iterator<Item = DVec2> + '_ {
        self.states.iter().map(|s| s.pose.position())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub horizon: f64,
    pub step: f64,
    pub v_limit: f64,
    pub omega_limit: f64,
    pub accel_limit: f64,
    pub alpha_limit: f64,
    pub gains: ControlGains,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            step: 0.2,
            v_limit: 1.0,
            omega_limit: 1.5,
            accel_limit: 1.0,
            alpha_limit: std::f64::consts::TAU,
            gains: ControlGains::default(),
        }
    }
}

impl PlannerConfig {
    /// Number of segments `N = horizon / step`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Upper bound on the target distance `r`.
    pub fn r_max(&self) -> f64 {
        self.v_limit * self.horizon + 5.0
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.horizon > 0.0 && self.step > 0.0) {
            return err("horizon and step must be positive");
        }
        let n = self.horizon / self.step;
        if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return err("horizon / step must be a positive integer");
        }
        if !(self.v_limit > 0.0 && self.omega_limit > 0.0) {
            return err("velocity limits must be positive");
        }
        if !(self.accel_limit > 0.0 && self.alpha_limit > 0.0) {
            return err("rate limits must be positive");
        }
        self.gains.validate().map_err(Error::InvalidConfig)
    }
}

/// Advances `pose` for `dt` under constant `(v, omega)` along the exact arc.
///
/// The arc is taken as its chord, of length `v dt sin(x) / x` with
/// `x = omega dt / 2`, laid along the mid-step heading. Unlike the
/// difference-of-sines form this stays accurate when `v / omega` is huge.
pub fn arc_step(pose: &Pose, v: f64, omega: f64, dt: f64) -> Pose {
    let half = 0.5 * omega * dt;
    let sinc = if half == 0.0 { 1.0 } else { half.sin() / half };
    let chord = v * dt * sinc * DVec2::from_angle(pose.heading + half);
    Pose::new(
        pose.x + chord.x,
        pose.y + chord.y,
        pose.heading + omega * dt,
    )
}

/// Velocity command for one control period toward a fixed target, after
/// saturation and rate limiting relative to `prev`.
pub fn control_command(
    prev: &RobotState,
    target: &Pose,
    v_max: f64,
    cfg: &PlannerConfig,
) -> (f64, f64) {
    let h = cfg.step;
    let coords = egocentric_coords(&prev.pose, target);
    let kappa = control_law_curvature(&coords, &cfg.gains);
    let mut v = velocity_modulation(kappa, v_max, coords.r, &cfg.gains).min(cfg.v_limit);
    // Saturate the turn rate by slowing down, which keeps the path shape.
    if (kappa * v).abs() > cfg.omega_limit {
        v = cfg.omega_limit / kappa.abs();
    }
    let omega = kappa * v;
    let dv = cfg.accel_limit * h;
    let dw = cfg.alpha_limit * h;
    let v = v
        .clamp(prev.v - dv, prev.v + dv)
        .clamp(-cfg.v_limit, cfg.v_limit);
    let omega = omega
        .clamp(prev.omega - dw, prev.omega + dw)
        .clamp(-cfg.omega_limit, cfg.omega_limit);
    (v, omega)
}

/// Simulates the closed-loop trajectory generated by `z` from `start`.
pub fn rollout(start: &RobotState, z: &TrajectoryParam, cfg: &PlannerConfig) -> Result<Trajectory> {
    if !start.is_finite() {
        return Err(Error::NonFinite(format!("rollout start {start:?}")));
    }
    let target = target_from_param(&start.pose, z);
    let n = cfg.steps();
    let mut states = Vec::with_capacity(n + 1);
    states.push(*start);
    let mut prev = *start;
    for i in 1..=n {
        let (v, omega) = control_command(&prev, &target, z.v_max, cfg);
        let pose = arc_step(&prev.pose, v, omega, cfg.step);
        prev = RobotState {
            pose,
            v,
            omega,
            t: start.t + i as f64 * cfg.step,
        };
        states.push(prev);
    }
    Ok(Trajectory {
        states,
        param: *z,
        target,
    })
}
