//! Egocentric pose geometry and the smooth pose-following control law.
//!
//! A target pose `T` is described relative to the robot by the triplet
//! `(r, theta, delta)`: the distance to `T`, the heading of `T` measured from
//! the line of sight, and the heading of the robot measured from the same line
//! of sight. Both angles are wrapped to `(-pi, pi]`.

use std::f64::consts::{PI, TAU};

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::kinematics::TrajectoryParam;

/// Below this distance the line of sight is undefined and the robot heading
/// is used in its place.
pub const R_EPSILON: f64 = 1e-6;

/// Curvature magnitude returned by the control law inside `R_EPSILON`.
pub const KAPPA_MAX: f64 = 20.0;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Planar pose. The heading is kept wrapped to `(-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn from_position(position: DVec2, heading: f64) -> Self {
        Self::new(position.x, position.y, heading)
    }

    pub fn position(&self) -> DVec2 {
        DVec2::new(self.x, self.y)
    }

    /// Unit vector along the heading.
    pub fn direction(&self) -> DVec2 {
        DVec2::from_angle(self.heading)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

/// Target pose expressed in the robot-centred `(r, theta, delta)` frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgocentricCoords {
    pub r: f64,
    pub theta: f64,
    pub delta: f64,
}

/// Gains of the pose-following law plus the velocity modulation shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlGains {
    pub k1: f64,
    pub k2: f64,
    /// Strength of the curvature-dependent slowdown.
    pub curvature_beta: f64,
    /// Exponent applied to `|kappa|` in the slowdown.
    pub curvature_lambda: f64,
    /// Distance to the target inside which speed ramps linearly to zero.
    pub slowdown_radius: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            k1: 1.2,
            k2: 3.0,
            curvature_beta: 0.4,
            curvature_lambda: 1.0,
            slowdown_radius: 1.0,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err("gains k1 and k2 must be positive".into());
        }
        if !(self.curvature_beta >= 0.0) {
            return Err("curvature_beta must be non-negative".into());
        }
        if !(self.curvature_lambda >= 1.0) {
            return Err("curvature_lambda must be at least 1".into());
        }
        if !(self.slowdown_radius > 0.0) {
            return Err("slowdown_radius must be positive".into());
        }
        Ok(())
    }
}

/// Expresses `target` in the egocentric frame of `robot`.
pub fn egocentric_coords(robot: &Pose, target: &Pose) -> EgocentricCoords {
    let offset = target.position() - robot.position();
    let r = offset.length();
    let los = if r < R_EPSILON {
        robot.heading
    } else {
        offset.y.atan2(offset.x)
    };
    EgocentricCoords {
        r,
        theta: wrap_angle(target.heading - los),
        delta: wrap_angle(robot.heading - los),
    }
}

/// Inverse of [`egocentric_coords`]: the world-frame target encoded by `z`.
pub fn target_from_param(robot: &Pose, z: &TrajectoryParam) -> Pose {
    let los = wrap_angle(robot.heading - z.delta);
    let position = robot.position() + z.r * DVec2::from_angle(los);
    Pose::from_position(position, los + z.theta)
}

/// Curvature commanded by the pose-following law,
/// `kappa = -(1/r) [k2 (delta - atan(-k1 theta)) + (1 + k1 / (1 + (k1 theta)^2)) sin delta]`.
pub fn control_law_curvature(coords: &EgocentricCoords, gains: &ControlGains) -> f64 {
    let k1_theta = gains.k1 * coords.theta;
    let bracket = gains.k2 * (coords.delta - (-k1_theta).atan())
        + (1.0 + gains.k1 / (1.0 + k1_theta * k1_theta)) * coords.delta.sin();
    if coords.r < R_EPSILON {
        if bracket == 0.0 {
            0.0
        } else {
            -KAPPA_MAX.copysign(bracket)
        }
    } else {
        -bracket / coords.r
    }
}

/// Linear speed for curvature `kappa` under attraction strength `v_max`.
///
/// Always in `[0, v_max]`; tight turns slow the robot and it comes to rest
/// as `r` reaches zero.
pub fn velocity_modulation(kappa: f64, v_max: f64, r: f64, gains: &ControlGains) -> f64 {
    let turn = 1.0 + gains.curvature_beta * kappa.abs().powf(gains.curvature_lambda);
    let approach = (r / gains.slowdown_radius).clamp(0.0, 1.0);
    (v_max.max(0.0) / turn * approach).clamp(0.0, v_max.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn param(r: f64, theta: f64, delta: f64) -> TrajectoryParam {
        TrajectoryParam {
            r,
            theta,
            delta,
            v_max: 1.0,
        }
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn aligned_target() {
        let c = egocentric_coords(&Pose::new(0.0, 0.0, 0.0), &Pose::new(2.0, 0.0, 0.0));
        assert_eq!((c.r, c.theta, c.delta), (2.0, 0.0, 0.0));
    }

    #[test]
    fn target_along_y() {
        let c = egocentric_coords(&Pose::new(0.0, 0.0, 0.0), &Pose::new(0.0, 2.0, FRAC_PI_2));
        assert!((c.r - 2.0).abs() < 1e-15);
        assert!(c.theta.abs() < 1e-15);
        assert!((c.delta + FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn general_target() {
        let robot = Pose::new(1.0, 1.0, PI / 4.0);
        let c = egocentric_coords(&robot, &Pose::new(4.0, 5.0, -FRAC_PI_2));
        // los = atan2(4, 3)
        let los = 4.0f64.atan2(3.0);
        assert!((c.r - 5.0).abs() < 1e-12);
        assert!((c.theta - (-FRAC_PI_2 - los)).abs() < 1e-12);
        assert!((c.theta + 2.498).abs() < 1e-3);
        assert!((c.delta + 0.142).abs() < 1e-3);

        let t = target_from_param(&robot, &param(5.0, -2.498, -0.142));
        assert!((t.x - 4.0).abs() < 5e-3 && (t.y - 5.0).abs() < 5e-3);
        assert!((t.heading + FRAC_PI_2).abs() < 1e-3);
    }

    #[test]
    fn coincident_positions_use_robot_heading() {
        let c = egocentric_coords(&Pose::new(1.0, 1.0, 0.3), &Pose::new(1.0, 1.0, 1.0));
        assert_eq!(c.r, 0.0);
        assert_eq!(c.delta, 0.0);
        assert!((c.theta - 0.7).abs() < 1e-15);
    }

    #[test]
    fn null_param_targets_current_pose() {
        let robot = Pose::new(2.0, -1.0, 0.4);
        assert_eq!(target_from_param(&robot, &param(0.0, 0.0, 0.0)), robot);
        let t = target_from_param(&Pose::new(0.0, 0.0, 0.0), &param(2.0, 0.0, 0.0));
        assert_eq!(t, Pose::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn curvature_examples() {
        let g = ControlGains::default();
        let aligned = EgocentricCoords {
            r: 2.0,
            theta: 0.0,
            delta: 0.0,
        };
        assert_eq!(control_law_curvature(&aligned, &g), 0.0);

        let side = EgocentricCoords {
            r: 1.0,
            theta: 0.0,
            delta: FRAC_PI_2,
        };
        let expected = -(3.0 * FRAC_PI_2 + 2.2);
        assert!((control_law_curvature(&side, &g) - expected).abs() < 1e-12);
        assert!((control_law_curvature(&side, &g) + 6.9124).abs() < 1e-4);

        let singular = EgocentricCoords {
            r: 1e-9,
            theta: 0.0,
            delta: 0.5,
        };
        assert_eq!(control_law_curvature(&singular, &g).abs(), KAPPA_MAX);
    }

    #[test]
    fn modulation_examples() {
        let g = ControlGains::default();
        assert_eq!(velocity_modulation(0.0, 1.0, 10.0, &g), 1.0);
        assert_eq!(velocity_modulation(3.0, 0.0, 10.0, &g), 0.0);
        assert_eq!(velocity_modulation(0.0, 0.0, 0.0, &g), 0.0);
        assert!((velocity_modulation(2.0, 1.0, 10.0, &g) - 1.0 / 1.8).abs() < 1e-15);
        let quadratic = ControlGains {
            curvature_lambda: 2.0,
            ..g
        };
        assert!((velocity_modulation(2.0, 1.0, 10.0, &quadratic) - 1.0 / 2.6).abs() < 1e-15);
        assert!((velocity_modulation(0.0, 1.0, 0.25, &g) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gains_validation() {
        assert!(ControlGains::default().validate().is_ok());
        let bad = ControlGains {
            k1: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControlGains {
            curvature_lambda: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
