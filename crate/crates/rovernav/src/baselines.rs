//! Reference controllers: a goal-bearing P-controller and a uniform random
//! controller.
//!
//! The P-controller steers by the wrapped angle error to the goal:
//! left = P0 - Kp * e, right = P0 + Kp * e, both clamped to the rover's
//! non-negative command range. It sees the goal location but nothing else.

use rand::Rng;

use crate::world::{wrap_angle, RoverPose, Vec2, WheelCommand};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PControllerConfig {
    /// Proportional gain on the bearing error.
    pub k_p: f64,
    /// Nominal wheel command with zero error.
    pub p_0: f64,
}

impl Default for PControllerConfig {
    fn default() -> Self {
        Self { k_p: 1.0, p_0: 0.8 }
    }
}

/// Wrapped bearing error from the rover heading to the goal, in (-pi, pi].
pub fn bearing_error(pose: &RoverPose, goal: Vec2) -> f64 {
    wrap_angle((goal.y - pose.y).atan2(goal.x - pose.x) - pose.heading)
}

/// One P-control decision. Pure function of (pose, goal, config).
pub fn p_control(pose: &RoverPose, goal: Vec2, cfg: &PControllerConfig) -> WheelCommand {
    let e = bearing_error(pose, goal);
    WheelCommand::new(cfg.p_0 - cfg.k_p * e, cfg.p_0 + cfg.k_p * e)
}

/// Uniform random wheel commands, both components independent on [0, 1].
pub fn random_control<R: Rng>(rng: &mut R) -> WheelCommand {
    WheelCommand::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0))
}
