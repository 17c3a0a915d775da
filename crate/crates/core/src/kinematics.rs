//! Unicycle kinematics with saturated acceleration inputs.
//!
//! The robot state is `(x, y, θ, v, ω)`. Actions are accelerations held
//! constant over one policy interval and integrated with explicit Euler
//! substeps; speeds are saturated and the heading wrapped on every substep.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[-π, π)`.
pub fn wrap_pi(angle: f64) -> Result<f64> {
    if !angle.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap_angle(angle))
}

#[inline]
pub(crate) fn wrap_angle(angle: f64) -> f64 {
    let mut r = angle - TAU * ((angle + PI) / TAU).floor();
    // floor() can leave r a rounding error outside the half-open interval
    if r >= PI {
        r -= TAU;
    } else if r < -PI {
        r += TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl RobotState {
    pub const fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta, v: 0.0, omega: 0.0 }
    }
}

impl Default for RobotState {
    fn default() -> Self {
        Self::at_rest(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GoalMode {
    Static,
    Moving { speed: f64, heading: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub x: f64,
    pub y: f64,
    pub mode: GoalMode,
}

impl Goal {
    pub const fn fixed(x: f64, y: f64) -> Self {
        Self { x, y, mode: GoalMode::Static }
    }

    pub const fn moving(x: f64, y: f64, speed: f64, heading: f64) -> Self {
        Self { x, y, mode: GoalMode::Moving { speed, heading } }
    }
}

/// Axis-aligned rectangular operating area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Workspace {
    pub const fn square(half: f64) -> Self {
        Self { x_min: -half, x_max: half, y_min: -half, y_max: half }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Speed, acceleration and timing limits of the platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub a_v_min: f64,
    pub a_v_max: f64,
    pub a_omega_min: f64,
    pub a_omega_max: f64,
    pub workspace: Workspace,
    pub dt_policy: f64,
    pub dt_sim: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 0.25,
            omega_min: -0.15,
            omega_max: 0.15,
            a_v_min: -0.10,
            a_v_max: 0.10,
            a_omega_min: -0.02,
            a_omega_max: 0.02,
            workspace: Workspace::square(25.0),
            dt_policy: 0.05,
            dt_sim: 0.001,
        }
    }
}

impl MotionLimits {
    /// Number of integration substeps per policy step.
    pub fn substeps(&self) -> usize {
        (self.dt_policy / self.dt_sim).round().max(1.0) as usize
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        let finite = [
            self.v_min,
            self.v_max,
            self.omega_min,
            self.omega_max,
            self.a_v_min,
            self.a_v_max,
            self.a_omega_min,
            self.a_omega_max,
            self.dt_policy,
            self.dt_sim,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            problems.push("motion limits must be finite".into());
            return;
        }
        if self.v_min > self.v_max {
            problems.push(format!("v_min {} > v_max {}", self.v_min, self.v_max));
        }
        if self.omega_min > self.omega_max {
            problems.push(format!("omega_min {} > omega_max {}", self.omega_min, self.omega_max));
        }
        if self.a_v_min > self.a_v_max {
            problems.push(format!("a_v_min {} > a_v_max {}", self.a_v_min, self.a_v_max));
        }
        if self.a_omega_min > self.a_omega_max {
            problems.push(format!(
                "a_omega_min {} > a_omega_max {}",
                self.a_omega_min, self.a_omega_max
            ));
        }
        let ws = &self.workspace;
        if !(ws.x_min < ws.x_max && ws.y_min < ws.y_max) {
            problems.push("workspace bounds must satisfy min < max".into());
        }
        if self.dt_sim <= 0.0 || self.dt_policy <= 0.0 {
            problems.push("time steps must be positive".into());
        } else {
            let ratio = self.dt_policy / self.dt_sim;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                problems.push(format!(
                    "dt_policy {} is not an integer multiple of dt_sim {}",
                    self.dt_policy, self.dt_sim
                ));
            }
        }
    }
}

/// Acceleration command `(a_v, a_ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub a_v: f64,
    pub a_omega: f64,
}

impl Action {
    pub const fn new(a_v: f64, a_omega: f64) -> Self {
        Self { a_v, a_omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Goal,
    Timeout,
    OutOfBounds,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        !matches!(self, Outcome::Running)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Goal => "goal",
            Outcome::Timeout => "timeout",
            Outcome::OutOfBounds => "out_of_bounds",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Distance and heading error from the robot to the goal.
///
/// Within `goal_tolerance` the bearing is degenerate and `e` is reported as 0.
pub fn goal_features(state: &RobotState, goal: &Goal, goal_tolerance: f64) -> (f64, f64) {
    let dx = goal.x - state.x;
    let dy = goal.y - state.y;
    let d = dx.hypot(dy);
    if d < goal_tolerance {
        return (d, 0.0);
    }
    (d, wrap_angle(dy.atan2(dx) - state.theta))
}

#[inline]
fn sat(value: f64, lo: f64, hi: f64) -> f64 {
    value.max(lo).min(hi)
}

/// Advances the robot by one policy interval under a constant acceleration.
pub fn step(state: &RobotState, action: Action, limits: &MotionLimits) -> RobotState {
    integrate(*state, action, limits, false)
}

/// Like [`step`], but holds `ω = 0` for the whole interval (the evaluation
/// zero-lock clamp); `a_v` still applies.
pub fn step_omega_locked(state: &RobotState, a_v: f64, limits: &MotionLimits) -> RobotState {
    integrate(*state, Action::new(a_v, 0.0), limits, true)
}

fn integrate(mut s: RobotState, action: Action, limits: &MotionLimits, lock_omega: bool) -> RobotState {
    let n = limits.substeps();
    let dt = limits.dt_policy / n as f64;
    if lock_omega {
        s.omega = 0.0;
    }
    for _ in 0..n {
        s.v = sat(s.v + action.a_v * dt, limits.v_min, limits.v_max);
        if !lock_omega {
            s.omega = sat(s.omega + action.a_omega * dt, limits.omega_min, limits.omega_max);
        }
        let (sin, cos) = s.theta.sin_cos();
        s.x += s.v * cos * dt;
        s.y += s.v * sin * dt;
        s.theta = wrap_angle(s.theta + s.omega * dt);
        debug_assert!(s.v >= limits.v_min && s.v <= limits.v_max);
        debug_assert!(s.omega >= limits.omega_min && s.omega <= limits.omega_max);
        debug_assert!((-PI..PI).contains(&s.theta));
    }
    s
}

/// Termination test on the post-step state. Precedence: Goal, OutOfBounds, Timeout.
pub fn check_termination(
    state: &RobotState,
    goal: &Goal,
    steps_elapsed: usize,
    max_steps: usize,
    goal_tolerance: f64,
    workspace: &Workspace,
) -> Outcome {
    let d = (goal.x - state.x).hypot(goal.y - state.y);
    if d <= goal_tolerance {
        Outcome::Goal
    } else if !workspace.contains(state.x, state.y) {
        Outcome::OutOfBounds
    } else if steps_elapsed >= max_steps {
        Outcome::Timeout
    } else {
        Outcome::Running
    }
}

/// Random-walk parameters for nonstationary goals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovingGoalParams {
    /// Goal speed as a fraction of `v_max`; must stay below 1.
    pub speed_fraction: f64,
    /// Per-step heading perturbation is uniform in `±heading_jitter` rad.
    pub heading_jitter: f64,
}

impl Default for MovingGoalParams {
    fn default() -> Self {
        Self { speed_fraction: 0.5, heading_jitter: 0.2 }
    }
}

/// Moves a nonstationary goal by one interval, reflecting at the workspace
/// boundary. Static goals are returned unchanged.
pub fn advance_goal<R: Rng + ?Sized>(
    goal: &Goal,
    dt: f64,
    heading_jitter: f64,
    workspace: &Workspace,
    rng: &mut R,
) -> Goal {
    let GoalMode::Moving { speed, heading } = goal.mode else {
        return *goal;
    };
    let mut heading = heading;
    let mut x = goal.x + speed * heading.cos() * dt;
    let mut y = goal.y + speed * heading.sin() * dt;
    if x > workspace.x_max {
        x = 2.0 * workspace.x_max - x;
        heading = PI - heading;
    } else if x < workspace.x_min {
        x = 2.0 * workspace.x_min - x;
        heading = PI - heading;
    }
    if y > workspace.y_max {
        y = 2.0 * workspace.y_max - y;
        heading = -heading;
    } else if y < workspace.y_min {
        y = 2.0 * workspace.y_min - y;
        heading = -heading;
    }
    x = x.clamp(workspace.x_min, workspace.x_max);
    y = y.clamp(workspace.y_min, workspace.y_max);
    if heading_jitter > 0.0 {
        heading += rng.gen_range(-heading_jitter..=heading_jitter);
    }
    Goal { x, y, mode: GoalMode::Moving { speed, heading: wrap_angle(heading) } }
}
