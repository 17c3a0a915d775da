//! Shaped per-step reward: three task terms plus twelve shaping terms.

use serde::{Deserialize, Serialize};

use crate::kinematics::Outcome;

/// How the distance/heading progress terms are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapingMode {
    /// `r_d + r_θ = Φ(s_t) - Φ(s_{t+1})`.
    #[default]
    Plain,
    /// `r_d + r_θ = Φ(s_t) - γ Φ(s_{t+1})`.
    Discounted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub k_step: f64,
    pub k_d: f64,
    pub k_timeout: f64,
    pub k_theta: f64,
    pub k_omega: f64,
    pub k_v: f64,
    pub k_lat: f64,
    pub k_a_v: f64,
    pub k_a_omega: f64,
    pub k_ws: f64,
    pub k_wflip: f64,
    pub k_heading_inc: f64,
    pub k_heading_stall: f64,
    pub k_wstop: f64,
    pub k_wsign: f64,
    /// Angular-rate deadband (rad/s).
    pub w_db: f64,
    /// Heading-error deadband (rad).
    pub e_db: f64,
    pub d_goal_tol: f64,
    pub e_pad: f64,
    /// Assumed angular braking capability (rad/s²).
    pub a_omega_brake: f64,
    pub gamma: f64,
    pub shaping: ShapingMode,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            k_step: 0.01,
            k_d: 1.0,
            k_timeout: 0.1,
            k_theta: 1.0,
            k_omega: 0.5,
            k_v: 0.5,
            k_lat: 0.5,
            k_a_v: 0.1,
            k_a_omega: 0.1,
            k_ws: 1.2,
            k_wflip: 0.5,
            k_heading_inc: 0.5,
            k_heading_stall: 0.05,
            k_wstop: 1.0,
            k_wsign: 1.0,
            w_db: 0.001,
            e_db: 0.01,
            d_goal_tol: 0.10,
            e_pad: 0.05,
            a_omega_brake: 0.02,
            gamma: 0.95,
            shaping: ShapingMode::Plain,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self, problems: &mut Vec<String>) {
        let gains = [
            ("k_step", self.k_step),
            ("k_d", self.k_d),
            ("k_timeout", self.k_timeout),
            ("k_theta", self.k_theta),
            ("k_omega", self.k_omega),
            ("k_v", self.k_v),
            ("k_lat", self.k_lat),
            ("k_a_v", self.k_a_v),
            ("k_a_omega", self.k_a_omega),
            ("k_ws", self.k_ws),
            ("k_wflip", self.k_wflip),
            ("k_heading_inc", self.k_heading_inc),
            ("k_heading_stall", self.k_heading_stall),
            ("k_wstop", self.k_wstop),
            ("k_wsign", self.k_wsign),
        ];
        for (name, k) in gains {
            if !(k.is_finite() && k >= 0.0) {
                problems.push(format!("{name} must be a finite nonnegative gain (got {k})"));
            }
        }
        for (name, v) in [
            ("w_db", self.w_db),
            ("e_db", self.e_db),
            ("goalTol", self.d_goal_tol),
            ("e_pad", self.e_pad),
            ("a_omega_brake", self.a_omega_brake),
        ] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name} must be positive (got {v})"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            problems.push(format!("reward gamma must lie in [0, 1) (got {})", self.gamma));
        }
    }
}

/// One simulated transition, in continuous features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub d_t: f64,
    pub d_next: f64,
    pub e_t: f64,
    pub e_next: f64,
    pub v_next: f64,
    pub omega_t: f64,
    pub omega_next: f64,
    pub a_v: f64,
    pub a_omega: f64,
    pub outcome: Outcome,
    /// Remaining distance when the episode times out.
    pub d_timeout: f64,
    /// Sign of the episode's initial heading error, ±1.
    pub e0_sign: f64,
}

impl Transition {
    /// A transition with everything at rest and the episode still running.
    pub fn at_rest() -> Self {
        Self {
            d_t: 0.0,
            d_next: 0.0,
            e_t: 0.0,
            e_next: 0.0,
            v_next: 0.0,
            omega_t: 0.0,
            omega_next: 0.0,
            a_v: 0.0,
            a_omega: 0.0,
            outcome: Outcome::Running,
            d_timeout: 0.0,
            e0_sign: 1.0,
        }
    }
}

/// Per-term values of the shaping component, in the order they are listed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapingBreakdown {
    pub heading: f64,
    pub yaw_rate: f64,
    pub forward_speed: f64,
    pub lateral_speed: f64,
    pub acceleration: f64,
    pub hysteresis: f64,
    pub goal: f64,
    pub flip: f64,
    pub heading_increase: f64,
    pub heading_stall: f64,
    pub stop: f64,
    pub wrong_sign: f64,
}

impl ShapingBreakdown {
    pub const NAMES: [&'static str; 12] = [
        "r_theta", "r_omega", "r_v_par", "r_v_perp", "r_a", "r_hyst", "r_goal", "r_flip", "r_inc",
        "r_stall", "r_stop", "r_sign",
    ];

    pub fn as_array(&self) -> [f64; 12] {
        [
            self.heading,
            self.yaw_rate,
            self.forward_speed,
            self.lateral_speed,
            self.acceleration,
            self.hysteresis,
            self.goal,
            self.flip,
            self.heading_increase,
            self.heading_stall,
            self.stop,
            self.wrong_sign,
        ]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// `Φ(d, e) = k_d d + k_θ |e|`.
pub fn potential(d: f64, e: f64, w: &RewardWeights) -> f64 {
    w.k_d * d + w.k_theta * e.abs()
}

fn next_potential_factor(w: &RewardWeights) -> f64 {
    match w.shaping {
        ShapingMode::Plain => 1.0,
        ShapingMode::Discounted => w.gamma,
    }
}

/// Distance-progress term `r_d`.
pub fn distance_progress(tr: &Transition, w: &RewardWeights) -> f64 {
    w.k_d * (tr.d_t - next_potential_factor(w) * tr.d_next)
}

/// Heading-progress term `r_θ`.
pub fn heading_progress(tr: &Transition, w: &RewardWeights) -> f64 {
    w.k_theta * (tr.e_t.abs() - next_potential_factor(w) * tr.e_next.abs())
}

/// `R_task = r_step + r_d + r_timeout`.
pub fn task_reward(tr: &Transition, w: &RewardWeights) -> f64 {
    let r_step = -w.k_step;
    let r_d = distance_progress(tr, w);
    let r_timeout = if tr.outcome == Outcome::Timeout { -w.k_timeout * tr.d_timeout } else { 0.0 };
    r_step + r_d + r_timeout
}

/// Predicted heading swept while braking `ω` at `a_ω^B`.
pub fn stopping_angle(omega: f64, a_omega_brake: f64) -> f64 {
    omega * omega / (2.0 * a_omega_brake)
}

/// `R_shape` and its twelve components.
pub fn shaping_reward(tr: &Transition, w: &RewardWeights) -> (f64, ShapingBreakdown) {
    let e_abs = tr.e_next.abs();
    let cos_e = tr.e_next.cos();
    let sin_e = tr.e_next.sin();
    let align = (1.0 + e_abs.cos()) / 2.0;
    let omega = tr.omega_next;
    let delta_e = e_abs - tr.e_t.abs();

    let mut b = ShapingBreakdown {
        heading: heading_progress(tr, w),
        yaw_rate: -w.k_omega * align * omega * omega,
        forward_speed: w.k_v * tr.v_next * cos_e.max(0.0).powi(2),
        lateral_speed: -w.k_lat * tr.v_next * tr.v_next * sin_e * sin_e,
        acceleration: -w.k_a_v * tr.a_v * tr.a_v
            - w.k_a_omega * (0.5 + 0.5 * align) * tr.a_omega * tr.a_omega,
        heading_increase: -w.k_heading_inc * delta_e.max(0.0),
        ..ShapingBreakdown::default()
    };
    if e_abs < w.e_db {
        b.hysteresis = -w.k_ws * (omega.abs() - w.w_db).max(0.0).powi(2);
    }
    if tr.d_next <= w.d_goal_tol {
        b.goal = w.k_d * tr.d_t;
    }
    if tr.omega_t * omega < 0.0 {
        b.flip = -w.k_wflip;
    }
    if delta_e.abs() < w.e_db && e_abs > w.e_db {
        b.heading_stall = -w.k_heading_stall * e_abs;
    }
    let excess = (stopping_angle(omega, w.a_omega_brake) - (e_abs + w.e_pad)).max(0.0);
    b.stop = -w.k_wstop * excess * excess;
    let wrong = (-tr.e0_sign * omega - w.w_db).max(0.0);
    if wrong > 0.0 {
        b.wrong_sign = -w.k_wsign * wrong * wrong;
    }
    (b.total(), b)
}

/// `r_t = R_task + R_shape`.
pub fn total_reward(tr: &Transition, w: &RewardWeights) -> f64 {
    task_reward(tr, w) + shaping_reward(tr, w).0
}
