//! Run configuration, seeding and config hashing.
//!
//! The TOML layout mirrors the parameter tables: `[benchmark]` uses the
//! benchmark table's names (`goalTol`, `startMinDistToGoal`, `e_lock`, ...),
//! `[simulation]` and `[stabilizer]` the refinement table's.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::kinematics::{MotionLimits, MovingGoalParams, RobotState, Workspace};
use crate::learner::{LockRegion, TrainConfig, UpdateRule};
use crate::reward::{RewardWeights, ShapingMode};
use crate::stabilizer::{StabilizerParams, StageCostWeights};
use crate::statespace::{ActionGrid, BinningConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub episodes: usize,
    #[serde(rename = "evalEpisodes")]
    pub eval_episodes: usize,
    #[serde(rename = "goalTol")]
    pub goal_tol: f64,
    #[serde(rename = "startMinDistToGoal")]
    pub start_min_dist_to_goal: f64,
    /// Square workspace `[lo, hi]` on both axes.
    pub bounds: [f64; 2],
    /// Distance-bin width `[Δx, Δy]`; bins use `Δx`.
    pub grid_resolution: [f64; 2],
    pub d_max: f64,
    pub n_theta: usize,
    /// `[N_v, N_ω]`.
    pub velocity_bins: [usize; 2],
    pub v_bounds: [f64; 2],
    pub omega_bounds: [f64; 2],
    pub a_v_bounds: [f64; 2],
    pub a_omega_bounds: [f64; 2],
    /// `[Δa_v, Δa_ω]`.
    pub acc_grid: [f64; 2],
    pub e_db: f64,
    pub omega_db: f64,
    pub k_ws: f64,
    pub e_lock: f64,
    pub d_lock: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// `[ε₀, ε_final]`.
    pub epsilon: [f64; 2],
    pub rule: UpdateRule,
    pub max_steps: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        let lim = MotionLimits::default();
        let t = TrainConfig::default();
        let w = RewardWeights::default();
        let lock = LockRegion::default();
        Self {
            episodes: t.episodes,
            eval_episodes: 1000,
            goal_tol: w.d_goal_tol,
            start_min_dist_to_goal: 0.20,
            bounds: [lim.workspace.x_min, lim.workspace.x_max],
            grid_resolution: [1.0, 1.0],
            d_max: 36.0,
            n_theta: 24,
            velocity_bins: [4, 5],
            v_bounds: [lim.v_min, lim.v_max],
            omega_bounds: [lim.omega_min, lim.omega_max],
            a_v_bounds: [lim.a_v_min, lim.a_v_max],
            a_omega_bounds: [lim.a_omega_min, lim.a_omega_max],
            acc_grid: [0.10, 0.02],
            e_db: w.e_db,
            omega_db: w.w_db,
            k_ws: w.k_ws,
            e_lock: lock.e_lock,
            d_lock: lock.d_lock,
            alpha: t.alpha,
            gamma: t.gamma,
            epsilon: [t.eps0, t.eps_final],
            rule: t.rule,
            max_steps: 6000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt_policy: f64,
    pub dt_sim: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let lim = MotionLimits::default();
        Self { dt_policy: lim.dt_policy, dt_sim: lim.dt_sim }
    }
}

/// Reward gains not already listed under `[benchmark]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub k_step: f64,
    pub k_d: f64,
    pub k_timeout: f64,
    pub k_theta: f64,
    pub k_omega: f64,
    pub k_v: f64,
    pub k_lat: f64,
    pub k_a_v: f64,
    pub k_a_omega: f64,
    pub k_wflip: f64,
    pub k_heading_inc: f64,
    pub k_heading_stall: f64,
    pub k_wstop: f64,
    pub k_wsign: f64,
    pub e_pad: f64,
    pub a_omega_brake: f64,
    pub shaping: ShapingMode,
}

impl Default for RewardSection {
    fn default() -> Self {
        let w = RewardWeights::default();
        Self {
            k_step: w.k_step,
            k_d: w.k_d,
            k_timeout: w.k_timeout,
            k_theta: w.k_theta,
            k_omega: w.k_omega,
            k_v: w.k_v,
            k_lat: w.k_lat,
            k_a_v: w.k_a_v,
            k_a_omega: w.k_a_omega,
            k_wflip: w.k_wflip,
            k_heading_inc: w.k_heading_inc,
            k_heading_stall: w.k_heading_stall,
            k_wstop: w.k_wstop,
            k_wsign: w.k_wsign,
            e_pad: w.e_pad,
            a_omega_brake: w.a_omega_brake,
            shaping: w.shaping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizerSection {
    pub episodes: usize,
    pub alpha_crit: f64,
    pub gamma: f64,
    pub nu_bar: f64,
    #[serde(rename = "C_low")]
    pub c_low: f64,
    #[serde(rename = "C_up")]
    pub c_up: f64,
    pub d_scale: f64,
    pub w_d: f64,
    pub w_e: f64,
    pub w_u: f64,
    pub knowledge_transfer: bool,
    pub transfer_discounted: bool,
    pub explore_eps: f64,
}

impl Default for StabilizerSection {
    fn default() -> Self {
        let p = StabilizerParams::default();
        Self {
            episodes: p.episodes,
            alpha_crit: p.alpha_crit,
            gamma: p.gamma,
            nu_bar: p.nu_bar,
            c_low: p.c_min,
            c_up: p.c_max,
            d_scale: p.cost.d_scale,
            w_d: p.cost.w_d,
            w_e: p.cost.w_e,
            w_u: p.cost.w_u,
            knowledge_transfer: p.knowledge_transfer,
            transfer_discounted: p.transfer_discounted,
            explore_eps: p.explore_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartSection {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl Default for StartSection {
    fn default() -> Self {
        let s = RobotState::default();
        Self { x: s.x, y: s.y, theta: s.theta, v: s.v, omega: s.omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Matched goals per comparison.
    pub goals: usize,
    /// Goals per moving-goal sequence.
    pub moving_goals: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { goals: 2000, moving_goals: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub benchmark: BenchmarkSection,
    pub simulation: SimulationSection,
    pub reward: RewardSection,
    pub stabilizer: StabilizerSection,
    pub start: StartSection,
    pub moving: MovingGoalParams,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            benchmark: BenchmarkSection::default(),
            simulation: SimulationSection::default(),
            reward: RewardSection::default(),
            stabilizer: StabilizerSection::default(),
            start: StartSection::default(),
            moving: MovingGoalParams::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Named random sub-streams derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Train,
    Refine,
    Goals,
    Eval,
    MovingGoal,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::Train => "train",
            Stream::Refine => "refine",
            Stream::Goals => "goals",
            Stream::Eval => "eval",
            Stream::MovingGoal => "moving-goal",
        }
    }
}

/// `ChaCha8` seeded from `sha256(seed_le ‖ name)`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stream.name().as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 over the serialized config with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        let text = canon.to_toml().expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        stream_rng(self.seed, stream)
    }

    pub fn limits(&self) -> MotionLimits {
        let b = &self.benchmark;
        MotionLimits {
            v_min: b.v_bounds[0],
            v_max: b.v_bounds[1],
            omega_min: b.omega_bounds[0],
            omega_max: b.omega_bounds[1],
            a_v_min: b.a_v_bounds[0],
            a_v_max: b.a_v_bounds[1],
            a_omega_min: b.a_omega_bounds[0],
            a_omega_max: b.a_omega_bounds[1],
            workspace: Workspace { x_min: b.bounds[0], x_max: b.bounds[1], y_min: b.bounds[0], y_max: b.bounds[1] },
            dt_policy: self.simulation.dt_policy,
            dt_sim: self.simulation.dt_sim,
        }
    }

    /// Distance bins of width `Δx` covering `[0, d_max]`.
    pub fn distance_bins(&self) -> usize {
        let b = &self.benchmark;
        (b.d_max / b.grid_resolution[0]).round().max(1.0) as usize
    }

    pub fn env(&self) -> EnvConfig {
        let b = &self.benchmark;
        let r = &self.reward;
        let limits = self.limits();
        let weights = RewardWeights {
            k_step: r.k_step,
            k_d: r.k_d,
            k_timeout: r.k_timeout,
            k_theta: r.k_theta,
            k_omega: r.k_omega,
            k_v: r.k_v,
            k_lat: r.k_lat,
            k_a_v: r.k_a_v,
            k_a_omega: r.k_a_omega,
            k_ws: b.k_ws,
            k_wflip: r.k_wflip,
            k_heading_inc: r.k_heading_inc,
            k_heading_stall: r.k_heading_stall,
            k_wstop: r.k_wstop,
            k_wsign: r.k_wsign,
            w_db: b.omega_db,
            e_db: b.e_db,
            d_goal_tol: b.goal_tol,
            e_pad: r.e_pad,
            a_omega_brake: r.a_omega_brake,
            gamma: b.gamma,
            shaping: r.shaping,
        };
        let s = &self.start;
        EnvConfig {
            limits,
            binning: BinningConfig::from_limits(
                self.distance_bins(),
                b.d_max,
                b.n_theta,
                b.velocity_bins[0],
                b.velocity_bins[1],
                &limits,
            ),
            actions: ActionGrid::from_steps(&limits, b.acc_grid[0], b.acc_grid[1]),
            weights,
            lock: LockRegion { e_lock: b.e_lock, d_lock: b.d_lock },
            max_steps: b.max_steps,
            start: RobotState { x: s.x, y: s.y, theta: s.theta, v: s.v, omega: s.omega },
            start_min_dist: b.start_min_dist_to_goal,
            moving: self.moving,
        }
    }

    pub fn train(&self) -> TrainConfig {
        let b = &self.benchmark;
        TrainConfig {
            episodes: b.episodes,
            alpha: b.alpha,
            gamma: b.gamma,
            eps0: b.epsilon[0],
            eps_final: b.epsilon[1],
            rule: b.rule,
        }
    }

    pub fn stabilizer(&self) -> StabilizerParams {
        let s = &self.stabilizer;
        StabilizerParams {
            episodes: s.episodes,
            alpha_crit: s.alpha_crit,
            gamma: s.gamma,
            nu_bar: s.nu_bar,
            c_min: s.c_low,
            c_max: s.c_up,
            cost: StageCostWeights { w_d: s.w_d, w_e: s.w_e, w_u: s.w_u, d_scale: s.d_scale },
            knowledge_transfer: s.knowledge_transfer,
            transfer_discounted: s.transfer_discounted,
            explore_eps: s.explore_eps,
        }
    }

    /// Every problem found, or `Ok` if the config is usable.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let b = &self.benchmark;
        if !(b.grid_resolution[0] > 0.0 && b.grid_resolution[1] > 0.0) {
            problems.push("grid_resolution must be positive".into());
        }
        if !(b.bounds[0] < b.bounds[1]) {
            problems.push(format!("bounds must satisfy lo < hi (got {:?})", b.bounds));
        }
        if b.eval_episodes == 0 {
            problems.push("evalEpisodes must be >= 1".into());
        }
        if self.eval.goals == 0 || self.eval.moving_goals == 0 {
            problems.push("eval goal counts must be >= 1".into());
        }
        if problems.is_empty() {
            self.env().validate(&mut problems);
        }
        self.train().validate(&mut problems);
        self.stabilizer().validate(&mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}
