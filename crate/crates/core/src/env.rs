//! Episode stepping shared by training, refinement and evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kinematics::{
    self, check_termination, goal_features, Goal, MotionLimits, MovingGoalParams, Outcome,
    RobotState, Workspace,
};
use crate::learner::{apply_policy_rules, Directive, LockRegion, RuleMode};
use crate::reward::{total_reward, RewardWeights, Transition};
use crate::statespace::{ActionGrid, BinningConfig, DiscreteState};

/// Everything needed to simulate one goal-reaching episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub limits: MotionLimits,
    pub binning: BinningConfig,
    pub actions: ActionGrid,
    pub weights: RewardWeights,
    pub lock: LockRegion,
    pub max_steps: usize,
    pub start: RobotState,
    pub start_min_dist: f64,
    pub moving: MovingGoalParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            limits: MotionLimits::default(),
            binning: BinningConfig::default(),
            actions: ActionGrid::default(),
            weights: RewardWeights::default(),
            lock: LockRegion::default(),
            max_steps: 6000,
            start: RobotState::default(),
            start_min_dist: 0.20,
            moving: MovingGoalParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn goal_tolerance(&self) -> f64 {
        self.weights.d_goal_tol
    }

    pub fn n_states(&self) -> usize {
        self.binning.cardinality()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self, problems: &mut Vec<String>) {
        self.limits.validate(problems);
        self.binning.validate(problems);
        self.actions.validate(&self.limits, problems);
        self.weights.validate(problems);
        if self.max_steps == 0 {
            problems.push("max_steps must be >= 1".into());
        }
        if !(self.lock.e_lock >= 0.0 && self.lock.d_lock >= 0.0) {
            problems.push("e_lock and d_lock must be nonnegative".into());
        }
        if !(self.start_min_dist >= 0.0) {
            problems.push("startMinDistToGoal must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.moving.speed_fraction) {
            problems.push("moving-goal speed fraction must lie in [0, 1)".into());
        }
        if !self.limits.workspace.contains(self.start.x, self.start.y) {
            problems.push("start pose lies outside the workspace".into());
        }
    }

    /// Upper bound on `|r_t|` for any transition under these settings.
    pub fn reward_bound(&self) -> f64 {
        use std::f64::consts::PI;
        let w = &self.weights;
        let l = &self.limits;
        let ws = &l.workspace;
        let diag = (ws.x_max - ws.x_min).hypot(ws.y_max - ws.y_min);
        let step_len = l.v_max * l.dt_policy;
        let w_max = l.omega_min.abs().max(l.omega_max.abs());
        let a_v = l.a_v_min.abs().max(l.a_v_max.abs());
        let a_w = l.a_omega_min.abs().max(l.a_omega_max.abs());
        let stop = w_max * w_max / (2.0 * w.a_omega_brake);
        w.k_step
            + w.k_d * step_len
            + w.k_timeout * diag
            + w.k_theta * PI
            + w.k_omega * w_max * w_max
            + w.k_v * l.v_max
            + w.k_lat * l.v_max * l.v_max
            + w.k_a_v * a_v * a_v
            + w.k_a_omega * a_w * a_w
            + w.k_ws * w_max * w_max
            + w.k_d * (w.d_goal_tol + step_len)
            + w.k_wflip
            + w.k_heading_inc * PI
            + w.k_heading_stall * PI
            + w.k_wstop * stop * stop
            + w.k_wsign * w_max * w_max
    }
}

/// Uniform goal in the workspace, rejection-sampled at least `min_dist` from `start`.
pub fn sample_goal<R: Rng + ?Sized>(
    rng: &mut R,
    workspace: &Workspace,
    start: &RobotState,
    min_dist: f64,
) -> Goal {
    loop {
        let x = rng.gen_range(workspace.x_min..=workspace.x_max);
        let y = rng.gen_range(workspace.y_min..=workspace.y_max);
        if (x - start.x).hypot(y - start.y) >= min_dist {
            return Goal::fixed(x, y);
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Result of applying one action.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub transition: Transition,
    pub reward: f64,
    pub state: RobotState,
    pub discrete: DiscreteState,
    pub outcome: Outcome,
    /// Accelerations actually integrated (after the policy-level rules).
    pub applied: kinematics::Action,
}

/// A running episode: continuous state, goal and bookkeeping.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    cfg: &'a EnvConfig,
    pub state: RobotState,
    pub goal: Goal,
    pub steps: usize,
    pub d: f64,
    pub e: f64,
    pub discrete: DiscreteState,
    pub outcome: Outcome,
    e0_sign: f64,
}

impl<'a> Episode<'a> {
    pub fn new(cfg: &'a EnvConfig, goal: Goal) -> Self {
        Self::from_state(cfg, cfg.start, goal)
    }

    pub fn from_state(cfg: &'a EnvConfig, state: RobotState, goal: Goal) -> Self {
        let (d, e) = goal_features(&state, &goal, cfg.goal_tolerance());
        let discrete = cfg.binning.quantize(d, e, state.v, state.omega);
        Self { cfg, state, goal, steps: 0, d, e, discrete, outcome: Outcome::Running, e0_sign: sign(e) }
    }

    pub fn config(&self) -> &'a EnvConfig {
        self.cfg
    }

    /// Starts a new goal segment from the current pose (moving-goal sequences).
    pub fn retarget(&mut self, goal: Goal) {
        *self = Self::from_state(self.cfg, self.state, goal);
    }

    /// Next continuous state under `action_index` without advancing the episode.
    pub fn predict(&self, action_index: usize, mode: RuleMode) -> (RobotState, kinematics::Action) {
        let cfg = self.cfg;
        let proposed = cfg.actions.action(action_index);
        let ruled = apply_policy_rules(&self.state, self.d, self.e, proposed, mode, &cfg.limits, &cfg.weights, &cfg.lock);
        let next = match ruled.directive {
            Directive::LockOmega => kinematics::step_omega_locked(&self.state, ruled.action.a_v, &cfg.limits),
            Directive::None => kinematics::step(&self.state, ruled.action, &cfg.limits),
        };
        let applied = match ruled.directive {
            Directive::LockOmega => kinematics::Action::new(ruled.action.a_v, 0.0),
            Directive::None => ruled.action,
        };
        (next, applied)
    }

    /// Discrete successor and stage features under `action_index`, without advancing.
    pub fn predict_discrete(&self, action_index: usize, mode: RuleMode) -> (DiscreteState, f64, f64) {
        let (next, _) = self.predict(action_index, mode);
        let (d, e) = goal_features(&next, &self.goal, self.cfg.goal_tolerance());
        (self.cfg.binning.quantize(d, e, next.v, next.omega), d, e)
    }

    pub fn step(&mut self, action_index: usize, mode: RuleMode) -> StepOutput {
        debug_assert!(!self.outcome.is_terminal(), "stepping a finished episode");
        let cfg = self.cfg;
        let (next, applied) = self.predict(action_index, mode);
        self.steps += 1;
        let outcome = check_termination(
            &next,
            &self.goal,
            self.steps,
            cfg.max_steps,
            cfg.goal_tolerance(),
            &cfg.limits.workspace,
        );
        let (d_next, e_next) = goal_features(&next, &self.goal, cfg.goal_tolerance());
        let transition = Transition {
            d_t: self.d,
            d_next,
            e_t: self.e,
            e_next,
            v_next: next.v,
            omega_t: self.state.omega,
            omega_next: next.omega,
            a_v: applied.a_v,
            a_omega: applied.a_omega,
            outcome,
            d_timeout: d_next,
            e0_sign: self.e0_sign,
        };
        let reward = total_reward(&transition, &cfg.weights);
        self.state = next;
        self.d = d_next;
        self.e = e_next;
        self.discrete = cfg.binning.quantize(d_next, e_next, next.v, next.omega);
        self.outcome = outcome;
        StepOutput { transition, reward, state: next, discrete: self.discrete, outcome, applied }
    }

    /// Moves a nonstationary goal by one policy interval and refreshes features.
    pub fn advance_goal<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let cfg = self.cfg;
        self.goal = kinematics::advance_goal(
            &self.goal,
            cfg.limits.dt_policy,
            cfg.moving.heading_jitter,
            &cfg.limits.workspace,
            rng,
        );
        let (d, e) = goal_features(&self.state, &self.goal, cfg.goal_tolerance());
        self.d = d;
        self.e = e;
        self.discrete = cfg.binning.quantize(d, e, self.state.v, self.state.omega);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_goals_respect_min_distance() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let g = sample_goal(&mut rng, &cfg.limits.workspace, &cfg.start, 5.0);
            assert!(g.x.hypot(g.y) >= 5.0);
            assert!(cfg.limits.workspace.contains(g.x, g.y));
        }
    }

    #[test]
    fn episode_times_out_when_idle() {
        let cfg = EnvConfig { max_steps: 20, ..EnvConfig::default() };
        let mut ep = Episode::new(&cfg, Goal::fixed(10.0, 0.0));
        let idle = 4; // (0, 0)
        let mut last = None;
        while !ep.outcome.is_terminal() {
            last = Some(ep.step(idle, RuleMode::Eval));
        }
        let last = last.unwrap();
        assert_eq!(last.outcome, Outcome::Timeout);
        assert_eq!(ep.steps, 20);
        assert_eq!(last.transition.d_timeout, 10.0);
    }

    #[test]
    fn driving_straight_reaches_an_aligned_goal() {
        let cfg = EnvConfig::default();
        let mut ep = Episode::new(&cfg, Goal::fixed(2.0, 0.0));
        let forward = 7; // (+0.1, 0)
        while !ep.outcome.is_terminal() {
            ep.step(forward, RuleMode::Eval);
        }
        assert_eq!(ep.outcome, Outcome::Goal);
        assert!(ep.d <= 0.1);
    }

    #[test]
    fn reward_bound_dominates_observed_rewards() {
        let cfg = EnvConfig { max_steps: 400, ..EnvConfig::default() };
        let bound = cfg.reward_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let g = sample_goal(&mut rng, &cfg.limits.workspace, &cfg.start, 0.2);
            let mut ep = Episode::new(&cfg, g);
            while !ep.outcome.is_terminal() {
                let a = rng.gen_range(0..cfg.n_actions());
                let out = ep.step(a, RuleMode::Train);
                assert!(out.reward.abs() <= bound);
            }
        }
    }
}
