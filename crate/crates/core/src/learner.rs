//! Tabular Q-learning / SARSA trainer for the benchmark goal-reaching policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{sample_goal, EnvConfig, Episode};
use crate::error::{Error, Result};
use crate::kinematics::{Action, MotionLimits, Outcome, RobotState};
use crate::reward::RewardWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    #[serde(alias = "q-learning", alias = "q_learning")]
    QLearning,
    Sarsa,
}

impl std::str::FromStr for UpdateRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "qlearning" | "q-learning" | "q_learning" => Ok(Self::QLearning),
            "sarsa" => Ok(Self::Sarsa),
            other => Err(format!("unknown update rule {other:?} (expected qlearning or sarsa)")),
        }
    }
}

impl std::fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::QLearning => "qlearning",
            Self::Sarsa => "sarsa",
        })
    }
}

/// Dense action-value table, row-major over (state, action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Artifact(format!(
                "table has {} entries, expected {n_states} x {n_actions}",
                values.len()
            )));
        }
        Ok(Self { n_states, n_actions, values })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    #[inline]
    pub fn max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    #[inline]
    pub fn argmax(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub eps0: f64,
    pub eps_final: f64,
    pub rule: UpdateRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 30_000,
            alpha: 0.10,
            gamma: 0.95,
            eps0: 1.0,
            eps_final: 1e-3,
            rule: UpdateRule::QLearning,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            problems.push(format!("alpha must lie in (0, 1] (got {})", self.alpha));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            problems.push(format!("gamma must lie in [0, 1) (got {})", self.gamma));
        }
        if !(self.eps_final > 0.0 && self.eps_final <= self.eps0 && self.eps0 <= 1.0) {
            problems.push(format!(
                "exploration must satisfy 0 < eps_final <= eps0 <= 1 (got {} -> {})",
                self.eps0, self.eps_final
            ));
        }
    }
}

/// TD error. `next` is `None` on terminal transitions (no bootstrap).
pub fn td_error(
    rule: UpdateRule,
    q: &QTable,
    reward: f64,
    state: usize,
    action: usize,
    next: Option<(usize, Option<usize>)>,
    gamma: f64,
) -> Result<f64> {
    let bootstrap = match next {
        None => 0.0,
        Some((s_next, a_next)) => match rule {
            UpdateRule::QLearning => q.max(s_next),
            UpdateRule::Sarsa => q.get(s_next, a_next.ok_or(Error::MissingNextAction)?),
        },
    };
    Ok(reward + gamma * bootstrap - q.get(state, action))
}

#[inline]
pub fn update_q(q: &mut QTable, state: usize, action: usize, delta: f64, alpha: f64) {
    q.values[state * q.n_actions + action] += alpha * delta;
}

/// ε-greedy selection; the greedy branch breaks ties toward the lowest index.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, state: usize, eps: f64, rng: &mut R) -> usize {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        rng.gen_range(0..q.n_actions)
    } else {
        q.argmax(state)
    }
}

/// Geometric annealing from `eps0` at episode 0 to `eps_final` at the last episode.
pub fn epsilon_at(episode: usize, cfg: &TrainConfig) -> f64 {
    if cfg.episodes <= 1 {
        return cfg.eps0;
    }
    let frac = episode as f64 / (cfg.episodes - 1) as f64;
    cfg.eps0 * (cfg.eps_final / cfg.eps0).powf(frac)
}

/// Zero-lock region near the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockRegion {
    pub e_lock: f64,
    pub d_lock: f64,
}

impl Default for LockRegion {
    fn default() -> Self {
        Self { e_lock: 0.03, d_lock: 0.30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleMode {
    Train,
    Eval,
}

/// Instruction to the integrator beyond the acceleration command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directive {
    None,
    /// Hold `ω_{t+1} = 0` while `a_v` proceeds.
    LockOmega,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuledAction {
    pub action: Action,
    pub directive: Directive,
}

/// Policy-level angular rules. The lock region takes precedence over
/// hysteresis zeroing, which takes precedence over the proposal.
#[allow(clippy::too_many_arguments)]
pub fn apply_policy_rules(
    state: &RobotState,
    d: f64,
    e: f64,
    proposed: Action,
    mode: RuleMode,
    limits: &MotionLimits,
    weights: &RewardWeights,
    lock: &LockRegion,
) -> RuledAction {
    let mut action = proposed;
    if e.abs() <= lock.e_lock && d <= lock.d_lock {
        return match mode {
            RuleMode::Train => {
                let brake = (-state.omega / limits.dt_policy).clamp(limits.a_omega_min, limits.a_omega_max);
                action.a_omega = brake;
                RuledAction { action, directive: Directive::None }
            }
            RuleMode::Eval => {
                action.a_omega = 0.0;
                RuledAction { action, directive: Directive::LockOmega }
            }
        };
    }
    if e.abs() < weights.e_db && state.omega.abs() < weights.w_db {
        action.a_omega = 0.0;
    }
    RuledAction { action, directive: Directive::None }
}

/// Per-episode training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub ret: f64,
    pub epsilon: f64,
}

/// Trains the benchmark table from scratch.
pub fn train<R: Rng + ?Sized>(env: &EnvConfig, cfg: &TrainConfig, rng: &mut R) -> (QTable, Vec<TrainLogRow>) {
    train_with(env, cfg, rng, |_, _| {})
}

/// [`train`] with a per-episode observer (progress reporting, periodic checks).
pub fn train_with<R, F>(env: &EnvConfig, cfg: &TrainConfig, rng: &mut R, mut observe: F) -> (QTable, Vec<TrainLogRow>)
where
    R: Rng + ?Sized,
    F: FnMut(&QTable, &TrainLogRow),
{
    let mut q = QTable::zeros(env.n_states(), env.n_actions());
    let mut log = Vec::with_capacity(cfg.episodes);
    for k in 0..cfg.episodes {
        let eps = epsilon_at(k, cfg);
        let goal = sample_goal(rng, &env.limits.workspace, &env.start, env.start_min_dist);
        let mut ep = Episode::new(env, goal);
        let mut s = ep.discrete.packed;
        let mut a = select_action(&q, s, eps, rng);
        let mut ret = 0.0;
        loop {
            let out = ep.step(a, RuleMode::Train);
            ret += out.reward;
            let s_next = out.discrete.packed;
            if out.outcome.is_terminal() {
                let delta = out.reward - q.get(s, a);
                update_q(&mut q, s, a, delta, cfg.alpha);
                break;
            }
            let a_next = select_action(&q, s_next, eps, rng);
            let delta = td_error(cfg.rule, &q, out.reward, s, a, Some((s_next, Some(a_next))), cfg.gamma)
                .expect("next action supplied");
            update_q(&mut q, s, a, delta, cfg.alpha);
            s = s_next;
            a = a_next;
        }
        let row = TrainLogRow { episode: k, outcome: ep.outcome, steps: ep.steps, ret, epsilon: eps };
        observe(&q, &row);
        log.push(row);
    }
    (q, log)
}

/// Deterministic greedy policy over a frozen table.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    q: &'a QTable,
}

impl GreedyPolicy<'_> {
    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.q.argmax(state)
    }
}

pub fn greedy_policy(q: &QTable) -> GreedyPolicy<'_> {
    GreedyPolicy { q }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_with(values: &[(usize, usize, f64)]) -> QTable {
        let mut q = QTable::zeros(4, 9);
        for &(s, a, v) in values {
            q.values[s * 9 + a] = v;
        }
        q
    }

    #[test]
    fn td_error_examples() {
        let q = QTable::zeros(4, 9);
        assert_eq!(td_error(UpdateRule::QLearning, &q, 1.0, 0, 0, None, 0.95).unwrap(), 1.0);

        let q = table_with(&[(0, 2, 1.0), (1, 5, 2.0)]);
        let d = td_error(UpdateRule::QLearning, &q, 0.0, 0, 2, Some((1, None)), 0.95).unwrap();
        assert_abs_diff_eq!(d, 0.95 * 2.0 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.9, epsilon = 1e-12);

        let greedy = q.argmax(1);
        let s = td_error(UpdateRule::Sarsa, &q, 0.0, 0, 2, Some((1, Some(greedy))), 0.95).unwrap();
        assert_eq!(s, d);

        assert!(matches!(
            td_error(UpdateRule::Sarsa, &q, 0.0, 0, 2, Some((1, None)), 0.95),
            Err(Error::MissingNextAction)
        ));
    }

    #[test]
    fn update_examples() {
        let mut q = table_with(&[(0, 0, 1.0)]);
        let before = q.clone();
        update_q(&mut q, 0, 0, 0.0, 0.1);
        assert_eq!(q, before);
        update_q(&mut q, 0, 0, 0.9, 0.1);
        assert_abs_diff_eq!(q.get(0, 0), 1.09, epsilon = 1e-12);
        assert_eq!(q.values[1..], before.values[1..]);

        let mut a = table_with(&[(2, 3, 0.5)]);
        let mut b = a.clone();
        update_q(&mut a, 2, 3, 0.4, 0.1);
        update_q(&mut a, 2, 3, -1.3, 0.1);
        update_q(&mut b, 2, 3, 0.4 - 1.3, 0.1);
        assert_abs_diff_eq!(a.get(2, 3), b.get(2, 3), epsilon = 1e-15);
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = table_with(&[(1, 6, 3.0)]);
        assert_eq!(select_action(&q, 1, 0.0, &mut rng), 6);
        assert_eq!(select_action(&q, 0, 0.0, &mut rng), 0);
        assert_eq!(greedy_policy(&q).action(1), 6);
    }

    #[test]
    fn uniform_exploration_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let q = table_with(&[(0, 6, 3.0)]);
        let n = 100_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            counts[select_action(&q, 0, 1.0, &mut rng)] += 1;
        }
        let p = 1.0 / 9.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert_abs_diff_eq!(epsilon_at(cfg.episodes - 1, &cfg), 1e-3, epsilon = 1e-15);
        let cfg = TrainConfig { episodes: 30_001, ..cfg };
        assert_abs_diff_eq!(epsilon_at(15_000, &cfg), 1e-3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(epsilon_at(15_000, &cfg), 0.0316, epsilon = 1e-4);
    }

    #[test]
    fn policy_rules() {
        let lim = MotionLimits::default();
        let w = RewardWeights::default();
        let lock = LockRegion::default();
        let proposed = Action::new(0.1, 0.02);

        let s = RobotState { omega: 0.0005, ..RobotState::default() };
        let r = apply_policy_rules(&s, 5.0, 0.005, proposed, RuleMode::Train, &lim, &w, &lock);
        assert_eq!(r.action, Action::new(0.1, 0.0));
        assert_eq!(r.directive, Directive::None);

        let s = RobotState { omega: 0.01, ..RobotState::default() };
        let r = apply_policy_rules(&s, 0.2, 0.01, proposed, RuleMode::Eval, &lim, &w, &lock);
        assert_eq!(r.directive, Directive::LockOmega);
        assert_eq!(r.action.a_v, 0.1);

        let r = apply_policy_rules(&s, 0.2, 0.01, proposed, RuleMode::Train, &lim, &w, &lock);
        assert_eq!(r.directive, Directive::None);
        assert_eq!(r.action.a_omega, -0.02);
        let slow = RobotState { omega: 0.0005, ..RobotState::default() };
        let r = apply_policy_rules(&slow, 0.2, 0.01, proposed, RuleMode::Train, &lim, &w, &lock);
        assert_abs_diff_eq!(r.action.a_omega, -0.01, epsilon = 1e-15);

        let r = apply_policy_rules(&s, 5.0, 0.5, proposed, RuleMode::Eval, &lim, &w, &lock);
        assert_eq!(r, RuledAction { action: proposed, directive: Directive::None });
    }

    #[test]
    fn zero_episodes_gives_zero_table() {
        let env = EnvConfig::default();
        let cfg = TrainConfig { episodes: 0, ..TrainConfig::default() };
        let (q, log) = train(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(q.nonzero_count(), 0);
        assert!(log.is_empty());
        assert_eq!(q.n_states(), 17_280);
    }

    #[test]
    fn training_is_deterministic() {
        let env = EnvConfig { max_steps: 300, ..EnvConfig::default() };
        let cfg = TrainConfig { episodes: 20, ..TrainConfig::default() };
        let (a, la) = train(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        let (b, lb) = train(&env, &cfg, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(a.nonzero_count() > 0);
    }
}
