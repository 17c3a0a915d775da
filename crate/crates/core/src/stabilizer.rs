//! Lyapunov-like stabilizer over the benchmark policy.
//!
//! A tabular cost critic proposes `a* = argmin_a Q̂(s, a)`. Each proposal is
//! backed by a constrained critic update: the new value at `(s_t, a*)` must sit
//! inside the quadratic envelope `[C_min‖φ‖², C_max‖φ‖²]` and at least `ν̄`
//! below the last accepted value `q_ref`. When that interval is empty the
//! agent hands control to the benchmark policy. Because `q_ref` drops by at
//! least `ν̄` per accepted update, at most `⌊(q_ref₀ - ν̄)/ν̄⌋` updates can be
//! accepted in a rollout, after which the benchmark policy is in charge.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::env::{sample_goal, EnvConfig, Episode, StepOutput};
use crate::error::{Error, Result};
use crate::kinematics::{MotionLimits, Outcome};
use crate::learner::{QTable, RuleMode};
use crate::statespace::BinningConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageCostWeights {
    pub w_d: f64,
    pub w_e: f64,
    pub w_u: f64,
    pub d_scale: f64,
}

impl Default for StageCostWeights {
    fn default() -> Self {
        Self { w_d: 1.0, w_e: 0.1, w_u: 0.01, d_scale: 35.36 }
    }
}

/// `φ = (d / d_scale, e / π)`.
pub fn embed(d: f64, e: f64, weights: &StageCostWeights) -> [f64; 2] {
    [d / weights.d_scale, e / PI]
}

pub fn phi_norm(d: f64, e: f64, weights: &StageCostWeights) -> f64 {
    let [a, b] = embed(d, e, weights);
    a.hypot(b)
}

/// Normalized quadratic stage cost on distance, heading error and effort.
pub fn stage_cost(d: f64, e: f64, a_v: f64, a_omega: f64, weights: &StageCostWeights, limits: &MotionLimits) -> f64 {
    let [pd, pe] = embed(d, e, weights);
    let uv = a_v / limits.a_v_max.abs().max(limits.a_v_min.abs());
    let uw = a_omega / limits.a_omega_max.abs().max(limits.a_omega_min.abs());
    weights.w_d * pd * pd + weights.w_e * pe * pe + weights.w_u * (uv * uv + uw * uw)
}

/// `(C_min ε², C_max ε²)`.
pub fn kappa_bounds(phi_norm: f64, c_min: f64, c_max: f64) -> (f64, f64) {
    let sq = phi_norm * phi_norm;
    (c_min * sq, c_max * sq)
}

/// Deterministic cap on accepted updates in one rollout: `⌊max((q₀ - ν̄)/ν̄, 0)⌋`.
pub fn update_budget(q_ref0: f64, nu_bar: f64) -> u64 {
    debug_assert!(nu_bar > 0.0);
    let t = ((q_ref0 - nu_bar) / nu_bar).max(0.0);
    t.floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizerParams {
    pub episodes: usize,
    pub alpha_crit: f64,
    pub gamma: f64,
    pub nu_bar: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub cost: StageCostWeights,
    /// Back up benchmark-policy segments into the critic.
    pub knowledge_transfer: bool,
    /// Discount the knowledge-transfer backup with `gamma` (undiscounted otherwise).
    pub transfer_discounted: bool,
    /// Probability of proposing a uniformly random action during refinement.
    pub explore_eps: f64,
}

impl Default for StabilizerParams {
    fn default() -> Self {
        Self {
            episodes: 2000,
            alpha_crit: 0.1,
            gamma: 0.95,
            nu_bar: 1e-2,
            c_min: 0.1,
            c_max: 500.0,
            cost: StageCostWeights::default(),
            knowledge_transfer: true,
            transfer_discounted: false,
            explore_eps: 0.0,
        }
    }
}

impl StabilizerParams {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(self.nu_bar > 0.0 && self.nu_bar.is_finite()) {
            problems.push(format!("nu_bar must be positive (got {})", self.nu_bar));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max && self.c_max.is_finite()) {
            problems.push(format!("K-infinity constants must satisfy 0 < C_low < C_up (got {}, {})", self.c_min, self.c_max));
        }
        if !(self.alpha_crit > 0.0 && self.alpha_crit <= 1.0) {
            problems.push(format!("alpha_crit must lie in (0, 1] (got {})", self.alpha_crit));
        }
        if !(0.0..=1.0).contains(&self.explore_eps) {
            problems.push(format!("explore_eps must lie in [0, 1] (got {})", self.explore_eps));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("critic gamma must lie in (0, 1] (got {})", self.gamma));
        }
        let c = &self.cost;
        if !(c.w_d >= 0.0 && c.w_e >= 0.0 && c.w_u >= 0.0) {
            problems.push("cost weights must be nonnegative".into());
        }
        if !(c.d_scale > 0.0) {
            problems.push("d_scale must be positive".into());
        }
    }
}

/// Per-rollout reference memory `(s†, a†, q_ref)` and budget counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub state: usize,
    pub action: usize,
    pub q_ref: f64,
    pub q_ref0: f64,
    pub accepted: u64,
    pub suspended: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Accepted,
    Infeasible,
}

/// Critic table plus the rollout's reference memory.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    n_states: usize,
    n_actions: usize,
    table: Vec<f64>,
    /// `‖φ(s)‖²` at each state's bin center.
    phi_sq: Vec<f64>,
    pub c_min: f64,
    pub c_max: f64,
    pub nu_bar: f64,
    pub reference: Reference,
}

fn phi_sq_table(binning: &BinningConfig, cost: &StageCostWeights) -> Vec<f64> {
    (0..binning.cardinality())
        .map(|s| {
            let (d, e) = binning.center_features(s).expect("label in range");
            let n = phi_norm(d, e, cost);
            n * n
        })
        .collect()
}

impl CriticState {
    /// Every cell starts at its state's upper bound `κ_max(‖φ(s)‖)`.
    pub fn pessimistic(binning: &BinningConfig, n_actions: usize, params: &StabilizerParams) -> Self {
        let phi_sq = phi_sq_table(binning, &params.cost);
        let table = phi_sq
            .iter()
            .flat_map(|&p| std::iter::repeat(params.c_max * p).take(n_actions))
            .collect();
        Self::assemble(binning.cardinality(), n_actions, table, phi_sq, params)
    }

    /// All-zero table, used to visualize an untrained critic.
    pub fn zeros(binning: &BinningConfig, n_actions: usize, params: &StabilizerParams) -> Self {
        let phi_sq = phi_sq_table(binning, &params.cost);
        let n = binning.cardinality();
        Self::assemble(n, n_actions, vec![0.0; n * n_actions], phi_sq, params)
    }

    pub fn from_table(binning: &BinningConfig, n_actions: usize, table: Vec<f64>, params: &StabilizerParams) -> Result<Self> {
        let n = binning.cardinality();
        if table.len() != n * n_actions {
            return Err(Error::Artifact(format!("critic has {} cells, expected {n} x {n_actions}", table.len())));
        }
        Ok(Self::assemble(n, n_actions, table, phi_sq_table(binning, &params.cost), params))
    }

    fn assemble(n_states: usize, n_actions: usize, table: Vec<f64>, phi_sq: Vec<f64>, p: &StabilizerParams) -> Self {
        Self {
            n_states,
            n_actions,
            table,
            phi_sq,
            c_min: p.c_min,
            c_max: p.c_max,
            nu_bar: p.nu_bar,
            reference: Reference { state: 0, action: 0, q_ref: 0.0, q_ref0: 0.0, accepted: 0, suspended: false },
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        &self.table[state * self.n_actions..(state + 1) * self.n_actions]
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.table[state * self.n_actions + action]
    }

    /// `κ` envelope at a state's bin center.
    #[inline]
    pub fn bounds(&self, state: usize) -> (f64, f64) {
        let p = self.phi_sq[state];
        (self.c_min * p, self.c_max * p)
    }

    /// Largest `κ_max` over all states.
    pub fn global_kappa_max(&self) -> f64 {
        self.phi_sq.iter().fold(0.0f64, |m, &p| m.max(self.c_max * p))
    }

    /// Lowest-cost action, lowest index on ties.
    #[inline]
    pub fn propose_action(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q < row[best] {
                best = a;
            }
        }
        best
    }

    #[inline]
    pub fn min_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Resets the reference memory at the start of a rollout.
    pub fn begin_rollout(&mut self, state: usize, action: usize) {
        let q = self.get(state, action);
        self.reference = Reference { state, action, q_ref: q, q_ref0: q, accepted: 0, suspended: false };
    }

    /// Admissible interval for a new value at `state`, if nonempty.
    #[inline]
    pub fn feasible_interval(&self, state: usize) -> Option<(f64, f64)> {
        let (lo, hi) = self.bounds(state);
        // accepted values stay >= ν̄, which is what makes the update budget a bound
        let lo = lo.max(self.nu_bar);
        let q = self.reference.q_ref;
        let mut cap = q - self.nu_bar;
        // rounding can leave q - cap a hair under ν̄
        while q - cap < self.nu_bar {
            cap = cap.next_down();
        }
        let hi = hi.min(cap);
        (lo <= hi).then_some((lo, hi))
    }

    pub fn budget(&self) -> u64 {
        update_budget(self.reference.q_ref0, self.nu_bar)
    }

    /// Damped TD step at `(state, action)` clipped into the feasible interval.
    pub fn constrained_update(&mut self, state: usize, action: usize, td_target: f64, alpha: f64) -> Result<UpdateOutcome> {
        if self.reference.suspended {
            return Err(Error::CriticSuspended);
        }
        let Some((lo, hi)) = self.feasible_interval(state) else {
            return Ok(UpdateOutcome::Infeasible);
        };
        let idx = state * self.n_actions + action;
        let current = self.table[idx];
        let value = (current + alpha * (td_target - current)).clamp(lo, hi);
        debug_assert!(self.reference.q_ref - value >= self.nu_bar);
        self.table[idx] = value;
        let r = &mut self.reference;
        r.state = state;
        r.action = action;
        r.q_ref = value;
        r.accepted += 1;
        Ok(UpdateOutcome::Accepted)
    }

    /// Writes a backed-up cost into `(state, action)`, clipped into that
    /// state's envelope. Leaves the reference memory untouched.
    pub fn knowledge_transfer(&mut self, state: usize, action: usize, segment_costs: &[f64], terminal_value: f64, gamma: f64) {
        if segment_costs.is_empty() {
            return;
        }
        let mut discount = 1.0;
        let mut total = 0.0;
        for &c in segment_costs {
            total += discount * c;
            discount *= gamma;
        }
        total += discount * terminal_value;
        let (lo, hi) = self.bounds(state);
        self.table[state * self.n_actions + action] = total.clamp(lo, hi);
    }

    /// Checks every cell against its envelope; returns the number of violations.
    pub fn bound_violations(&self) -> usize {
        (0..self.n_states)
            .map(|s| {
                let (lo, hi) = self.bounds(s);
                self.row(s).iter().filter(|&&q| q < lo || q > hi).count()
            })
            .sum()
    }
}

/// Per-rollout audit of the decrease and budget invariants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutAudit {
    pub q_ref0: f64,
    pub budget: u64,
    pub accepted: u64,
    pub fallbacks: u64,
    pub transfers: u64,
    /// Accepted updates whose `q_ref` gap fell below `ν̄`.
    pub decrease_violations: u64,
    /// Written cells outside their κ envelope.
    pub bound_violations: u64,
}

impl RolloutAudit {
    pub fn budget_exceeded(&self) -> bool {
        self.accepted > self.budget
    }
}

/// One decision of the stabilized policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilizedAction {
    pub action: usize,
    pub fallback: bool,
}

/// Drives one rollout: proposals, constrained updates, fallback to the
/// benchmark table and knowledge-transfer backups of fallback segments.
#[derive(Debug)]
pub struct StabilizedRollout<'a> {
    critic: &'a mut CriticState,
    benchmark: &'a QTable,
    params: &'a StabilizerParams,
    /// First `(state, action)` of the open fallback segment and its stage costs.
    segment_start: Option<(usize, usize)>,
    segment: Vec<f64>,
    audit: RolloutAudit,
}

impl<'a> StabilizedRollout<'a> {
    /// The rollout's `params` govern the margin and envelope constants; the
    /// critic's copies are overwritten.
    pub fn begin(critic: &'a mut CriticState, benchmark: &'a QTable, params: &'a StabilizerParams, s0: usize) -> Self {
        critic.nu_bar = params.nu_bar;
        critic.c_min = params.c_min;
        critic.c_max = params.c_max;
        let a0 = critic.propose_action(s0);
        critic.begin_rollout(s0, a0);
        let audit = RolloutAudit { q_ref0: critic.reference.q_ref0, budget: critic.budget(), ..Default::default() };
        Self { critic, benchmark, params, segment_start: None, segment: Vec::new(), audit }
    }

    pub fn critic(&self) -> &CriticState {
        self.critic
    }

    pub fn params(&self) -> &StabilizerParams {
        self.params
    }

    pub fn audit(&self) -> &RolloutAudit {
        &self.audit
    }

    /// Chooses the action at `state`: the critic argmin if a constrained
    /// update is feasible there, the benchmark action otherwise.
    pub fn decide(&mut self, state: usize) -> StabilizedAction {
        self.decide_with(state, None)
    }

    /// Like [`decide`](Self::decide) but executes `explore` instead of the
    /// critic argmin when the update is feasible.
    pub fn decide_with(&mut self, state: usize, explore: Option<usize>) -> StabilizedAction {
        if self.critic.feasible_interval(state).is_some() {
            if self.critic.reference.suspended {
                let terminal = self.critic.min_value(state);
                self.close_segment(terminal);
                self.critic.reference.suspended = false;
            }
            let action = explore.unwrap_or_else(|| self.critic.propose_action(state));
            StabilizedAction { action, fallback: false }
        } else {
            self.critic.reference.suspended = true;
            self.audit.fallbacks += 1;
            let action = self.benchmark.argmax(state);
            self.segment_start.get_or_insert((state, action));
            StabilizedAction { action, fallback: true }
        }
    }

    /// Feeds back the transition produced by the last decision.
    pub fn observe(&mut self, state: usize, decision: StabilizedAction, cost: f64, out: &StepOutput) -> Result<()> {
        if decision.fallback {
            self.segment.push(cost);
            if out.outcome.is_terminal() {
                let terminal = self.terminal_value(out);
                self.close_segment(terminal);
            }
            return Ok(());
        }
        let target = cost + self.params.gamma * self.terminal_value(out);
        let q_prev = self.critic.reference.q_ref;
        match self.critic.constrained_update(state, decision.action, target, self.params.alpha_crit)? {
            UpdateOutcome::Accepted => {
                self.audit.accepted += 1;
                if q_prev - self.critic.reference.q_ref < self.critic.nu_bar {
                    self.audit.decrease_violations += 1;
                }
                let (lo, hi) = self.critic.bounds(state);
                let v = self.critic.get(state, decision.action);
                if v < lo || v > hi {
                    self.audit.bound_violations += 1;
                }
            }
            // feasibility was established in `decide` and nothing changed since
            UpdateOutcome::Infeasible => unreachable!("feasible state rejected its update"),
        }
        Ok(())
    }

    /// Cost-to-go bootstrap after a transition: zero at capture, the global
    /// upper envelope on leaving the workspace, the critic minimum otherwise.
    fn terminal_value(&self, out: &StepOutput) -> f64 {
        match out.outcome {
            Outcome::Goal => 0.0,
            Outcome::OutOfBounds => self.critic.global_kappa_max(),
            Outcome::Running | Outcome::Timeout => self.critic.min_value(out.discrete.packed),
        }
    }

    fn close_segment(&mut self, terminal: f64) {
        let Some((state, action)) = self.segment_start.take() else {
            return;
        };
        if self.params.knowledge_transfer {
            let gamma = if self.params.transfer_discounted { self.params.gamma } else { 1.0 };
            self.critic.knowledge_transfer(state, action, &self.segment, terminal, gamma);
            let (lo, hi) = self.critic.bounds(state);
            let v = self.critic.get(state, action);
            if v < lo || v > hi {
                self.audit.bound_violations += 1;
            }
            self.audit.transfers += 1;
        }
        self.segment.clear();
    }

    pub fn finish(self) -> RolloutAudit {
        self.audit
    }
}

/// Stage cost of a realized step.
pub fn step_cost(d: f64, e: f64, out: &StepOutput, params: &StabilizerParams, limits: &MotionLimits) -> f64 {
    stage_cost(d, e, out.applied.a_v, out.applied.a_omega, &params.cost, limits)
}

/// Runs one greedy stabilized episode to termination, reporting every step.
pub fn run_stabilized<F>(
    critic: &mut CriticState,
    benchmark: &QTable,
    params: &StabilizerParams,
    ep: &mut Episode<'_>,
    on_step: F,
) -> Result<RolloutAudit>
where
    F: FnMut(&Episode<'_>, StabilizedAction, &StepOutput),
{
    rollout_inner(critic, benchmark, params, ep, None::<&mut rand::rngs::mock::StepRng>, on_step)
}

fn rollout_inner<R, F>(
    critic: &mut CriticState,
    benchmark: &QTable,
    params: &StabilizerParams,
    ep: &mut Episode<'_>,
    mut explore: Option<&mut R>,
    mut on_step: F,
) -> Result<RolloutAudit>
where
    R: Rng + ?Sized,
    F: FnMut(&Episode<'_>, StabilizedAction, &StepOutput),
{
    let limits = ep.config().limits;
    let n_actions = critic.n_actions();
    let mut rollout = StabilizedRollout::begin(critic, benchmark, params, ep.discrete.packed);
    while !ep.outcome.is_terminal() {
        let s = ep.discrete.packed;
        let (d, e) = (ep.d, ep.e);
        let random = match explore.as_deref_mut() {
            Some(rng) if params.explore_eps > 0.0 => {
                (rng.gen::<f64>() < params.explore_eps).then(|| rng.gen_range(0..n_actions))
            }
            _ => None,
        };
        let decision = rollout.decide_with(s, random);
        let out = ep.step(decision.action, RuleMode::Eval);
        let cost = step_cost(d, e, &out, params, &limits);
        rollout.observe(s, decision, cost, &out)?;
        on_step(ep, decision, &out);
    }
    Ok(rollout.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineLogRow {
    pub episode: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub audit: RolloutAudit,
}

/// Refines a pessimistically initialized critic over `params.episodes`
/// rollouts on freshly sampled goals.
pub fn refine<R: Rng + ?Sized>(
    env: &EnvConfig,
    benchmark: &QTable,
    params: &StabilizerParams,
    rng: &mut R,
) -> Result<(CriticState, Vec<RefineLogRow>)> {
    let critic = CriticState::pessimistic(&env.binning, env.n_actions(), params);
    refine_from(critic, env, benchmark, params, rng)
}

pub fn refine_from<R: Rng + ?Sized>(
    mut critic: CriticState,
    env: &EnvConfig,
    benchmark: &QTable,
    params: &StabilizerParams,
    rng: &mut R,
) -> Result<(CriticState, Vec<RefineLogRow>)> {
    if benchmark.n_states() != critic.n_states() || benchmark.n_actions() != critic.n_actions() {
        return Err(Error::SpaceMismatch {
            artifact: format!("{} x {}", benchmark.n_states(), benchmark.n_actions()),
            config: format!("{} x {}", critic.n_states(), critic.n_actions()),
        });
    }
    let mut log = Vec::with_capacity(params.episodes);
    for k in 0..params.episodes {
        let goal = sample_goal(rng, &env.limits.workspace, &env.start, env.start_min_dist);
        let mut ep = Episode::new(env, goal);
        let audit = rollout_inner(&mut critic, benchmark, params, &mut ep, Some(&mut *rng), |_, _, _| {})?;
        log.push(RefineLogRow { episode: k, outcome: ep.outcome, steps: ep.steps, audit });
    }
    Ok((critic, log))
}
