//! Matched-goal evaluation of the benchmark and stabilized policies.

pub mod export;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{sample_goal, EnvConfig, Episode, StepOutput};
use crate::error::{Error, Result};
use crate::kinematics::{Goal, MotionLimits, Outcome, RobotState, Workspace};
use crate::learner::{QTable, RuleMode};
use crate::stabilizer::{step_cost, CriticState, StabilizedAction, StabilizedRollout, StabilizerParams};
use crate::statespace::BinningConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Benchmark,
    Stabilized,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Benchmark => "benchmark",
            PolicyKind::Stabilized => "stabilizer",
        }
    }
}

/// A frozen policy. The stabilized variant learns only on a private copy of
/// its critic, so the shared one is never written.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Benchmark(&'a QTable),
    Stabilized { benchmark: &'a QTable, critic: &'a CriticState, params: &'a StabilizerParams },
}

impl Policy<'_> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Benchmark(_) => PolicyKind::Benchmark,
            Policy::Stabilized { .. } => PolicyKind::Stabilized,
        }
    }

    fn private_critic(&self) -> Option<CriticState> {
        match self {
            Policy::Benchmark(_) => None,
            Policy::Stabilized { critic, .. } => Some((*critic).clone()),
        }
    }

    fn spaces(&self) -> (usize, usize) {
        match self {
            Policy::Benchmark(q) | Policy::Stabilized { benchmark: q, .. } => (q.n_states(), q.n_actions()),
        }
    }
}

/// One row of a recorded trajectory. `action`, `a_v`, `a_omega` and
/// `fallback` describe the decision taken *from* this sample; the last sample
/// of an episode has none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub a_v: f64,
    pub a_omega: f64,
    pub d: f64,
    pub e: f64,
    pub fallback: bool,
    pub action: Option<usize>,
    pub state: usize,
    pub goal_x: f64,
    pub goal_y: f64,
}

impl TrajectorySample {
    fn at(ep: &Episode<'_>, t: f64) -> Self {
        let s = &ep.state;
        Self {
            t,
            x: s.x,
            y: s.y,
            theta: s.theta,
            v: s.v,
            omega: s.omega,
            a_v: 0.0,
            a_omega: 0.0,
            d: ep.d,
            e: ep.e,
            fallback: false,
            action: None,
            state: ep.discrete.packed,
            goal_x: ep.goal.x,
            goal_y: ep.goal.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub goal: Goal,
    pub policy: PolicyKind,
    pub outcome: Outcome,
    pub steps: usize,
    pub final_distance: f64,
    pub fallback_count: u64,
    pub trajectory: Vec<TrajectorySample>,
    pub effort: f64,
}

enum Driver<'c> {
    Benchmark(&'c QTable),
    Stabilized(StabilizedRollout<'c>),
}

impl Driver<'_> {
    fn decide(&mut self, state: usize) -> StabilizedAction {
        match self {
            Driver::Benchmark(q) => StabilizedAction { action: q.argmax(state), fallback: false },
            Driver::Stabilized(r) => r.decide(state),
        }
    }

    fn observe(&mut self, state: usize, d: f64, e: f64, dec: StabilizedAction, out: &StepOutput, limits: &MotionLimits) -> Result<()> {
        match self {
            Driver::Benchmark(_) => Ok(()),
            Driver::Stabilized(r) => {
                let cost = step_cost(d, e, out, r.params(), limits);
                r.observe(state, dec, cost, out)
            }
        }
    }
}

/// Steps `ep` to termination, appending samples; returns the fallback count.
fn drive<R: Rng + ?Sized>(
    ep: &mut Episode<'_>,
    driver: &mut Driver<'_>,
    mut goal_rng: Option<&mut R>,
    samples: &mut Vec<TrajectorySample>,
    t0: f64,
) -> Result<u64> {
    let limits = ep.config().limits;
    let dt = limits.dt_policy;
    let mut fallbacks = 0;
    samples.push(TrajectorySample::at(ep, t0));
    while !ep.outcome.is_terminal() {
        let (s, d, e) = (ep.discrete.packed, ep.d, ep.e);
        let dec = driver.decide(s);
        let out = ep.step(dec.action, RuleMode::Eval);
        driver.observe(s, d, e, dec, &out, &limits)?;
        fallbacks += dec.fallback as u64;
        let last = samples.last_mut().expect("initial sample pushed");
        last.action = Some(dec.action);
        last.a_v = out.applied.a_v;
        last.a_omega = out.applied.a_omega;
        last.fallback = dec.fallback;
        if let Some(rng) = goal_rng.as_deref_mut() {
            if !out.outcome.is_terminal() {
                ep.advance_goal(rng);
            }
        }
        samples.push(TrajectorySample::at(ep, t0 + ep.steps as f64 * dt));
    }
    Ok(fallbacks)
}

fn finish_record(ep: &Episode<'_>, policy: PolicyKind, goal: Goal, fallback_count: u64, trajectory: Vec<TrajectorySample>) -> Result<EpisodeRecord> {
    let effort = control_effort(&trajectory, &ep.config().limits)?;
    Ok(EpisodeRecord {
        goal,
        policy,
        outcome: ep.outcome,
        steps: ep.steps,
        final_distance: trajectory.last().map_or(ep.d, |s| s.d),
        fallback_count,
        trajectory,
        effort,
    })
}

/// One greedy episode from the standard start pose.
pub fn run_episode(policy: &Policy<'_>, env: &EnvConfig, goal: Goal) -> Result<EpisodeRecord> {
    let mut critic = policy.private_critic();
    let mut ep = Episode::new(env, goal);
    let s0 = ep.discrete.packed;
    let mut driver = match (policy, critic.as_mut()) {
        (Policy::Benchmark(q), _) => Driver::Benchmark(q),
        (Policy::Stabilized { benchmark, params, .. }, Some(c)) => Driver::Stabilized(StabilizedRollout::begin(c, benchmark, params, s0)),
        (Policy::Stabilized { .. }, None) => unreachable!("stabilized policy always carries a critic"),
    };
    let mut samples = Vec::with_capacity(2048);
    let fallbacks = drive(&mut ep, &mut driver, None::<&mut ChaCha8Rng>, &mut samples, 0.0)?;
    finish_record(&ep, policy.kind(), goal, fallbacks, samples)
}

/// `n` goals uniform over the workspace, at least `min_dist` from `start`.
pub fn sample_goals<R: Rng + ?Sized>(n: usize, workspace: &Workspace, start: &RobotState, min_dist: f64, rng: &mut R) -> Vec<Goal> {
    (0..n).map(|_| sample_goal(rng, workspace, start, min_dist)).collect()
}

/// Runs every policy on every goal; result `[p][g]` is policy `p` on goal `g`.
pub fn run_matched(goals: &[Goal], policies: &[Policy<'_>], env: &EnvConfig) -> Result<Vec<Vec<EpisodeRecord>>> {
    let spaces = (env.n_states(), env.n_actions());
    for p in policies {
        if p.spaces() != spaces {
            return Err(Error::SpaceMismatch {
                artifact: format!("{} x {}", p.spaces().0, p.spaces().1),
                config: format!("{} x {}", spaces.0, spaces.1),
            });
        }
    }
    policies
        .iter()
        .map(|p| goals.par_iter().map(|&g| run_episode(p, env, g)).collect::<Result<Vec<_>>>())
        .collect()
}

/// Goals presented one after another; the robot keeps its pose between
/// segments and every goal random-walks while active.
pub fn run_moving_goal_sequence<R: Rng + ?Sized>(policy: &Policy<'_>, n_goals: usize, env: &EnvConfig, rng: &mut R) -> Result<Vec<EpisodeRecord>> {
    let seeds: Vec<u64> = (0..n_goals).map(|_| rng.gen()).collect();
    let mut critic = policy.private_critic();
    let speed = env.moving.speed_fraction * env.limits.v_max;
    let mut state = env.start;
    let mut t0 = 0.0;
    let mut records = Vec::with_capacity(n_goals);
    for seed in seeds {
        let mut seg_rng = ChaCha8Rng::seed_from_u64(seed);
        let start = sample_goal(&mut seg_rng, &env.limits.workspace, &state, env.start_min_dist);
        let heading = seg_rng.gen_range(-PI..PI);
        let goal = Goal::moving(start.x, start.y, speed, heading);
        let mut ep = Episode::from_state(env, state, goal);
        let s0 = ep.discrete.packed;
        let mut driver = match (policy, critic.as_mut()) {
            (Policy::Benchmark(q), _) => Driver::Benchmark(q),
            (Policy::Stabilized { benchmark, params, .. }, Some(c)) => Driver::Stabilized(StabilizedRollout::begin(c, benchmark, params, s0)),
            (Policy::Stabilized { .. }, None) => unreachable!("stabilized policy always carries a critic"),
        };
        let mut samples = Vec::with_capacity(2048);
        let fallbacks = drive(&mut ep, &mut driver, Some(&mut seg_rng), &mut samples, t0)?;
        t0 += ep.steps as f64 * env.limits.dt_policy;
        state = ep.state;
        let record = finish_record(&ep, policy.kind(), goal, fallbacks, samples)?;
        let left = record.outcome == Outcome::OutOfBounds;
        records.push(record);
        if left {
            break;
        }
    }
    Ok(records)
}

/// `λ = (v_max / ω_max)²`.
pub fn effort_lambda(limits: &MotionLimits) -> f64 {
    (limits.v_max / limits.omega_max).powi(2)
}

/// `∫ (v² + λ ω²) dt` by the trapezoid rule over samples spaced `dt_policy`.
pub fn control_effort(trajectory: &[TrajectorySample], limits: &MotionLimits) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::Empty("trajectory needs at least two samples"));
    }
    let lambda = effort_lambda(limits);
    let f = |s: &TrajectorySample| s.v * s.v + lambda * s.omega * s.omega;
    let inner: f64 = trajectory.windows(2).map(|w| f(&w[0]) + f(&w[1])).sum();
    Ok(0.5 * limits.dt_policy * inner)
}

/// Lower median of a sorted copy.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Table 3 statistics. `None` marks a statistic with no supporting episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub policy: PolicyKind,
    pub episodes: usize,
    pub success_pct: f64,
    pub timeout_pct: f64,
    pub oob_pct: f64,
    pub steps_median: f64,
    pub steps_mean: f64,
    pub steps_success_median: Option<f64>,
    pub steps_success_mean: Option<f64>,
    pub final_dist_median: f64,
    pub final_dist_mean: f64,
    pub final_dist_fail_median: Option<f64>,
    pub final_dist_fail_mean: Option<f64>,
    pub fallbacks_median: Option<f64>,
    pub fallbacks_mean: Option<f64>,
    pub fallback_ratio_mean: Option<f64>,
    pub effort_mean: f64,
}

pub fn aggregate(records: &[EpisodeRecord]) -> Result<AggregateStats> {
    let Some(first) = records.first() else {
        return Err(Error::Empty("no episode records"));
    };
    let n = records.len() as f64;
    let pct = |o: Outcome| 100.0 * records.iter().filter(|r| r.outcome == o).count() as f64 / n;
    let pick = |keep: &dyn Fn(&EpisodeRecord) -> bool, f: &dyn Fn(&EpisodeRecord) -> f64| -> Vec<f64> {
        records.iter().filter(|r| keep(r)).map(f).collect()
    };
    let all = |_: &EpisodeRecord| true;
    let success = |r: &EpisodeRecord| r.outcome == Outcome::Goal;
    let failure = |r: &EpisodeRecord| r.outcome != Outcome::Goal;
    let steps = |r: &EpisodeRecord| r.steps as f64;
    let dist = |r: &EpisodeRecord| r.final_distance;

    let steps_all = pick(&all, &steps);
    let steps_ok = pick(&success, &steps);
    let dist_all = pick(&all, &dist);
    let dist_fail = pick(&failure, &dist);
    let stabilized = first.policy == PolicyKind::Stabilized;
    let fallbacks = pick(&all, &|r| r.fallback_count as f64);
    let ratios = pick(&all, &|r| if r.steps == 0 { 0.0 } else { r.fallback_count as f64 / r.steps as f64 });

    Ok(AggregateStats {
        policy: first.policy,
        episodes: records.len(),
        success_pct: pct(Outcome::Goal),
        timeout_pct: pct(Outcome::Timeout),
        oob_pct: pct(Outcome::OutOfBounds),
        steps_median: lower_median(&steps_all).expect("nonempty"),
        steps_mean: mean(&steps_all).expect("nonempty"),
        steps_success_median: lower_median(&steps_ok),
        steps_success_mean: mean(&steps_ok),
        final_dist_median: lower_median(&dist_all).expect("nonempty"),
        final_dist_mean: mean(&dist_all).expect("nonempty"),
        final_dist_fail_median: lower_median(&dist_fail),
        final_dist_fail_mean: mean(&dist_fail),
        fallbacks_median: if stabilized { lower_median(&fallbacks) } else { None },
        fallbacks_mean: if stabilized { mean(&fallbacks) } else { None },
        fallback_ratio_mean: if stabilized { mean(&ratios) } else { None },
        effort_mean: mean(&pick(&all, &|r| r.effort)).expect("nonempty"),
    })
}

/// Paired comparison of success indicators on matched goals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    /// Goals only the candidate reached.
    pub candidate_only: usize,
    /// Goals only the baseline reached.
    pub baseline_only: usize,
    /// Success-rate difference, candidate minus baseline, in percentage points.
    pub diff_pp: f64,
    /// Lower end of the one-sided 95% interval for the difference (pp).
    pub diff_lower_pp: f64,
    /// McNemar statistic `(b - c)/sqrt(b + c)`; zero when there is no discordance.
    pub z: f64,
}

pub const Z_95_ONE_SIDED: f64 = 1.6448536269514722;

impl PairedTest {
    /// Candidate significantly better at the one-sided 95% level.
    pub fn candidate_better(&self) -> bool {
        self.z > Z_95_ONE_SIDED
    }

    /// Candidate significantly worse at the one-sided 95% level.
    pub fn candidate_worse(&self) -> bool {
        self.z < -Z_95_ONE_SIDED
    }
}

pub fn paired_success_test(baseline: &[EpisodeRecord], candidate: &[EpisodeRecord]) -> Result<PairedTest> {
    if baseline.len() != candidate.len() || baseline.is_empty() {
        return Err(Error::Empty("paired test needs two equal-length nonempty record lists"));
    }
    let n = baseline.len();
    let (mut b, mut c) = (0usize, 0usize);
    for (x, y) in baseline.iter().zip(candidate) {
        match (x.outcome == Outcome::Goal, y.outcome == Outcome::Goal) {
            (false, true) => b += 1,
            (true, false) => c += 1,
            _ => {}
        }
    }
    let nf = n as f64;
    let diff = (b as f64 - c as f64) / nf;
    let var = ((b + c) as f64 / nf - diff * diff) / nf;
    let z = if b + c == 0 { 0.0 } else { (b as f64 - c as f64) / ((b + c) as f64).sqrt() };
    Ok(PairedTest {
        n,
        candidate_only: b,
        baseline_only: c,
        diff_pp: 100.0 * diff,
        diff_lower_pp: 100.0 * (diff - Z_95_ONE_SIDED * var.max(0.0).sqrt()),
        z,
    })
}

/// `(v, ω)` slice of the state grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceSelect {
    /// Slice with the highest total visitation.
    Auto,
    Fixed { i_v: usize, i_omega: usize },
}

/// Values over the `(i_d, i_e)` grid of one `(i_v, i_ω)` slice, row-major in `i_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub n_d: usize,
    pub n_e: usize,
    pub i_v: usize,
    pub i_omega: usize,
    pub values: Vec<f64>,
}

impl HeatmapGrid {
    fn empty(binning: &BinningConfig, i_v: usize, i_omega: usize) -> Self {
        let (n_d, n_e) = (binning.distance.bins, binning.heading.bins);
        Self { n_d, n_e, i_v, i_omega, values: vec![0.0; n_d * n_e] }
    }

    pub fn get(&self, i_d: usize, i_e: usize) -> f64 {
        self.values[i_d * self.n_e + i_e]
    }
}

/// Visits per packed state, counting every sample at which a decision was made.
pub fn visitation_counts(records: &[EpisodeRecord], binning: &BinningConfig) -> Vec<u64> {
    let mut counts = vec![0u64; binning.cardinality()];
    for s in records.iter().flat_map(|r| &r.trajectory).filter(|s| s.action.is_some()) {
        counts[s.state] += 1;
    }
    counts
}

fn slice_of(binning: &BinningConfig, counts: &[u64], select: SliceSelect) -> (usize, usize) {
    match select {
        SliceSelect::Fixed { i_v, i_omega } => (i_v, i_omega),
        SliceSelect::Auto => {
            let (nv, nw) = (binning.speed.bins, binning.yaw_rate.bins);
            let mut totals = vec![0u64; nv * nw];
            for (label, &c) in counts.iter().enumerate() {
                let ds = binning.unpack(label).expect("label in range");
                totals[ds.i_v * nw + ds.i_omega] += c;
            }
            // first maximum wins
            let best = totals.iter().enumerate().fold(0, |b, (i, &t)| if t > totals[b] { i } else { b });
            (best / nw, best % nw)
        }
    }
}

fn fill_slice(binning: &BinningConfig, i_v: usize, i_omega: usize, f: impl Fn(usize) -> f64) -> HeatmapGrid {
    let mut grid = HeatmapGrid::empty(binning, i_v, i_omega);
    for i_d in 0..grid.n_d {
        for i_e in 0..grid.n_e {
            let ds = crate::statespace::DiscreteState { i_d, i_e, i_v, i_omega, packed: 0 };
            let label = binning.pack(&ds).expect("indices in range");
            grid.values[i_d * grid.n_e + i_e] = f(label);
        }
    }
    grid
}

/// Raw visit counts over one slice.
pub fn visitation_heatmap(records: &[EpisodeRecord], binning: &BinningConfig, select: SliceSelect) -> HeatmapGrid {
    let counts = visitation_counts(records, binning);
    let (i_v, i_omega) = slice_of(binning, &counts, select);
    fill_slice(binning, i_v, i_omega, |s| counts[s] as f64)
}

/// Benchmark proxy `-max_a Q₀(s, a)` and critic `min_a Q̂(s, a)` over one slice.
pub fn cost_to_go_maps(q0: &QTable, critic: &CriticState, binning: &BinningConfig, i_v: usize, i_omega: usize) -> (HeatmapGrid, HeatmapGrid) {
    (
        fill_slice(binning, i_v, i_omega, |s| -q0.max(s)),
        fill_slice(binning, i_v, i_omega, |s| critic.min_value(s)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(v: f64, omega: f64) -> TrajectorySample {
        TrajectorySample {
            t: 0.0,
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            v,
            omega,
            a_v: 0.0,
            a_omega: 0.0,
            d: 1.0,
            e: 0.0,
            fallback: false,
            action: Some(4),
            state: 0,
            goal_x: 1.0,
            goal_y: 0.0,
        }
    }

    fn record(outcome: Outcome, steps: usize, final_distance: f64) -> EpisodeRecord {
        EpisodeRecord {
            goal: Goal::fixed(1.0, 0.0),
            policy: PolicyKind::Benchmark,
            outcome,
            steps,
            final_distance,
            fallback_count: 0,
            trajectory: vec![],
            effort: 0.0,
        }
    }

    #[test]
    fn lambda_matches_limits() {
        assert_abs_diff_eq!(effort_lambda(&MotionLimits::default()), 2.78, epsilon = 0.005);
    }

    #[test]
    fn effort_examples() {
        let lim = MotionLimits::default();
        // 10 s at dt 0.05 is 200 intervals
        let traj = vec![sample(0.25, 0.0); 201];
        let rect: f64 = traj[..200].iter().map(|s| s.v * s.v * lim.dt_policy).sum();
        assert_abs_diff_eq!(rect, 0.625, epsilon = 1e-12);
        assert_abs_diff_eq!(control_effort(&traj, &lim).unwrap(), rect, epsilon = 1e-12);

        assert_eq!(control_effort(&vec![sample(0.0, 0.0); 50], &lim).unwrap(), 0.0);
        assert!(control_effort(&[sample(0.1, 0.1)], &lim).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[record(Outcome::Goal, 100, 0.05)]).unwrap();
        assert_eq!(s.success_pct, 100.0);
        assert_eq!(s.final_dist_fail_median, None);
        assert_eq!(s.final_dist_fail_mean, None);
        assert_eq!(s.fallbacks_mean, None);

        let s = aggregate(&vec![record(Outcome::Timeout, 6000, 10.0); 4]).unwrap();
        assert_eq!(s.timeout_pct, 100.0);
        assert_eq!(s.success_pct, 0.0);
        assert_eq!(s.steps_success_mean, None);

        assert!(aggregate(&[]).is_err());

        let recs = [
            record(Outcome::Goal, 10, 0.1),
            record(Outcome::Goal, 30, 0.1),
            record(Outcome::Timeout, 40, 5.0),
            record(Outcome::OutOfBounds, 20, 7.0),
        ];
        let s = aggregate(&recs).unwrap();
        assert_eq!((s.success_pct, s.timeout_pct, s.oob_pct), (50.0, 25.0, 25.0));
        assert_eq!(s.steps_median, 20.0); // lower median of 10, 20, 30, 40
        assert_eq!(s.steps_mean, 25.0);
        assert_eq!(s.steps_success_median, Some(10.0));
        assert_eq!(s.final_dist_fail_median, Some(5.0));
        assert_eq!(s.final_dist_fail_mean, Some(6.0));
    }

    #[test]
    fn paired_test_counts_discordance() {
        let base = [record(Outcome::Goal, 1, 0.0), record(Outcome::Timeout, 1, 0.0), record(Outcome::Timeout, 1, 0.0)];
        let cand = [record(Outcome::Goal, 1, 0.0), record(Outcome::Goal, 1, 0.0), record(Outcome::Goal, 1, 0.0)];
        let t = paired_success_test(&base, &cand).unwrap();
        assert_eq!((t.candidate_only, t.baseline_only), (2, 0));
        assert_abs_diff_eq!(t.diff_pp, 200.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.z, 2f64.sqrt(), epsilon = 1e-12);
        let same = paired_success_test(&base, &base).unwrap();
        assert_eq!((same.z, same.diff_pp), (0.0, 0.0));
    }

    #[test]
    fn heatmap_examples() {
        let binning = BinningConfig::default();
        let empty = visitation_heatmap(&[], &binning, SliceSelect::Fixed { i_v: 1, i_omega: 2 });
        assert_eq!(empty.values.len(), 36 * 24);
        assert!(empty.values.iter().all(|&v| v == 0.0));

        let ds = binning.quantize(3.2, 0.4, 0.03, 0.0);
        let mut s = sample(0.03, 0.0);
        s.state = ds.packed;
        let mut r = record(Outcome::Goal, 1, 0.0);
        r.trajectory = vec![s, TrajectorySample { action: None, ..s }];
        let grid = visitation_heatmap(&[r], &binning, SliceSelect::Auto);
        assert_eq!((grid.i_v, grid.i_omega), (ds.i_v, ds.i_omega));
        assert_eq!(grid.get(ds.i_d, ds.i_e), 1.0);
        assert_eq!(grid.values.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn cost_maps_share_dimensions() {
        let env = EnvConfig::default();
        let q = QTable::zeros(env.n_states(), env.n_actions());
        let critic = CriticState::zeros(&env.binning, env.n_actions(), &StabilizerParams::default());
        let (b, s) = cost_to_go_maps(&q, &critic, &env.binning, 0, 2);
        assert_eq!((b.n_d, b.n_e), (s.n_d, s.n_e));
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn goal_lists_are_reproducible() {
        let env = EnvConfig::default();
        let ws = env.limits.workspace;
        let a = sample_goals(50, &ws, &env.start, 0.2, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_goals(50, &ws, &env.start, 0.2, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn matched_runs_of_identical_policies_agree() {
        let env = EnvConfig { max_steps: 300, ..EnvConfig::default() };
        let q = QTable::zeros(env.n_states(), env.n_actions());
        let goals = sample_goals(4, &env.limits.workspace, &env.start, 0.2, &mut ChaCha8Rng::seed_from_u64(1));
        let out = run_matched(&goals, &[Policy::Benchmark(&q), Policy::Benchmark(&q)], &env).unwrap();
        assert_eq!(out[0], out[1]);
        for r in &out[0] {
            assert_eq!(r.steps + 1, r.trajectory.len());
            assert_eq!(r.final_distance, r.trajectory.last().unwrap().d);
        }
        assert!(run_matched(&[], &[Policy::Benchmark(&q)], &env).unwrap()[0].is_empty());
    }

    #[test]
    fn zero_speed_moving_goals_stay_put() {
        let mut env = EnvConfig { max_steps: 200, ..EnvConfig::default() };
        env.moving.speed_fraction = 0.0;
        let q = QTable::zeros(env.n_states(), env.n_actions());
        let recs = run_moving_goal_sequence(&Policy::Benchmark(&q), 3, &env, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(!recs.is_empty());
        for r in &recs {
            let first = r.trajectory[0];
            assert!(r.trajectory.iter().all(|s| s.goal_x == first.goal_x && s.goal_y == first.goal_y));
        }
    }
}
