use goalreach::evaluation::{
    aggregate, control_effort, visitation_counts, EpisodeRecord, PolicyKind, TrajectorySample,
};
use goalreach::kinematics::{Goal, MotionLimits, Outcome};
use goalreach::statespace::BinningConfig;
use proptest::prelude::*;

fn sample(v: f64, omega: f64, state: usize, last: bool) -> TrajectorySample {
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
        action: (!last).then_some(0),
        state,
        goal_x: 0.0,
        goal_y: 0.0,
    }
}

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::Goal), Just(Outcome::Timeout), Just(Outcome::OutOfBounds)]
}

prop_compose! {
    fn record()(
        outcome in outcome(),
        states in prop::collection::vec(0usize..17_280, 2..40),
        dist in 0.0..30.0f64,
        fallback_share in 0.0..1.0f64,
    ) -> EpisodeRecord {
        let n = states.len();
        let trajectory: Vec<_> = states.iter().enumerate().map(|(i, &s)| sample(0.1, 0.01, s, i + 1 == n)).collect();
        let steps = n - 1;
        EpisodeRecord {
            goal: Goal::fixed(1.0, 1.0),
            policy: PolicyKind::Stabilized,
            outcome,
            steps,
            final_distance: dist,
            fallback_count: (fallback_share * steps as f64) as u64,
            trajectory,
            effort: 0.0,
        }
    }
}

// sort-based oracle, independent of the library helpers
fn oracle_lower_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[(v.len() - 1) / 2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn outcome_shares_sum_to_hundred(records in prop::collection::vec(record(), 1..60)) {
        let s = aggregate(&records).unwrap();
        prop_assert!((s.success_pct + s.timeout_pct + s.oob_pct - 100.0).abs() < 1e-9);
    }

    #[test]
    fn medians_and_means_match_oracle(records in prop::collection::vec(record(), 1..60)) {
        let s = aggregate(&records).unwrap();
        let steps: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
        let dists: Vec<f64> = records.iter().map(|r| r.final_distance).collect();
        prop_assert!((s.steps_median - oracle_lower_median(steps.clone())).abs() < 1e-9);
        prop_assert!((s.steps_mean - steps.iter().sum::<f64>() / steps.len() as f64).abs() < 1e-9);
        prop_assert!((s.final_dist_median - oracle_lower_median(dists.clone())).abs() < 1e-9);
        let ok: Vec<f64> = records.iter().filter(|r| r.outcome == Outcome::Goal).map(|r| r.steps as f64).collect();
        match s.steps_success_median {
            Some(m) => prop_assert!((m - oracle_lower_median(ok)).abs() < 1e-9),
            None => prop_assert!(ok.is_empty()),
        }
    }

    #[test]
    fn visitation_counts_every_decision(records in prop::collection::vec(record(), 1..20)) {
        let counts = visitation_counts(&records, &BinningConfig::default());
        let total: u64 = counts.iter().sum();
        prop_assert_eq!(total, records.iter().map(|r| r.steps as u64).sum::<u64>());
    }

    #[test]
    fn effort_is_nonnegative_and_zero_only_at_rest(cmds in prop::collection::vec((-0.25..0.25f64, -0.15..0.15f64), 2..50)) {
        let limits = MotionLimits::default();
        let n = cmds.len();
        let traj: Vec<_> = cmds.iter().enumerate().map(|(i, &(v, w))| sample(v, w, 0, i + 1 == n)).collect();
        let e = control_effort(&traj, &limits).unwrap();
        prop_assert!(e >= 0.0);
        let idle = cmds.iter().all(|&(v, w)| v == 0.0 && w == 0.0);
        prop_assert_eq!(e == 0.0, idle);
        let still: Vec<_> = (0..n).map(|i| sample(0.0, 0.0, 0, i + 1 == n)).collect();
        prop_assert_eq!(control_effort(&still, &limits).unwrap(), 0.0);
    }
}
