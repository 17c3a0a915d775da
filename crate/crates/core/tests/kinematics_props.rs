use std::f64::consts::PI;

use goalreach::kinematics::{
    check_termination, goal_features, step, wrap_pi, Action, Goal, MotionLimits, RobotState, Workspace,
};
use proptest::prelude::*;

fn limits() -> MotionLimits {
    MotionLimits::default()
}

fn any_state() -> impl Strategy<Value = RobotState> {
    let l = limits();
    (-20.0..20.0f64, -20.0..20.0f64, -PI..PI, l.v_min..=l.v_max, l.omega_min..=l.omega_max)
        .prop_map(|(x, y, theta, v, omega)| RobotState { x, y, theta, v, omega })
}

fn any_action() -> impl Strategy<Value = Action> {
    // includes commands outside the admissible box
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a_v, a_omega)| Action::new(a_v, a_omega))
}

proptest! {
    #[test]
    fn wrap_is_idempotent(a in -1e6..1e6f64) {
        let once = wrap_pi(a).unwrap();
        prop_assert!((-PI..PI).contains(&once));
        prop_assert_eq!(wrap_pi(once).unwrap(), once);
    }

    #[test]
    fn speeds_stay_saturated(s0 in any_state(), actions in prop::collection::vec(any_action(), 1..60)) {
        let l = limits();
        let mut s = s0;
        for a in actions {
            s = step(&s, a, &l);
            prop_assert!(s.v >= l.v_min && s.v <= l.v_max);
            prop_assert!(s.omega >= l.omega_min && s.omega <= l.omega_max);
            prop_assert!((-PI..PI).contains(&s.theta));
        }
    }

    #[test]
    fn features_are_rigid_motion_invariant(
        s in any_state(),
        gx in -20.0..20.0f64,
        gy in -20.0..20.0f64,
        tx in -50.0..50.0f64,
        ty in -50.0..50.0f64,
        rot in -PI..PI,
    ) {
        let tol = 0.1;
        let (d0, e0) = goal_features(&s, &Goal::fixed(gx, gy), tol);
        let (sin, cos) = rot.sin_cos();
        let tf = |x: f64, y: f64| (cos * x - sin * y + tx, sin * x + cos * y + ty);
        let (sx, sy) = tf(s.x, s.y);
        let (hx, hy) = tf(gx, gy);
        let moved = RobotState { x: sx, y: sy, theta: wrap_pi(s.theta + rot).unwrap(), ..s };
        let (d1, e1) = goal_features(&moved, &Goal::fixed(hx, hy), tol);
        prop_assert!((d0 - d1).abs() <= 1e-9 * (1.0 + d0));
        if d0 > tol + 1e-6 {
            // compare on the circle so ±π does not count as a jump
            let gap = wrap_pi(e0 - e1).unwrap().abs();
            prop_assert!(gap <= 1e-7 / d0.min(1.0) + 1e-9, "e {e0} vs {e1}");
        }
    }

    #[test]
    fn halving_the_substep_changes_little(s in any_state(), a in any_action()) {
        let coarse = MotionLimits { dt_sim: 0.01, ..limits() };
        let fine = MotionLimits { dt_sim: 0.005, ..limits() };
        let finer = MotionLimits { dt_sim: 0.0025, ..limits() };
        let c = step(&s, a, &coarse);
        let f = step(&s, a, &fine);
        let ff = step(&s, a, &finer);
        let gap = |p: &RobotState, q: &RobotState| {
            (p.x - q.x).abs().max((p.y - q.y).abs()).max(wrap_pi(p.theta - q.theta).unwrap().abs())
        };
        let g1 = gap(&c, &f);
        let g2 = gap(&f, &ff);
        // first-order scheme: error scales with dt_sim
        prop_assert!(g1 <= 10.0 * coarse.dt_sim * coarse.dt_policy, "gap {g1}");
        prop_assert!(g2 <= 10.0 * fine.dt_sim * fine.dt_policy, "gap {g2}");
    }

    #[test]
    fn termination_is_pure(s in any_state(), gx in -30.0..30.0f64, gy in -30.0..30.0f64, steps in 0usize..7000) {
        let ws = Workspace::square(25.0);
        let goal = Goal::fixed(gx, gy);
        let a = check_termination(&s, &goal, steps, 6000, 0.1, &ws);
        let b = check_termination(&s, &goal, steps, 6000, 0.1, &ws);
        prop_assert_eq!(a, b);
    }
}
