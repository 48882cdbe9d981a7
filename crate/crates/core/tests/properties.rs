use cav_corridor::{solve_route, ArcPoint, RoutePlanProblem, ScheduleAssignment, Trajectory, Waypoint};
use proptest::prelude::*;

fn solve(schedule: ScheduleAssignment) -> Trajectory {
    solve_route(&RoutePlanProblem::new(schedule)).unwrap()
}

fn close(a: ArcPoint, b: ArcPoint, tol: f64) -> bool {
    (a.p - b.p).abs() < tol && (a.v - b.v).abs() < tol && (a.u - b.u).abs() < tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pins_are_met(v0 in 8.0..16.0f64, tf in 20.0..32.0f64, frac in 0.2..0.8f64, dp in -15.0..15.0f64) {
        let tw = frac * tf;
        let pw = 300.0 * frac + dp;
        let traj = solve(ScheduleAssignment::direct(0.0, v0, tf, 300.0).with_waypoints(vec![Waypoint::new(tw, pw)]));
        prop_assert!((traj.at(0.0).v - v0).abs() < 1e-9);
        prop_assert!((traj.at(tw).p - pw).abs() < 1e-6);
        prop_assert!((traj.at(tf).p - 300.0).abs() < 1e-6);
        prop_assert!(traj.at(tf).u.abs() < 1e-6);
        let (l, r) = traj.limits_at(tw);
        prop_assert!(close(l, r, 1e-6));
    }

    #[test]
    fn waypoint_on_the_free_path_changes_nothing(v0 in 8.0..16.0f64, tf in 20.0..32.0f64, frac in 0.2..0.8f64) {
        let free = solve(ScheduleAssignment::direct(0.0, v0, tf, 300.0));
        let tw = frac * tf;
        let pinned = solve(
            ScheduleAssignment::direct(0.0, v0, tf, 300.0).with_waypoints(vec![Waypoint::new(tw, free.at(tw).p)]),
        );
        prop_assert!((free.cost - pinned.cost).abs() <= 1e-9 * free.cost.max(1.0));
    }

    #[test]
    fn cost_is_shift_invariant(v0 in 8.0..16.0f64, tf in 20.0..32.0f64, t0 in 0.0..500.0f64) {
        let a = solve(ScheduleAssignment::direct(0.0, v0, tf, 300.0));
        let b = solve(ScheduleAssignment::direct(t0, v0, t0 + tf, 300.0));
        prop_assert!((a.cost - b.cost).abs() <= 1e-8 * a.cost.max(1e-6));
    }
}
