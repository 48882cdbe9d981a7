use std::path::PathBuf;

use approx::assert_relative_eq;
use cav_corridor::oracle::solve_transcribed;
use cav_corridor::{solve_route, LeaderMotion, RoutePlanProblem, ScenarioSpec, Trajectory};

fn solve_file(name: &str) -> (Trajectory, f64) {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    let spec = ScenarioSpec::load(&path).unwrap();
    let v = &spec.vehicles[0];
    let leader = v.leader.as_ref().map(|l| l.profile());
    let mut problem = RoutePlanProblem::new(v.schedule(&spec.corridor()).unwrap());
    if let Some(l) = &leader {
        problem = problem.with_leader(l as &dyn LeaderMotion, spec.safety_for(v));
    }
    let traj = solve_route(&problem).unwrap();
    let oracle = solve_transcribed(&problem, 1000).unwrap().cost;
    (traj, oracle)
}

#[test]
fn case1_cost() {
    let (traj, oracle) = solve_file("case1.toml");
    assert_relative_eq!(traj.cost, 1.2289485662e-2, max_relative = 1e-9);
    assert_relative_eq!(traj.cost, oracle, max_relative = 1e-4);
    assert!(!traj.has_constrained_segment());
}

#[test]
fn case2_cost_and_window() {
    let (traj, oracle) = solve_file("case2.toml");
    assert_relative_eq!(traj.cost, 6.9840723258e-1, max_relative = 1e-8);
    assert_relative_eq!(traj.cost, oracle, max_relative = 1e-4);
    let c = traj.constrained_segments().next().unwrap();
    assert_relative_eq!(c.t_start(), 3.212, epsilon = 1e-3);
    assert_relative_eq!(c.t_end(), 5.239, epsilon = 1e-3);
}

#[test]
fn case3_cost() {
    let (traj, oracle) = solve_file("case3.toml");
    assert_relative_eq!(traj.cost, 1.8491596248, max_relative = 1e-9);
    assert_relative_eq!(traj.cost, oracle, max_relative = 1e-4);
    let jumps = traj.junction_jumps();
    assert!(jumps.iter().all(|j| j.abs() < 1e-9), "{jumps:?}");
}

#[test]
fn case4_cost_and_window() {
    let (traj, oracle) = solve_file("case4.toml");
    assert_relative_eq!(traj.cost, 8.3499131077e-1, max_relative = 1e-8);
    assert_relative_eq!(traj.cost, oracle, max_relative = 1e-4);
    let c = traj.constrained_segments().next().unwrap();
    assert_relative_eq!(c.t_start(), 2.892, epsilon = 1e-3);
    assert_relative_eq!(c.t_end(), 3.270, epsilon = 1e-3);
}
