//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so that every criterion reports even when
//! an earlier one fails; the process exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use cav_corridor::constraint::margin_at;
use cav_corridor::metrics::{compare_runs, RunReport};
use cav_corridor::oracle::solve_transcribed;
use cav_corridor::sim::{run, SimConfig, SimOutcome};
use cav_corridor::{
    solve_route, LeaderMotion, LeaderProfile, RoutePlanProblem, SafetyParams, ScenarioSpec, ScheduleAssignment,
    Segment, SimMode, Trajectory, Waypoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn scenario(name: &str) -> ScenarioSpec {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    ScenarioSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Case {
    schedule: ScheduleAssignment,
    leader: Option<LeaderProfile>,
    safety: SafetyParams,
}

impl Case {
    fn from_file(name: &str) -> Self {
        let spec = scenario(name);
        let v = &spec.vehicles[0];
        Case {
            schedule: v.schedule(&spec.corridor()).expect("schedule"),
            leader: v.leader.as_ref().map(|l| l.profile()),
            safety: spec.safety_for(v),
        }
    }

    fn problem(&self) -> RoutePlanProblem<'_> {
        let p = RoutePlanProblem::new(self.schedule.clone());
        match &self.leader {
            Some(l) => p.with_leader(l as &dyn LeaderMotion, self.safety),
            None => p,
        }
    }

    fn solve(&self) -> Result<Trajectory, String> {
        solve_route(&self.problem()).map_err(|e| e.to_string())
    }

    fn pin_error(&self, traj: &Trajectory) -> f64 {
        self.schedule
            .knots()
            .map(|(t, p)| (traj.at(t).p - p).abs())
            .chain(
                self.schedule
                    .waypoints
                    .iter()
                    .filter_map(|w| w.speed.map(|v| (traj.at(w.time).v - v).abs())),
            )
            .fold(0.0, f64::max)
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let case = Case::from_file("case1.toml");
    let start = Instant::now();
    let traj = case.solve()?;
    let elapsed = start.elapsed();
    ensure(traj.segments.len() == 1, || {
        format!("{} segments, expected one free arc", traj.segments.len())
    })?;
    let Segment::Free(arc) = &traj.segments[0] else {
        return Err("the single segment is constrained".into());
    };
    let (v0, tf, pf): (f64, f64, f64) = (12.0, 26.0, 300.0);
    let jerk = 3.0 * (v0 * tf - pf) / tf.powi(3);
    let u0 = -jerk * tf;
    let h = 0.5;
    let max_second_diff = (1..52)
        .map(|k| {
            let t = k as f64 * h;
            (traj.at(t - h).u - 2.0 * traj.at(t).u + traj.at(t + h).u).abs()
        })
        .fold(0.0, f64::max);
    ensure(max_second_diff < 1e-12, || {
        format!("control not affine: second difference {max_second_diff:e}")
    })?;
    let end = traj.at(tf);
    ensure(end.u.abs() < 1e-6, || format!("u(tf) = {:e}", end.u))?;
    ensure((end.p - pf).abs() < 1e-6, || format!("p(tf) = {}", end.p))?;
    ensure((arc.jerk - jerk).abs() < 1e-6, || {
        format!("alpha {} vs {jerk}", arc.jerk)
    })?;
    ensure((arc.at(0.0).u - u0).abs() < 1e-6, || {
        format!("u(0) {} vs {u0}", arc.at(0.0).u)
    })?;
    ensure((jerk - 2.0483e-3).abs() < 1e-7 && (u0 + 5.326e-2).abs() < 1e-5, || {
        "reference values drifted".into()
    })?;
    ensure(elapsed < Duration::from_millis(10), || {
        format!("solve took {elapsed:?}")
    })?;
    Ok(format!(
        "alpha = {:.6e}, u(0) = {:.6e}, solve {elapsed:?}",
        arc.jerk,
        arc.at(0.0).u
    ))
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn criterion_2() -> Outcome {
    let case = Case::from_file("case3.toml");
    let traj = case.solve()?;
    let pins = case.pin_error(&traj);
    ensure(pins < 1e-6, || format!("pin error {pins:e}"))?;
    let (left, right) = traj.limits_at(15.0);
    ensure((left.u - right.u).abs() < 1e-6, || {
        format!("u jumps by {:e} at 15 s", left.u - right.u)
    })?;
    ensure(traj.junctions() == vec![15.0], || {
        format!("junctions {:?}", traj.junctions())
    })?;
    let (u_start, u_end) = (traj.at(0.0).u, left.u);
    ensure(u_start * u_end < 0.0, || {
        format!("first arc control {u_start} .. {u_end} has no sign change")
    })?;
    ensure(u_start < 0.0, || "first arc should decelerate first".into())?;
    let oracle = solve_transcribed(&case.problem(), 1000).map_err(|e| e.to_string())?;
    let rel = relative(traj.cost, oracle.cost);
    ensure(rel < 1e-3, || {
        format!("cost {} vs oracle {} (rel {rel:e})", traj.cost, oracle.cost)
    })?;
    Ok(format!(
        "cost {:.9} vs oracle {:.9} (rel {rel:.2e}), pins {pins:.1e}",
        traj.cost, oracle.cost
    ))
}

/// Checks one constrained case and returns its window.
fn constrained_window(name: &str, expected: (f64, f64)) -> Result<(f64, f64), String> {
    let case = Case::from_file(name);
    let traj = case.solve()?;
    let leader = case.leader.as_ref().expect("leader");
    let s = case.safety;
    let windows: Vec<(f64, f64)> = traj.constrained_segments().map(|c| (c.t_start(), c.t_end())).collect();
    ensure(windows.len() == 1, || format!("{name}: windows {windows:?}"))?;
    let (t1, t2) = windows[0];
    let (before, _) = traj.limits_at(t1);
    let k = leader.kinematics(t1);
    let m = s.xi * (k.position - before.p) - s.gamma - s.rho * before.v;
    let dm = s.xi * (k.speed - before.v) - s.rho * before.u;
    ensure(m.abs() < 1e-5 && dm.abs() < 1e-5, || {
        format!("{name}: entry margin {m:e}, slope {dm:e}")
    })?;
    let worst = (0..=400)
        .map(|i| t1 + (t2 - t1) * i as f64 / 400.0)
        .map(|t| margin_at(&traj, leader, &s, t).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-6, || {
        format!("{name}: margin off zero by {worst:e} on the window")
    })?;
    ensure((t1 - expected.0).abs() <= 0.5 && (t2 - expected.1).abs() <= 0.5, || {
        format!("{name}: window ({t1:.3}, {t2:.3}) vs {expected:?}")
    })?;
    let pins = case.pin_error(&traj);
    ensure(pins < 1e-6, || format!("{name}: pin error {pins:e}"))?;
    Ok((t1, t2))
}

fn criterion_3() -> Outcome {
    let w2 = constrained_window("case2.toml", (3.2, 5.2))?;
    let w4 = constrained_window("case4.toml", (2.7, 3.4))?;
    let mut late = Case::from_file("case4.toml");
    late.schedule.waypoints[0].time = 15.0;
    let traj = late.solve()?;
    ensure(!traj.has_constrained_segment(), || {
        "waypoint at 15 s still activates the constraint".into()
    })?;
    Ok(format!(
        "case 2 window ({:.3}, {:.3}), case 4 window ({:.3}, {:.3})",
        w2.0, w2.1, w4.0, w4.1
    ))
}

/// Leader starting `gap` ahead at `speed`, accelerating at `accel` and
/// leaving the corridor when it reaches 300 m.
fn reconstructed_leader(gap: f64, speed: f64, accel: f64) -> LeaderProfile {
    let d = 300.0 - gap;
    let exit = if accel.abs() < 1e-12 {
        d / speed
    } else {
        (-speed + (speed * speed + 2.0 * accel * d).sqrt()) / accel
    };
    LeaderProfile::from_accelerations(0.0, gap, speed, &[(60.0, accel)], exit)
}

fn random_case(kind: usize, rng: &mut ChaCha8Rng) -> Case {
    let safety = SafetyParams {
        xi: 1.0,
        gamma: 1.3,
        rho: 1.2,
    };
    match kind {
        0 => Case {
            schedule: ScheduleAssignment::direct(
                0.0,
                rng.random_range(10.0..14.0),
                rng.random_range(22.0..30.0),
                300.0,
            ),
            leader: None,
            safety,
        },
        1 => Case {
            schedule: ScheduleAssignment::direct(0.0, rng.random_range(13.7..14.3), 26.0, 300.0),
            leader: Some(reconstructed_leader(
                rng.random_range(19.0..21.0),
                rng.random_range(11.35..11.65),
                rng.random_range(0.0..0.04),
            )),
            safety,
        },
        2 => Case {
            schedule: ScheduleAssignment::direct(
                0.0,
                rng.random_range(10.0..14.0),
                rng.random_range(24.0..28.0),
                300.0,
            )
            .with_waypoints(vec![Waypoint::new(rng.random_range(12.0..17.0), 150.0)]),
            leader: None,
            safety,
        },
        _ => Case {
            schedule: ScheduleAssignment::direct(0.0, rng.random_range(13.7..14.3), 26.0, 300.0)
                .with_waypoints(vec![Waypoint::new(rng.random_range(12.6..13.4), 150.0)]),
            leader: Some(reconstructed_leader(
                rng.random_range(19.0..21.0),
                rng.random_range(11.35..11.65),
                rng.random_range(0.0..0.04),
            )),
            safety,
        },
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    let mut constrained = 0;
    let mut rejected = 0;
    for i in 0..50 {
        let (case, fine) = loop {
            let case = random_case(i % 4, &mut rng);
            match solve_transcribed(&case.problem(), 1000) {
                Ok(fine) => break (case, fine),
                Err(_) => rejected += 1,
            }
        };
        let traj = case.solve().map_err(|e| format!("instance {i}: {e}"))?;
        let rel = relative(traj.cost, fine.cost);
        worst = worst.max(rel);
        ensure(rel < 1e-2, || {
            format!("instance {i}: cost {} vs oracle {} (rel {rel:e})", traj.cost, fine.cost)
        })?;
        if traj.has_constrained_segment() {
            constrained += 1;
            let coarse = solve_transcribed(&case.problem(), 500).map_err(|e| format!("instance {i}: oracle {e}"))?;
            let discretization = (fine.cost - coarse.cost).abs();
            ensure(traj.cost >= fine.cost - discretization, || {
                format!(
                    "instance {i}: constrained cost {} below oracle {} by more than {discretization:e}",
                    traj.cost, fine.cost
                )
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    ensure(constrained > 0, || "no instance activated the constraint".into())?;
    Ok(format!(
        "50 instances ({constrained} constrained, {rejected} infeasible draws skipped), worst rel {worst:.2e}, {elapsed:.2?}"
    ))
}

fn corridor_run(mode: SimMode) -> Result<SimOutcome, String> {
    let config = SimConfig::new(scenario("corridor_4zone.toml")).with_mode(mode);
    run(&config).map_err(|e| format!("{} run: {e}", mode.as_str()))
}

fn criterion_5(optimal: &SimOutcome) -> Outcome {
    let vehicles = optimal.report.vehicles.len();
    ensure(vehicles == 100, || format!("{vehicles} vehicles entered"))?;
    let steps_ok = optimal.samples.iter().all(|s| {
        let k = (s.t / 0.1).round();
        (s.t - k * 0.1).abs() < 1e-9
    });
    ensure(steps_ok, || "samples are not on the 0.1 s grid".into())?;
    let worst = optimal
        .samples
        .iter()
        .filter_map(|s| s.margin.map(|m| (m, s.vehicle, s.t)))
        .fold((f64::INFINITY, 0, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    ensure(worst.0 >= -1e-3, || {
        format!("vehicle {} margin {:e} at {:.1} s", worst.1, worst.0, worst.2)
    })?;
    let followers = optimal.samples.iter().filter(|s| s.margin.is_some()).count();
    Ok(format!(
        "{vehicles} vehicles, {followers} follower samples, min margin {:.2e}",
        worst.0
    ))
}

fn criterion_6(optimal: &SimOutcome, baseline: &SimOutcome) -> Outcome {
    let (o, b) = (&optimal.report.aggregates, &baseline.report.aggregates);
    ensure(o.total_fuel < b.total_fuel, || {
        format!("fuel optimal {} vs baseline {}", o.total_fuel, b.total_fuel)
    })?;
    ensure(o.violation_count < b.violation_count, || {
        format!(
            "violations optimal {} vs baseline {}",
            o.violation_count, b.violation_count
        )
    })?;
    let cmp = compare_runs(&baseline.report, &optimal.report).map_err(|e| e.to_string())?;

    let mut scaled = baseline.report.vehicles.clone();
    for v in &mut scaled {
        v.fuel *= 0.59;
    }
    let scaled = RunReport::new(
        baseline.report.scenario.clone(),
        "scaled",
        baseline.report.seed,
        scaled,
        vec![],
    );
    let savings = compare_runs(&baseline.report, &scaled)
        .map_err(|e| e.to_string())?
        .fuel_savings_pct;
    ensure((savings - 41.0).abs() < 0.1, || {
        format!("0.59x fuel reported as {savings}% savings")
    })?;
    Ok(format!(
        "fuel {:.1} -> {:.1} mL ({:.2}% saved), violations {} -> {}, 0.59x check {savings:.4}%",
        b.total_fuel, o.total_fuel, cmp.fuel_savings_pct, b.violation_count, o.violation_count
    ))
}

fn criterion_7() -> Outcome {
    let h = 1e-4;
    let mut worst_fd = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["case1.toml", "case2.toml", "case3.toml", "case4.toml"] {
        let case = Case::from_file(name);
        let traj = case.solve()?;
        let kinks: Vec<f64> = traj
            .junctions()
            .into_iter()
            .chain(traj.constrained_segments().flat_map(|c| c.breakpoints().to_vec()))
            .collect();
        let mut checked = 0;
        while checked < 200 {
            let t = rng.random_range(traj.start_time() + 2.0 * h..traj.end_time() - 2.0 * h);
            if kinks.iter().any(|k| (k - t).abs() < 2.0 * h) {
                continue;
            }
            let (a, m, b) = (traj.at(t - h), traj.at(t), traj.at(t + h));
            let dp = (b.p - a.p) / (2.0 * h);
            let dv = (b.v - a.v) / (2.0 * h);
            let e_p = (dp - m.v).abs() / m.v.abs().max(1.0);
            let e_v = (dv - m.u).abs() / m.u.abs().max(1.0);
            ensure(e_p < 1e-5 && e_v < 1e-5, || {
                format!("{name} at t = {t}: dp/dt err {e_p:e}, dv/dt err {e_v:e}")
            })?;
            worst_fd = worst_fd.max(e_p).max(e_v);
            checked += 1;
        }
    }

    let mut worst_drop = f64::NEG_INFINITY;
    for _ in 0..50 {
        let v0 = rng.random_range(10.0..14.0);
        let tf = rng.random_range(22.0..30.0);
        let base = Case {
            schedule: ScheduleAssignment::direct(0.0, v0, tf, 300.0),
            leader: None,
            safety: SafetyParams::default(),
        };
        let free = base.solve()?;
        let t = rng.random_range(2.0..tf - 2.0);
        let p = free.at(t).p + rng.random_range(-20.0..20.0);
        let pinned = Case {
            schedule: base.schedule.clone().with_waypoints(vec![Waypoint::new(t, p)]),
            ..base
        };
        let with = pinned.solve()?;
        let drop = free.cost - with.cost;
        worst_drop = worst_drop.max(drop);
        ensure(drop <= 1e-9, || {
            format!("waypoint ({t}, {p}) lowered the cost by {drop:e}")
        })?;
    }

    let mut spec = scenario("corridor_4zone.toml");
    for e in &mut spec.entries {
        e.arrivals.count = Some(12);
    }
    let config = SimConfig::new(spec);
    let a = run(&config).map_err(|e| e.to_string())?;
    let b = run(&config).map_err(|e| e.to_string())?;
    let (la, lb) = (format!("{:?}", a.events), format!("{:?}", b.events));
    ensure(la == lb, || "event logs differ between identical runs".into())?;
    let bits = |o: &SimOutcome| {
        o.samples
            .iter()
            .map(|s| (s.t.to_bits(), s.p.to_bits(), s.v.to_bits()))
            .collect::<Vec<_>>()
    };
    ensure(bits(&a) == bits(&b), || "samples differ between identical runs".into())?;
    Ok(format!(
        "finite differences worst {worst_fd:.1e}, waypoint cost drop at most {worst_drop:.1e}, {} identical events",
        a.events.len()
    ))
}

fn report(n: usize, title: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("criterion {n} ({title}): PASS - {detail}"),
        Err(why) => {
            *failures += 1;
            println!("criterion {n} ({title}): FAIL - {why}");
        }
    }
}

fn main() {
    let mut failures = 0;
    report(1, "case 1 golden", criterion_1(), &mut failures);
    report(2, "case 3 golden", criterion_2(), &mut failures);
    report(3, "cases 2 and 4 constrained windows", criterion_3(), &mut failures);
    report(4, "randomized oracle agreement", criterion_4(), &mut failures);
    let optimal = corridor_run(SimMode::Optimal);
    let baseline = corridor_run(SimMode::Baseline);
    report(
        5,
        "100-vehicle safety",
        optimal.as_ref().map_err(Clone::clone).and_then(criterion_5),
        &mut failures,
    );
    let sixth = match (&optimal, &baseline) {
        (Ok(o), Ok(b)) => criterion_6(o, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(6, "baseline vs optimal comparison", sixth, &mut failures);
    report(7, "property suite", criterion_7(), &mut failures);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 7 acceptance criteria passed");
}
