//! Multi-point boundary value problems through scheduled conflict-zone crossings.
//!
//! Between consecutive pins the optimal control is affine, so a route with
//! `K` interior waypoints is `K + 1` cubic arcs with `4(K + 1)` unknowns.
//! At a waypoint without a pinned speed only the position costate jumps, which
//! leaves position, speed and control continuous. A pinned speed frees the
//! speed costate as well, so the control may jump there.

use crate::arc::{ArcCondition, PolynomialArc};
use crate::constraint;
use crate::error::{Error, Result};
use crate::linalg::LinearSystem;
use crate::model::{LeaderMotion, SafetyParams, ScheduleAssignment, VehicleParams, VehicleState, Waypoint};
use crate::trajectory::Trajectory;

/// A leader and the safety constants to hold behind it.
#[derive(Clone, Copy)]
pub struct SafetyContext<'a> {
    pub leader: &'a dyn LeaderMotion,
    pub params: SafetyParams,
}

impl std::fmt::Debug for SafetyContext<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SafetyContext")
            .field("leader_exit", &self.leader.exit_time())
            .field("params", &self.params)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct RoutePlanProblem<'a> {
    pub schedule: ScheduleAssignment,
    pub vehicle: VehicleParams,
    pub safety: Option<SafetyContext<'a>>,
}

impl<'a> RoutePlanProblem<'a> {
    pub fn new(schedule: ScheduleAssignment) -> Self {
        Self {
            schedule,
            vehicle: VehicleParams::default(),
            safety: None,
        }
    }

    pub fn with_leader(mut self, leader: &'a dyn LeaderMotion, params: SafetyParams) -> Self {
        self.safety = Some(SafetyContext { leader, params });
        self
    }

    pub fn with_vehicle(mut self, vehicle: VehicleParams) -> Self {
        self.vehicle = vehicle;
        self
    }
}

/// Two conditions closing the last arc of a stretch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StretchEnd {
    pub time: f64,
    pub conditions: [ArcCondition; 2],
}

impl StretchEnd {
    /// Reach `position` at `time` with free terminal speed.
    pub fn terminal(time: f64, position: f64) -> Self {
        Self {
            time,
            conditions: [ArcCondition::position(time, position), ArcCondition::control(time, 0.0)],
        }
    }
}

/// Solve the chain of arcs from `start` through `waypoints` (all strictly
/// inside the stretch) to `end`.
pub(crate) fn solve_stretch(
    start: VehicleState,
    waypoints: &[Waypoint],
    end: &StretchEnd,
) -> Result<Vec<PolynomialArc>> {
    let mut knots = Vec::with_capacity(waypoints.len() + 2);
    knots.push(start.time);
    knots.extend(waypoints.iter().map(|w| w.time));
    knots.push(end.time);
    for pair in knots.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::infeasible(
                pair[0],
                format!("zero-duration arc between {} s and {} s", pair[0], pair[1]),
            ));
        }
    }

    if !waypoints.is_empty() && waypoints.iter().all(|w| w.speed.is_some()) {
        return solve_pinned_chain(start, waypoints, end);
    }

    let arcs = waypoints.len() + 1;
    let n = 4 * arcs;
    let mut sys = LinearSystem::zeros(n);
    let mut row = 0;
    let put = |sys: &mut LinearSystem, row: usize, arc: usize, cond: &ArcCondition, t_start: f64, sign: f64| {
        for (k, c) in cond.row(t_start).iter().enumerate() {
            let cur = sys.get(row, 4 * arc + k);
            sys.set(row, 4 * arc + k, cur + sign * c);
        }
    };

    for cond in [
        ArcCondition::position(start.time, start.position),
        ArcCondition::speed(start.time, start.speed),
    ] {
        put(&mut sys, row, 0, &cond, knots[0], 1.0);
        sys.set_rhs(row, cond.rhs);
        row += 1;
    }

    for (j, w) in waypoints.iter().enumerate() {
        let (left, right) = (j, j + 1);
        let (ls, rs) = (knots[left], knots[right]);
        for arc in [left, right] {
            let t0 = knots[arc];
            put(&mut sys, row, arc, &ArcCondition::position(w.time, w.position), t0, 1.0);
            sys.set_rhs(row, w.position);
            row += 1;
        }
        match w.speed {
            Some(v) => {
                for arc in [left, right] {
                    put(&mut sys, row, arc, &ArcCondition::speed(w.time, v), knots[arc], 1.0);
                    sys.set_rhs(row, v);
                    row += 1;
                }
            }
            None => {
                for cond in [ArcCondition::speed(w.time, 0.0), ArcCondition::control(w.time, 0.0)] {
                    put(&mut sys, row, left, &cond, ls, 1.0);
                    put(&mut sys, row, right, &cond, rs, -1.0);
                    sys.set_rhs(row, 0.0);
                    row += 1;
                }
            }
        }
    }

    let last = arcs - 1;
    for cond in &end.conditions {
        put(&mut sys, row, last, cond, knots[last], 1.0);
        sys.set_rhs(row, cond.rhs);
        row += 1;
    }
    debug_assert_eq!(row, n);

    let x = sys.solve()?;
    Ok((0..arcs)
        .map(|j| {
            PolynomialArc::from_local(
                knots[j],
                knots[j + 1],
                [x[4 * j], x[4 * j + 1], x[4 * j + 2], x[4 * j + 3]],
            )
        })
        .collect())
}

/// Every waypoint pins its speed: the arcs decouple into independent 4×4 solves.
fn solve_pinned_chain(start: VehicleState, waypoints: &[Waypoint], end: &StretchEnd) -> Result<Vec<PolynomialArc>> {
    let mut arcs = Vec::with_capacity(waypoints.len() + 1);
    let (mut t, mut p, mut v) = (start.time, start.position, start.speed);
    for w in waypoints {
        let speed = w.speed.expect("pinned chain");
        let conds = [
            ArcCondition::position(t, p),
            ArcCondition::speed(t, v),
            ArcCondition::position(w.time, w.position),
            ArcCondition::speed(w.time, speed),
        ];
        arcs.push(PolynomialArc::solve(t, w.time, &conds)?);
        (t, p, v) = (w.time, w.position, speed);
    }
    let conds = [
        ArcCondition::position(t, p),
        ArcCondition::speed(t, v),
        end.conditions[0],
        end.conditions[1],
    ];
    arcs.push(PolynomialArc::solve(t, end.time, &conds)?);
    Ok(arcs)
}

fn check_schedule(schedule: &ScheduleAssignment) -> Result<()> {
    let mut prev = schedule.entry_time;
    for (t, _) in schedule.knots() {
        if !(t > prev) {
            return Err(Error::infeasible(
                prev,
                format!("crossing at {t} s leaves no time after {prev} s"),
            ));
        }
        prev = t;
    }
    let problems = schedule.validate();
    if let Some(first) = problems.first() {
        return Err(Error::infeasible(schedule.entry_time, first.to_string()));
    }
    Ok(())
}

/// Unconstrained optimal trajectory through every scheduled waypoint.
pub fn solve_interior_bvp(schedule: &ScheduleAssignment) -> Result<Trajectory> {
    check_schedule(schedule)?;
    let arcs = solve_stretch(
        schedule.entry_state(),
        &schedule.waypoints,
        &StretchEnd::terminal(schedule.terminal_time, schedule.terminal_position),
    )?;
    Ok(Trajectory::from_arcs(arcs))
}

/// Plan a route: the unconstrained solution when it keeps a safe gap to the
/// leader, otherwise one with boundary segments pieced in.
pub fn solve_route(problem: &RoutePlanProblem<'_>) -> Result<Trajectory> {
    let free = solve_interior_bvp(&problem.schedule)?;
    let Some(ctx) = problem.safety else {
        return Ok(free);
    };
    if constraint::first_violation(&free, ctx.leader, &ctx.params, free.start_time()).is_none() {
        return Ok(free);
    }
    let planned = constraint::solve_with_windows(&problem.schedule, ctx.leader, &ctx.params)?;
    log::debug!(
        "route entering at {:.3} s pieced with {} boundary segment(s)",
        problem.schedule.entry_time,
        planned.constrained_segments().count()
    );
    Ok(planned)
}
