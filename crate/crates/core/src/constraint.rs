//! Rear-end safety against a leader.
//!
//! The safety margin `m = ξ(p_k − p) − γ − ρv` must stay non-negative while
//! the leader is on the corridor. Holding `m ≡ 0` forces the control
//! `u = κ(v_k − v)` with `κ = ξ/ρ`, so a boundary segment is fully determined
//! by its entry time and the leader's motion. What remains free is where it
//! starts and ends.
//!
//! Entry is tangential: the arc before `t1` reaches `m = 0` with `m' = 0`.
//! At the exit `t2` the control is continuous and the margin multiplier
//! vanishes. Along the segment that multiplier obeys
//!
//! ```text
//! μ' = κμ + (α_B − u_c')/ρ,   μ(t1) = (α_A − α_B)/ξ
//! ```
//!
//! where `α_A`, `α_B` are the jerks of the arcs on either side. Scaling by
//! `e^{−κ(t − t1)}` gives the exit residual
//!
//! ```text
//! R2 = (α_A − α_B)/ξ + α_B(1 − e^{−κL})/(κρ) − z(t2)/ρ,   z' = e^{−κ(t − t1)} u_c'
//! ```
//!
//! with `L = t2 − t1`. The pair `(R1, R2)`, `R1 = u_after(t2) − u_c(t2)`, is
//! driven to zero by a nested scan-and-Brent search.

use crate::arc::{ArcCondition, ArcPoint, PolynomialArc};
use crate::bvp::{solve_stretch, RoutePlanProblem, StretchEnd};
use crate::error::{Error, Result};
use crate::model::{LeaderMotion, SafetyParams, ScheduleAssignment, VehicleState, Waypoint};
use crate::roots::{brent, golden_min, sign_changes, sign_changes_at};
use crate::trajectory::{Segment, Trajectory};

/// Sampling step used to look for margin violations, s.
pub const SCAN_STEP: f64 = 0.01;
/// Margin below `-MARGIN_TOL` counts as a violation, m.
pub const MARGIN_TOL: f64 = 1e-6;

const PATH_STEP: f64 = 0.005;
const TIME_TOL: f64 = 1e-10;
const PIN_TOL: f64 = 1e-6;
const MAX_WINDOWS: usize = 8;

/// Sampled margin `ξ(p_k − p) − γ − ρv` along a follower trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMargin {
    pub times: Vec<f64>,
    /// Metres; `+∞` once the leader has left the corridor.
    pub values: Vec<f64>,
}

impl GapMargin {
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Time and value of the smallest sample.
    pub fn argmin(&self) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.values)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(t, m)| (*t, *m))
    }

    /// Maximal runs of samples below `-tol`, as `(first, last)` sample times.
    pub fn violation_intervals(&self, tol: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for (&t, &m) in self.times.iter().zip(&self.values) {
            if m < -tol {
                open = Some(open.map_or((t, t), |(a, _)| (a, t)));
            } else if let Some(run) = open.take() {
                out.push(run);
            }
        }
        out.extend(open);
        out
    }
}

fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| (start + i as f64 * step).min(end)).collect()
}

/// Margin of the follower at `t`; infinite after the leader's exit.
pub fn margin_at(follower: &Trajectory, leader: &dyn LeaderMotion, params: &SafetyParams, t: f64) -> f64 {
    if t > leader.exit_time() {
        return f64::INFINITY;
    }
    let pt = follower.at(t);
    params.margin(leader.kinematics(t).position, pt.p, pt.v)
}

/// Sample the margin on a uniform grid spanning the follower trajectory.
pub fn gap_margin(
    follower: &Trajectory,
    leader: &dyn LeaderMotion,
    params: &SafetyParams,
    step: f64,
) -> Result<GapMargin> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("grid step must be positive, got {step}")));
    }
    if leader.start_time() > follower.start_time() + 1e-9 {
        return Err(Error::Domain(format!(
            "leader starts at {} s, after the follower at {} s",
            leader.start_time(),
            follower.start_time()
        )));
    }
    Ok(margin_profile(follower, leader, params, step))
}

/// [`gap_margin`] for callers that have already validated the inputs.
pub(crate) fn margin_profile(
    follower: &Trajectory,
    leader: &dyn LeaderMotion,
    params: &SafetyParams,
    step: f64,
) -> GapMargin {
    let times = grid(follower.start_time(), follower.end_time(), step);
    let values = times.iter().map(|&t| margin_at(follower, leader, params, t)).collect();
    GapMargin { times, values }
}

/// Smallest margin on `[from, to]`, refining sampled local minima.
pub fn min_margin(
    follower: &Trajectory,
    leader: &dyn LeaderMotion,
    params: &SafetyParams,
    from: f64,
    to: f64,
) -> (f64, f64) {
    let f = |t: f64| margin_at(follower, leader, params, t);
    let times = grid(from, to, SCAN_STEP);
    let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
    let mut best = (from, f64::INFINITY);
    for i in 0..times.len() {
        if values[i] < best.1 {
            best = (times[i], values[i]);
        }
        let interior = i > 0 && i + 1 < times.len();
        if interior && values[i] <= values[i - 1] && values[i] <= values[i + 1] && values[i].is_finite() {
            let (t, m) = golden_min(f, times[i - 1], times[i + 1], 1e-9);
            if m < best.1 {
                best = (t, m);
            }
        }
    }
    best
}

/// First instant after `from` where the margin drops below `-MARGIN_TOL`.
pub(crate) fn first_violation(
    follower: &Trajectory,
    leader: &dyn LeaderMotion,
    params: &SafetyParams,
    from: f64,
) -> Option<f64> {
    let to = follower.end_time().min(leader.exit_time());
    if !(to > from) {
        return None;
    }
    let f = |t: f64| margin_at(follower, leader, params, t);
    let times = grid(from, to, SCAN_STEP);
    let values: Vec<f64> = times.iter().map(|&t| f(t)).collect();
    for i in 0..times.len() {
        if values[i] < -MARGIN_TOL {
            return Some(times[i]);
        }
        let interior = i > 0 && i + 1 < times.len();
        if interior && values[i] <= values[i - 1] && values[i] <= values[i + 1] && values[i] < 1e-2 {
            let (t, m) = golden_min(f, times[i - 1], times[i + 1], 1e-9);
            if m < -MARGIN_TOL {
                return Some(t);
            }
        }
    }
    None
}

/// Control that keeps an active margin at zero.
pub fn constrained_control(leader: &dyn LeaderMotion, state: VehicleState, params: &SafetyParams) -> Result<f64> {
    if params.rho == 0.0 {
        return Err(Error::Domain(
            "time gap ρ = 0 leaves the boundary control undefined".into(),
        ));
    }
    Ok(params.xi / params.rho * (leader.kinematics(state.time).speed - state.speed))
}

/// One sample of a boundary segment. `du` holds left and right limits of
/// `u'`, which jump wherever the leader's acceleration does.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    t: f64,
    p: f64,
    v: f64,
    u: f64,
    du: [f64; 2],
}

fn cubic_hermite(s: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (3.0 * s2 - 2.0 * s3) * y1 + (s3 - s2) * h * d1
}

fn cubic_hermite_slope(s: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let s2 = s * s;
    ((6.0 * s2 - 6.0 * s) * y0
        + (3.0 * s2 - 4.0 * s + 1.0) * h * d0
        + (6.0 * s - 6.0 * s2) * y1
        + (3.0 * s2 - 2.0 * s) * h * d1)
        / h
}

fn quintic_hermite(s: f64, h: f64, a: &Node, b: &Node) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h3 = 0.5 * (s3 - 2.0 * s4 + s5);
    let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    h0 * a.p + h * h1 * a.v + h * h * h2 * a.u + h5 * b.p + h * h4 * b.v + h * h * h3 * b.u
}

fn interpolate(a: &Node, b: &Node, t: f64) -> Node {
    let h = b.t - a.t;
    if h <= 0.0 {
        return *a;
    }
    let s = (t - a.t) / h;
    let u = cubic_hermite(s, h, a.u, a.du[1], b.u, b.du[0]);
    let du = cubic_hermite_slope(s, h, a.u, a.du[1], b.u, b.du[0]);
    Node {
        t,
        p: quintic_hermite(s, h, a, b),
        v: cubic_hermite(s, h, a.v, a.u, b.v, b.u),
        u,
        du: [du, du],
    }
}

/// Cell index `i` with `t ∈ [t_i, t_{i+1}]`.
fn cell(times: impl Fn(usize) -> f64, len: usize, t: f64) -> usize {
    let (mut lo, mut hi) = (0, len - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if times(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Motion along the safety boundary, where the margin is held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSegment {
    nodes: Vec<Node>,
    breakpoints: Vec<f64>,
}

impl ConstrainedSegment {
    pub fn t_start(&self) -> f64 {
        self.nodes[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].t
    }

    /// Leader acceleration breakpoints inside the segment.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Number of stored samples.
    pub fn sample_count(&self) -> usize {
        self.nodes.len()
    }

    fn node_at(&self, t: f64) -> Node {
        let n = self.nodes.len();
        if t <= self.nodes[0].t {
            return self.nodes[0];
        }
        if t >= self.nodes[n - 1].t {
            return self.nodes[n - 1];
        }
        let i = cell(|k| self.nodes[k].t, n, t);
        interpolate(&self.nodes[i], &self.nodes[i + 1], t)
    }

    /// State at `t`, clamped to the segment.
    pub fn at(&self, t: f64) -> ArcPoint {
        let nd = self.node_at(t);
        ArcPoint {
            u: nd.u,
            v: nd.v,
            p: nd.p,
        }
    }

    pub fn start(&self) -> ArcPoint {
        self.at(self.t_start())
    }

    pub fn end(&self) -> ArcPoint {
        self.at(self.t_end())
    }

    /// `½∫u² dt` by three-point Gauss–Legendre on every sample cell.
    pub fn cost(&self) -> f64 {
        const X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut total = 0.0;
        for pair in self.nodes.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let h = b.t - a.t;
            for (x, w) in X.iter().zip(W) {
                let s = 0.5 * (x + 1.0);
                let u = cubic_hermite(s, h, a.u, a.du[1], b.u, b.du[0]);
                total += 0.5 * w * h * 0.5 * u * u;
            }
        }
        total
    }

    /// Restrict to `[from, to]`.
    fn slice(&self, from: f64, to: f64) -> Self {
        let mut nodes = vec![self.node_at(from)];
        nodes[0].du[1] = self.right_slope(from);
        nodes.extend(self.nodes.iter().copied().filter(|n| n.t > from && n.t < to));
        let mut last = self.node_at(to);
        last.du[0] = self.left_slope(to);
        nodes.push(last);
        if let Some(first) = nodes.first_mut() {
            first.du[0] = first.du[1];
        }
        let breakpoints = self
            .breakpoints
            .iter()
            .copied()
            .filter(|&b| b > from && b < to)
            .collect();
        Self { nodes, breakpoints }
    }

    fn right_slope(&self, t: f64) -> f64 {
        match self.nodes.iter().find(|n| n.t == t) {
            Some(n) => n.du[1],
            None => self.node_at(t).du[1],
        }
    }

    fn left_slope(&self, t: f64) -> f64 {
        match self.nodes.iter().find(|n| n.t == t) {
            Some(n) => n.du[0],
            None => self.node_at(t).du[0],
        }
    }
}

/// A boundary segment integrated ahead of time from a candidate entry,
/// together with the auxiliary `z` needed by the exit residual.
struct BoundaryPath {
    segment: ConstrainedSegment,
    /// `(z, z'_left, z'_right)` per node.
    z: Vec<[f64; 3]>,
}

impl BoundaryPath {
    fn integrate(leader: &dyn LeaderMotion, params: &SafetyParams, t1: f64, v1: f64, t_end: f64) -> Self {
        let kappa = params.gain();
        let mut knots = vec![t1];
        knots.extend(leader.breakpoints(t1, t_end));
        knots.push(t_end);
        let mut times = vec![t1];
        for pair in knots.windows(2) {
            let n = ((pair[1] - pair[0]) / PATH_STEP).ceil().max(1.0) as usize;
            for i in 1..=n {
                times.push(if i == n {
                    pair[1]
                } else {
                    pair[0] + (pair[1] - pair[0]) * i as f64 / n as f64
                });
            }
        }

        let speed_k = |t: f64| leader.kinematics(t).speed;
        let accel_k = |t: f64, lo: f64, hi: f64| {
            let eps = 1e-9 * (hi - lo);
            leader.kinematics(t.clamp(lo + eps, hi - eps)).accel
        };
        let decay = |t: f64| (-kappa * (t - t1)).exp();
        let rhs = |t: f64, v: f64, lo: f64, hi: f64| {
            let u = kappa * (speed_k(t) - v);
            let du = kappa * (accel_k(t, lo, hi) - u);
            (u, decay(t) * du)
        };

        let node = |t: f64, v: f64, left: Option<f64>, right: Option<f64>| {
            let k = leader.kinematics(t);
            let u = kappa * (k.speed - v);
            let a_left = left.map_or(k.accel, |lo| accel_k(t, lo, t));
            let a_right = right.map_or(a_left, |hi| accel_k(t, t, hi));
            Node {
                t,
                p: k.position - (params.gamma + params.rho * v) / params.xi,
                v,
                u,
                du: [kappa * (a_left - u), kappa * (a_right - u)],
            }
        };

        let n = times.len();
        let mut nodes = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let (mut v, mut zv) = (v1, 0.0);
        for i in 0..n {
            let t = times[i];
            let left = (i > 0).then(|| times[i - 1]);
            let right = (i + 1 < n).then(|| times[i + 1]);
            let nd = node(t, v, left, right);
            let e = decay(t);
            z.push([zv, e * nd.du[0], e * nd.du[1]]);
            nodes.push(nd);
            if let Some(t_next) = right {
                let h = t_next - t;
                let (lo, hi) = (t, t_next);
                let (k1v, k1z) = rhs(t, v, lo, hi);
                let (k2v, k2z) = rhs(t + 0.5 * h, v + 0.5 * h * k1v, lo, hi);
                let (k3v, k3z) = rhs(t + 0.5 * h, v + 0.5 * h * k2v, lo, hi);
                let (k4v, k4z) = rhs(t_next, v + h * k3v, lo, hi);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                zv += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
            }
        }
        let breakpoints = knots[1..knots.len() - 1].to_vec();
        Self {
            segment: ConstrainedSegment { nodes, breakpoints },
            z,
        }
    }

    fn t_end(&self) -> f64 {
        self.segment.t_end()
    }

    fn state_at(&self, t: f64) -> (Node, f64) {
        let nodes = &self.segment.nodes;
        let n = nodes.len();
        let t = t.clamp(nodes[0].t, nodes[n - 1].t);
        let i = cell(|k| nodes[k].t, n, t).min(n - 2);
        let (a, b) = (&nodes[i], &nodes[i + 1]);
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let z = cubic_hermite(s, h, self.z[i][0], self.z[i][2], self.z[i + 1][0], self.z[i + 1][1]);
        (interpolate(a, b, t), z)
    }
}

/// A boundary window `[entry, exit]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub entry: f64,
    pub exit: f64,
}

struct Planner<'a> {
    schedule: &'a ScheduleAssignment,
    leader: &'a dyn LeaderMotion,
    params: SafetyParams,
    kappa: f64,
}

/// Trajectory pieces up to the exit of the last window plus the exit
/// residuals of every window.
struct Assembly {
    segments: Vec<Segment>,
    residuals: Vec<[f64; 2]>,
    pin_error: f64,
}

/// Everything known about a candidate entry time.
struct Entry {
    arcs: Vec<PolynomialArc>,
    path: BoundaryPath,
}

impl<'a> Planner<'a> {
    fn new(schedule: &'a ScheduleAssignment, leader: &'a dyn LeaderMotion, params: &SafetyParams) -> Result<Self> {
        if !(params.rho > 0.0 && params.xi > 0.0) {
            return Err(Error::Domain(format!(
                "safety constants must be positive, got ξ = {} and ρ = {}",
                params.xi, params.rho
            )));
        }
        Ok(Self {
            schedule,
            leader,
            params: *params,
            kappa: params.gain(),
        })
    }

    fn tf(&self) -> f64 {
        self.schedule.terminal_time
    }

    fn waypoints_in(&self, from: f64, to: f64) -> Vec<Waypoint> {
        self.schedule
            .waypoints
            .iter()
            .copied()
            .filter(|w| w.time > from && w.time < to)
            .collect()
    }

    fn entry_end(&self, t1: f64) -> StretchEnd {
        let k = self.leader.kinematics(t1);
        let SafetyParams { xi, gamma, rho } = self.params;
        StretchEnd {
            time: t1,
            conditions: [
                ArcCondition::linear(t1, [xi, rho, 0.0], xi * k.position - gamma),
                ArcCondition::linear(t1, [0.0, xi, rho], xi * k.speed),
            ],
        }
    }

    fn terminal(&self) -> StretchEnd {
        StretchEnd::terminal(self.tf(), self.schedule.terminal_position)
    }

    fn tail(&self, start: VehicleState) -> Result<Vec<PolynomialArc>> {
        solve_stretch(start, &self.waypoints_in(start.time, self.tf()), &self.terminal())
    }

    fn enter(&self, cursor: VehicleState, t1: f64, path_end: f64) -> Option<Entry> {
        let arcs = solve_stretch(cursor, &self.waypoints_in(cursor.time, t1), &self.entry_end(t1)).ok()?;
        let state = arcs.last()?.at(t1);
        if !(state.v >= 0.0) || !(path_end > t1) {
            return None;
        }
        let path = BoundaryPath::integrate(self.leader, &self.params, t1, state.v, path_end);
        Some(Entry { arcs, path })
    }

    /// `(R1, R2, first arc after t2)` for a window leaving the path at `t2`.
    fn exit_residuals(&self, entry: &Entry, t1: f64, t2: f64) -> Option<(f64, f64)> {
        let (nd, z) = entry.path.state_at(t2);
        let after = self
            .tail(VehicleState {
                time: t2,
                position: nd.p,
                speed: nd.v,
            })
            .ok()?;
        let first = after.first()?;
        let alpha_a = entry.arcs.last()?.jerk;
        let r1 = first.c - nd.u;
        Some((r1, self.mu_exit(alpha_a, first.jerk, t2 - t1, z)))
    }

    fn mu_exit(&self, alpha_a: f64, alpha_b: f64, len: f64, z: f64) -> f64 {
        let SafetyParams { xi, rho, .. } = self.params;
        let k = self.kappa;
        (alpha_a - alpha_b) / xi + alpha_b * (1.0 - (-k * len).exp()) / (k * rho) - z / rho
    }

    /// First exit time after `t1` where the control joins continuously.
    fn exit_time(&self, entry: &Entry, t1: f64) -> Option<(f64, f64)> {
        let hi = entry.path.t_end();
        let span = hi - t1;
        let n = ((span / 0.05).ceil() as usize).clamp(20, 400);
        // Quadratic spacing resolves short windows right after the entry.
        let xs: Vec<f64> = (1..=n).map(|i| t1 + span * (i as f64 / n as f64).powi(2)).collect();
        let r1 = |t2: f64| self.exit_residuals(entry, t1, t2).map(|r| r.0);
        let (a, b) = *sign_changes_at(r1, &xs).first()?;
        let t2 = brent(|x| r1(x).unwrap_or(f64::NAN), a, b, TIME_TOL, 200)?;
        let (_, r2) = self.exit_residuals(entry, t1, t2)?;
        Some((t2, r2))
    }

    /// Search for one window starting after `cursor`, given a violation at `hint`.
    fn find_window(&self, prefix: &[Segment], cursor: VehicleState, hint: f64) -> Result<Window> {
        let knots: Vec<f64> = self.schedule.waypoints.iter().map(|w| w.time).collect();
        let lo = knots
            .iter()
            .copied()
            .filter(|&t| t <= hint && t > cursor.time)
            .fold(cursor.time, f64::max);
        let limit = self.tf().min(self.leader.exit_time());
        let later: Vec<f64> = knots.iter().copied().filter(|&t| t > hint).collect();

        let mut bounds = vec![later.first().copied().unwrap_or(limit).min(limit)];
        for &t in later.iter().skip(1).chain(std::iter::once(&limit)) {
            bounds.push(t.min(limit));
        }
        bounds.dedup();

        for (attempt, &hi) in bounds.iter().enumerate() {
            let mut best: Option<(f64, Window)> = None;
            for window in self.candidates(cursor, lo, hi) {
                let Ok(asm) = self.assemble(prefix, cursor, &[window]) else {
                    continue;
                };
                if asm.pin_error > PIN_TOL {
                    continue;
                }
                let Ok(traj) = self.finish(asm.segments) else {
                    continue;
                };
                let (_, m) = min_margin(&traj, self.leader, &self.params, cursor.time, window.exit);
                if m < -MARGIN_TOL {
                    continue;
                }
                if best.as_ref().is_none_or(|(c, _)| traj.cost < *c) {
                    best = Some((traj.cost, window));
                }
            }
            if let Some((_, w)) = best {
                if attempt > 0 {
                    log::debug!("boundary window [{:.4}, {:.4}] straddles a waypoint", w.entry, w.exit);
                }
                return Ok(w);
            }
        }
        Err(Error::infeasible(
            hint,
            format!("no tangential boundary window found after {:.3} s", cursor.time),
        ))
    }

    fn candidates(&self, cursor: VehicleState, lo: f64, hi: f64) -> Vec<Window> {
        let span = hi - lo;
        if !(span > 1e-6) {
            return Vec::new();
        }
        let a = lo + (1e-4 * span).min(1e-3);
        let n = ((span / 0.1).ceil() as usize).clamp(20, 200);
        let g = |t1: f64| {
            let entry = self.enter(cursor, t1, hi)?;
            self.exit_time(&entry, t1).map(|(_, r2)| r2)
        };
        let mut out = Vec::new();
        for (x0, x1) in sign_changes(g, a, hi, n) {
            let Some(t1) = brent(|x| g(x).unwrap_or(f64::NAN), x0, x1, TIME_TOL, 200) else {
                continue;
            };
            let Some(entry) = self.enter(cursor, t1, hi) else {
                continue;
            };
            let Some((t2, r2)) = self.exit_time(&entry, t1) else {
                continue;
            };
            if r2.abs() < 1e-6 {
                out.push(Window { entry: t1, exit: t2 });
            }
        }
        out
    }

    /// Piece arcs and boundary segments from `cursor` through `windows`,
    /// stopping at the last exit.
    fn assemble(&self, prefix: &[Segment], cursor: VehicleState, windows: &[Window]) -> Result<Assembly> {
        let mut segments = prefix.to_vec();
        let mut residuals = Vec::with_capacity(windows.len());
        let mut pin_error: f64 = 0.0;
        let mut cursor = cursor;
        let mut pending: Option<(f64, f64, f64, f64)> = None;
        for (i, w) in windows.iter().enumerate() {
            if !(w.entry > cursor.time && w.exit > w.entry) {
                return Err(Error::infeasible(w.entry, "boundary windows overlap"));
            }
            let arcs = solve_stretch(
                cursor,
                &self.waypoints_in(cursor.time, w.entry),
                &self.entry_end(w.entry),
            )?;
            if let Some((t1, t2, alpha_a, z)) = pending.take() {
                let first = arcs[0];
                let r1 = first.c - segments_end_control(&segments);
                residuals.push([r1, self.mu_exit(alpha_a, first.jerk, t2 - t1, z)]);
            }
            let alpha_a = arcs[arcs.len() - 1].jerk;
            let v1 = arcs[arcs.len() - 1].at(w.entry).v;
            segments.extend(arcs.into_iter().map(Segment::Free));
            let path = BoundaryPath::integrate(self.leader, &self.params, w.entry, v1, w.exit);
            let (_, z) = path.state_at(w.exit);
            let mut cuts = vec![w.entry];
            for wp in self.waypoints_in(w.entry, w.exit) {
                let pt = path.segment.at(wp.time);
                pin_error = pin_error.max((pt.p - wp.position).abs());
                if let Some(v) = wp.speed {
                    pin_error = pin_error.max((pt.v - v).abs());
                }
                cuts.push(wp.time);
            }
            cuts.push(w.exit);
            for pair in cuts.windows(2) {
                segments.push(Segment::Constrained(path.segment.slice(pair[0], pair[1])));
            }
            let end = path.segment.end();
            cursor = VehicleState {
                time: w.exit,
                position: end.p,
                speed: end.v,
            };
            pending = Some((w.entry, w.exit, alpha_a, z));
            if i + 1 == windows.len() {
                let tail = self.tail(cursor)?;
                let first = tail[0];
                residuals.push([first.c - end.u, self.mu_exit(alpha_a, first.jerk, w.exit - w.entry, z)]);
            }
        }
        Ok(Assembly {
            segments,
            residuals,
            pin_error,
        })
    }

    /// Append the free stretch from the end of `segments` to the terminal.
    fn finish(&self, mut segments: Vec<Segment>) -> Result<Trajectory> {
        let cursor = match segments.last() {
            Some(s) => {
                let pt = s.at(s.t_end());
                VehicleState {
                    time: s.t_end(),
                    position: pt.p,
                    speed: pt.v,
                }
            }
            None => self.schedule.entry_state(),
        };
        segments.extend(self.tail(cursor)?.into_iter().map(Segment::Free));
        Ok(Trajectory::new(segments))
    }

    fn build(&self, windows: &[Window]) -> Result<(Trajectory, Assembly)> {
        let asm = self.assemble(&[], self.schedule.entry_state(), windows)?;
        let traj = self.finish(asm.segments.clone())?;
        Ok((traj, asm))
    }

    /// Newton on all junction times jointly, once several windows interact.
    fn polish(&self, windows: Vec<Window>) -> Vec<Window> {
        let flat = |w: &[Window]| w.iter().flat_map(|w| [w.entry, w.exit]).collect::<Vec<_>>();
        let unflat = |x: &[f64]| {
            x.chunks(2)
                .map(|c| Window {
                    entry: c[0],
                    exit: c[1],
                })
                .collect::<Vec<_>>()
        };
        let residual = |x: &[f64]| -> Option<Vec<f64>> {
            let asm = self.assemble(&[], self.schedule.entry_state(), &unflat(x)).ok()?;
            Some(asm.residuals.into_iter().flatten().collect())
        };
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();

        let mut x = flat(&windows);
        let Some(mut r) = residual(&x) else {
            return windows;
        };
        let n = x.len();
        for _ in 0..30 {
            if norm(&r) < 1e-11 {
                break;
            }
            let mut jac = crate::linalg::LinearSystem::zeros(n);
            for j in 0..n {
                let h = 1e-7;
                let mut xp = x.clone();
                xp[j] += h;
                let Some(rp) = residual(&xp) else {
                    return unflat(&x);
                };
                for i in 0..n {
                    jac.set(i, j, (rp[i] - r[i]) / h);
                }
            }
            for (i, ri) in r.iter().enumerate() {
                jac.set_rhs(i, -ri);
            }
            let Ok(dx) = jac.solve() else {
                break;
            };
            let mut step = 1.0;
            let mut improved = false;
            while step > 1e-4 {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
                if let Some(rt) = residual(&trial) {
                    if norm(&rt) < norm(&r) {
                        x = trial;
                        r = rt;
                        improved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        log::debug!("junction polish residual {:.3e}", norm(&r));
        unflat(&x)
    }

    fn solve(&self) -> Result<(Trajectory, Vec<Window>)> {
        let entry = self.schedule.entry_state();
        let mut windows: Vec<Window> = Vec::new();
        let mut traj = self.build(&windows)?.0;
        for _ in 0..MAX_WINDOWS {
            let from = windows.last().map_or(entry.time, |w| w.exit + 1e-6);
            let Some(hint) = first_violation(&traj, self.leader, &self.params, from) else {
                return self.finalize(traj, windows);
            };
            let (prefix, cursor) = if windows.is_empty() {
                (Vec::new(), entry)
            } else {
                let asm = self.assemble(&[], entry, &windows)?;
                let last = asm.segments.last().expect("non-empty assembly");
                let pt = last.at(last.t_end());
                let cursor = VehicleState {
                    time: last.t_end(),
                    position: pt.p,
                    speed: pt.v,
                };
                (asm.segments, cursor)
            };
            let w = self.find_window(&prefix, cursor, hint)?;
            windows.push(w);
            traj = self.build(&windows)?.0;
        }
        Err(Error::infeasible(
            entry.time,
            format!("margin still violated after {MAX_WINDOWS} boundary windows"),
        ))
    }

    fn finalize(&self, traj: Trajectory, windows: Vec<Window>) -> Result<(Trajectory, Vec<Window>)> {
        if windows.len() < 2 {
            return Ok((traj, windows));
        }
        let polished = self.polish(windows.clone());
        if let Ok((candidate, asm)) = self.build(&polished) {
            let (_, m) = min_margin(
                &candidate,
                self.leader,
                &self.params,
                candidate.start_time(),
                candidate.end_time(),
            );
            if asm.pin_error <= PIN_TOL && m >= -MARGIN_TOL {
                return Ok((candidate, polished));
            }
        }
        Ok((traj, windows))
    }
}

fn segments_end_control(segments: &[Segment]) -> f64 {
    let last = &segments[segments.len() - 1];
    last.at(last.t_end()).u
}

/// Optimal route through the schedule that keeps the margin non-negative,
/// with as many boundary windows as the leader forces.
pub fn solve_with_windows(
    schedule: &ScheduleAssignment,
    leader: &dyn LeaderMotion,
    params: &SafetyParams,
) -> Result<Trajectory> {
    Ok(Planner::new(schedule, leader, params)?.solve()?.0)
}

/// Same as [`solve_with_windows`], also returning the boundary windows.
pub fn plan_windows(
    schedule: &ScheduleAssignment,
    leader: &dyn LeaderMotion,
    params: &SafetyParams,
) -> Result<(Trajectory, Vec<Window>)> {
    Planner::new(schedule, leader, params)?.solve()
}

fn safety_of<'p>(problem: &'p RoutePlanProblem<'_>) -> Result<(&'p dyn LeaderMotion, SafetyParams)> {
    let ctx = problem
        .safety
        .ok_or_else(|| Error::Contract("the problem has no leader to keep clear of".into()))?;
    Ok((ctx.leader, ctx.params))
}

/// Entry and exit of the first boundary window.
pub fn find_junction_times(problem: &RoutePlanProblem<'_>) -> Result<(f64, f64)> {
    let (leader, params) = safety_of(problem)?;
    let (_, windows) = plan_windows(&problem.schedule, leader, &params)?;
    windows
        .first()
        .map(|w| (w.entry, w.exit))
        .ok_or_else(|| Error::Contract("the unconstrained route already keeps a safe gap".into()))
}

/// Piece boundary windows into a route with interior waypoints.
pub fn piece_case4(problem: &RoutePlanProblem<'_>) -> Result<Trajectory> {
    if problem.schedule.waypoints.is_empty() {
        return Err(Error::Contract("route has no interior waypoints".into()));
    }
    let (leader, params) = safety_of(problem)?;
    solve_with_windows(&problem.schedule, leader, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LeaderProfile;

    fn params(gamma: f64) -> SafetyParams {
        SafetyParams {
            xi: 1.0,
            gamma,
            rho: 1.2,
        }
    }

    #[test]
    fn parked_leader_margin() {
        let leader = LeaderProfile::constant_speed(0.0, 20.0, 0.0, 100.0);
        let still = Trajectory::from_arcs(vec![PolynomialArc::cruise(0.0, 10.0, 0.0, 0.0)]);
        let m = gap_margin(&still, &leader, &params(3.0), 0.5).unwrap();
        assert!(m.values.iter().all(|v| (v - 17.0).abs() < 1e-12));
        assert!(gap_margin(&still, &leader, &params(3.0), 0.0).is_err());
    }

    #[test]
    fn margin_is_infinite_after_exit() {
        let leader = LeaderProfile::constant_speed(0.0, 20.0, 10.0, 2.0);
        let f = Trajectory::from_arcs(vec![PolynomialArc::cruise(0.0, 5.0, 0.0, 10.0)]);
        let m = gap_margin(&f, &leader, &params(0.0), 1.0).unwrap();
        assert!(m.values[1].is_finite());
        assert!(m.values[3].is_infinite());
    }

    #[test]
    fn coincident_positions_are_unsafe() {
        let leader = LeaderProfile::constant_speed(0.0, 0.0, 10.0, 10.0);
        let f = Trajectory::from_arcs(vec![PolynomialArc::cruise(0.0, 5.0, 0.0, 10.0)]);
        let m = gap_margin(&f, &leader, &params(2.0), 1.0).unwrap();
        assert!((m.min_value() + 14.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_control_examples() {
        let leader = LeaderProfile::constant_speed(0.0, 50.0, 11.5, 10.0);
        let st = |v| VehicleState {
            time: 1.0,
            position: 0.0,
            speed: v,
        };
        assert_eq!(constrained_control(&leader, st(11.5), &params(0.0)).unwrap(), 0.0);
        let u = constrained_control(&leader, st(12.0), &params(0.0)).unwrap();
        assert!((u + 5.0 / 12.0).abs() < 1e-12);
        let zero = SafetyParams {
            rho: 0.0,
            ..params(0.0)
        };
        assert!(constrained_control(&leader, st(12.0), &zero).is_err());
    }

    #[test]
    fn boundary_path_holds_zero_margin() {
        let leader = LeaderProfile::from_accelerations(0.0, 20.0, 11.5, &[(2.0, 0.4), (10.0, -0.3)], 12.0);
        let p = params(2.0);
        let v1 = 12.5;
        let path = BoundaryPath::integrate(&leader, &p, 0.5, v1, 5.5);
        let seg = &path.segment;
        assert_eq!(seg.breakpoints(), &[2.0]);
        for i in 0..=500 {
            let t = 0.5 + 5.0 * i as f64 / 500.0;
            let pt = seg.at(t);
            let m = p.margin(leader.kinematics(t).position, pt.p, pt.v);
            assert!(m.abs() < 1e-6, "margin {m} at {t}");
        }
        // Speed obeys v' = κ(v_k − v) in closed form on the first piece.
        let k = p.gain();
        let t = 1.7;
        let (vk0, a) = (leader.kinematics(0.5).speed, 0.4);
        let exact = vk0 + a * (t - 0.5) - a / k + (v1 - vk0 + a / k) * (-k * (t - 0.5)).exp();
        assert!((seg.at(t).v - exact).abs() < 1e-9);
    }

    #[test]
    fn slice_keeps_cost_additive() {
        let leader = LeaderProfile::from_accelerations(0.0, 20.0, 11.5, &[(10.0, 0.3)], 10.0);
        let path = BoundaryPath::integrate(&leader, &params(0.0), 0.0, 13.0, 4.0);
        let whole = path.segment.cost();
        let parts = path.segment.slice(0.0, 1.234).cost() + path.segment.slice(1.234, 4.0).cost();
        assert!((whole - parts).abs() < 1e-9 * whole.max(1.0));
    }
}
