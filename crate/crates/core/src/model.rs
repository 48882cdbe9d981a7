//! Corridor geometry, vehicle and safety parameters, schedules and leader motion.
//!
//! Positions are route-relative: every vehicle enters its route at position 0
//! and the route ends at the last conflict zone it crosses.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuity tolerance for piecewise leader descriptions.
const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictZone {
    pub id: u32,
    /// Position along the corridor, meters.
    pub position: f64,
    /// Speed pinned at the crossing when present, m/s.
    pub desired_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub length: f64,
    pub zones: Vec<ConflictZone>,
    #[serde(default)]
    pub entry_position: f64,
}

impl CorridorSpec {
    pub fn zone(&self, id: u32) -> Option<&ConflictZone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn zone_at(&self, position: f64) -> Option<&ConflictZone> {
        self.zones.iter().find(|z| (z.position - position).abs() <= 1e-9)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.length > 0.0) {
            out.push(Violation::NonPositiveLength(self.length));
        }
        for z in &self.zones {
            if !(z.position > 0.0 && z.position <= self.length) {
                out.push(Violation::ZoneOutOfRange {
                    zone: z.id,
                    position: z.position,
                });
            }
            if let Some(v) = z.desired_speed {
                if !(v > 0.0) {
                    out.push(Violation::NonPositiveDesiredSpeed { zone: z.id, speed: v });
                }
            }
        }
        for pair in self.zones.windows(2) {
            if !(pair[1].position > pair[0].position) {
                out.push(Violation::NonIncreasingZones {
                    first: pair[0].id,
                    second: pair[1].id,
                });
            }
        }
        for (i, z) in self.zones.iter().enumerate() {
            if self.zones[..i].iter().any(|o| o.id == z.id) {
                out.push(Violation::DuplicateZoneId(z.id));
            }
        }
        out
    }
}

/// Control and speed bounds of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            u_min: -3.0,
            u_max: 2.5,
            v_min: 0.0,
            v_max: 30.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.u_min < 0.0 && 0.0 < self.u_max) {
            out.push(Violation::ControlBounds {
                u_min: self.u_min,
                u_max: self.u_max,
            });
        }
        if !(0.0 <= self.v_min && self.v_min < self.v_max) {
            out.push(Violation::SpeedBounds {
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        out
    }
}

/// Rear-end safety constants.
///
/// The gap to the leader is `xi * (p_k - p_i)` and must stay at or above
/// `gamma + rho * v_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    pub xi: f64,
    /// Standstill distance, m.
    pub gamma: f64,
    /// Minimum time gap, s.
    pub rho: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            xi: 1.0,
            gamma: 0.0,
            rho: 1.2,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.xi > 0.0) {
            out.push(Violation::NonPositiveReaction(self.xi));
        }
        if !(self.gamma >= 0.0) {
            out.push(Violation::NegativeStandstill(self.gamma));
        }
        if !(self.rho > 0.0) {
            out.push(Violation::NonPositiveTimeGap(self.rho));
        }
        out
    }

    /// Speed-dependent minimum safe distance `gamma + rho * v`.
    pub fn min_safe_distance(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(Error::Domain(format!("negative speed {v} m/s")));
        }
        Ok(self.gamma + self.rho * v)
    }

    /// Gap minus safe distance. Unlike [`min_safe_distance`](Self::min_safe_distance)
    /// this accepts any speed, since it is evaluated on trial trajectories.
    pub fn margin(&self, leader_position: f64, position: f64, speed: f64) -> f64 {
        self.xi * (leader_position - position) - self.gamma - self.rho * speed
    }

    /// `xi / rho`, the gain of the boundary-tracking control law.
    pub fn gain(&self) -> f64 {
        self.xi / self.rho
    }
}

/// Free-function form of [`SafetyParams::min_safe_distance`].
pub fn min_safe_distance(params: &SafetyParams, v: f64) -> Result<f64> {
    params.min_safe_distance(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub time: f64,
}

/// Position, speed and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
}

/// Scheduled crossing of an intermediate conflict zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub position: f64,
    /// Pinned crossing speed, if the zone imposes one.
    pub speed: Option<f64>,
}

impl Waypoint {
    pub fn new(time: f64, position: f64) -> Self {
        Self {
            time,
            position,
            speed: None,
        }
    }

    pub fn with_speed(time: f64, position: f64, speed: f64) -> Self {
        Self {
            time,
            position,
            speed: Some(speed),
        }
    }
}

/// Crossing times handed down by the upper-level scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAssignment {
    pub entry_time: f64,
    pub entry_speed: f64,
    pub waypoints: Vec<Waypoint>,
    pub terminal_time: f64,
    pub terminal_position: f64,
}

impl ScheduleAssignment {
    pub fn direct(entry_time: f64, entry_speed: f64, terminal_time: f64, terminal_position: f64) -> Self {
        Self {
            entry_time,
            entry_speed,
            waypoints: Vec::new(),
            terminal_time,
            terminal_position,
        }
    }

    pub fn with_waypoints(mut self, waypoints: Vec<Waypoint>) -> Self {
        self.waypoints = waypoints;
        self
    }

    pub fn entry_state(&self) -> VehicleState {
        VehicleState {
            position: 0.0,
            speed: self.entry_speed,
            time: self.entry_time,
        }
    }

    /// Times and positions of every pin after entry, terminal included.
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.waypoints
            .iter()
            .map(|w| (w.time, w.position))
            .chain(std::iter::once((self.terminal_time, self.terminal_position)))
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.entry_speed >= 0.0) {
            out.push(Violation::Schedule(format!(
                "negative entry speed {}",
                self.entry_speed
            )));
        }
        let mut prev = (self.entry_time, 0.0);
        for (t, p) in self.knots() {
            if !(t > prev.0) {
                out.push(Violation::Schedule(format!(
                    "crossing time {t} s does not follow {} s",
                    prev.0
                )));
            }
            if !(p > prev.1) {
                out.push(Violation::Schedule(format!(
                    "crossing position {p} m does not follow {} m",
                    prev.1
                )));
            }
            prev = (t, p);
        }
        for w in &self.waypoints {
            if let Some(v) = w.speed {
                if !(v > 0.0) {
                    out.push(Violation::Schedule(format!("pinned speed {v} at {} s", w.time)));
                }
            }
        }
        out
    }
}

/// One constant-acceleration piece of a leader profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub start_time: f64,
    pub start_position: f64,
    pub start_speed: f64,
    pub accel: f64,
}

impl AccelSegment {
    fn at(&self, t: f64) -> Kinematics {
        let dt = t - self.start_time;
        Kinematics {
            position: self.start_position + self.start_speed * dt + 0.5 * self.accel * dt * dt,
            speed: self.start_speed + self.accel * dt,
            accel: self.accel,
        }
    }
}

/// Piecewise constant-acceleration motion of a leading vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderProfile {
    pub segments: Vec<AccelSegment>,
    /// Time at which the leader leaves the corridor.
    pub exit_time: f64,
}

impl LeaderProfile {
    /// Builds a continuous profile from `(duration, accel)` pieces; the last
    /// piece runs until `exit_time`, whatever its stated duration.
    pub fn from_accelerations(
        start_time: f64,
        start_position: f64,
        start_speed: f64,
        pieces: &[(f64, f64)],
        exit_time: f64,
    ) -> Self {
        let mut segments = Vec::with_capacity(pieces.len().max(1));
        let mut seg = AccelSegment {
            start_time,
            start_position,
            start_speed,
            accel: pieces.first().map_or(0.0, |p| p.1),
        };
        for (i, &(duration, accel)) in pieces.iter().enumerate() {
            seg.accel = accel;
            segments.push(seg);
            if i + 1 < pieces.len() {
                let end = seg.at(seg.start_time + duration);
                seg = AccelSegment {
                    start_time: seg.start_time + duration,
                    start_position: end.position,
                    start_speed: end.speed,
                    accel: 0.0,
                };
            }
        }
        if segments.is_empty() {
            segments.push(seg);
        }
        Self { segments, exit_time }
    }

    pub fn constant_speed(start_time: f64, start_position: f64, speed: f64, exit_time: f64) -> Self {
        Self::from_accelerations(start_time, start_position, speed, &[(f64::INFINITY, 0.0)], exit_time)
    }

    pub fn start_time(&self) -> f64 {
        self.segments[0].start_time
    }

    fn segment_for(&self, t: f64) -> &AccelSegment {
        let idx = self.segments.partition_point(|s| s.start_time <= t).saturating_sub(1);
        &self.segments[idx]
    }

    /// Leader state at `t` by exact constant-acceleration kinematics.
    pub fn state_at(&self, t: f64) -> Result<VehicleState> {
        let start = self.start_time();
        if !(t >= start && t <= self.exit_time) {
            return Err(Error::OutOfSpan {
                t,
                start,
                end: self.exit_time,
            });
        }
        let k = self.segment_for(t).at(t);
        Ok(VehicleState {
            position: k.position,
            speed: k.speed,
            time: t,
        })
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.segments.is_empty() {
            out.push(Violation::Leader("no segments".into()));
            return out;
        }
        for (i, pair) in self.segments.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if !(b.start_time > a.start_time) {
                out.push(Violation::Leader(format!(
                    "segment {} does not start after segment {i}",
                    i + 1
                )));
                continue;
            }
            let end = a.at(b.start_time);
            if (end.position - b.start_position).abs() > CONTINUITY_TOL * end.position.abs().max(1.0)
                || (end.speed - b.start_speed).abs() > CONTINUITY_TOL * end.speed.abs().max(1.0)
            {
                out.push(Violation::Leader(format!(
                    "discontinuous at {} s between segments {i} and {}",
                    b.start_time,
                    i + 1
                )));
            }
        }
        if !(self.exit_time > self.start_time()) {
            out.push(Violation::Leader(format!(
                "exit time {} precedes start",
                self.exit_time
            )));
        }
        out
    }
}

/// Free-function form of [`LeaderProfile::state_at`].
pub fn leader_state_at(profile: &LeaderProfile, t: f64) -> Result<VehicleState> {
    profile.state_at(t)
}

/// Anything a follower can keep a safe distance behind.
pub trait LeaderMotion: Send + Sync {
    fn start_time(&self) -> f64;

    /// The leader is gone after this instant; the gap is unbounded from then on.
    fn exit_time(&self) -> f64;

    /// Kinematics at `t`. Implementations extrapolate outside their span.
    fn kinematics(&self, t: f64) -> Kinematics;

    /// Instants strictly inside `(from, to)` where the acceleration may jump.
    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64>;
}

impl LeaderMotion for LeaderProfile {
    fn start_time(&self) -> f64 {
        LeaderProfile::start_time(self)
    }

    fn exit_time(&self) -> f64 {
        self.exit_time
    }

    fn kinematics(&self, t: f64) -> Kinematics {
        self.segment_for(t).at(t)
    }

    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        self.segments
            .iter()
            .skip(1)
            .map(|s| s.start_time)
            .filter(|&t| t > from && t < to)
            .collect()
    }
}

/// A leader seen from a follower whose route coordinate is shifted.
pub struct ShiftedLeader<'a> {
    pub inner: &'a dyn LeaderMotion,
    /// Added to every leader position.
    pub offset: f64,
}

impl LeaderMotion for ShiftedLeader<'_> {
    fn start_time(&self) -> f64 {
        self.inner.start_time()
    }

    fn exit_time(&self) -> f64 {
        self.inner.exit_time()
    }

    fn kinematics(&self, t: f64) -> Kinematics {
        let mut k = self.inner.kinematics(t);
        k.position += self.offset;
        k
    }

    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        self.inner.breakpoints(from, to)
    }
}

/// A broken invariant found while validating a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveLength(f64),
    ZoneOutOfRange {
        zone: u32,
        position: f64,
    },
    NonIncreasingZones {
        first: u32,
        second: u32,
    },
    DuplicateZoneId(u32),
    NonPositiveDesiredSpeed {
        zone: u32,
        speed: f64,
    },
    ControlBounds {
        u_min: f64,
        u_max: f64,
    },
    SpeedBounds {
        v_min: f64,
        v_max: f64,
    },
    NonPositiveReaction(f64),
    NegativeStandstill(f64),
    NonPositiveTimeGap(f64),
    Schedule(String),
    Leader(String),
    /// A vehicle-scoped violation.
    Vehicle {
        id: u32,
        inner: Box<Violation>,
    },
    WaypointOffZone {
        zone: u32,
    },
    TerminalNotRouteEnd {
        position: f64,
        route_end: f64,
    },
    /// Any other field-level problem: `(field, message)`.
    Field(String, String),
}

impl Violation {
    pub fn for_vehicle(id: u32, inner: Violation) -> Self {
        Violation::Vehicle {
            id,
            inner: Box::new(inner),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonPositiveLength(l) => write!(f, "corridor length {l} m is not positive"),
            ZoneOutOfRange { zone, position } => {
                write!(f, "zone {zone} at {position} m lies outside the corridor")
            }
            NonIncreasingZones { first, second } => {
                write!(f, "non-increasing zone positions (zone {first} then zone {second})")
            }
            DuplicateZoneId(id) => write!(f, "zone id {id} used twice"),
            NonPositiveDesiredSpeed { zone, speed } => {
                write!(f, "zone {zone} desired speed {speed} m/s is not positive")
            }
            ControlBounds { u_min, u_max } => {
                write!(f, "control bounds need u_min < 0 < u_max (got {u_min}, {u_max})")
            }
            SpeedBounds { v_min, v_max } => {
                write!(f, "speed bounds need 0 <= v_min < v_max (got {v_min}, {v_max})")
            }
            NonPositiveReaction(x) => write!(f, "reaction constant xi = {x} is not positive"),
            NegativeStandstill(g) => write!(f, "standstill distance gamma = {g} m is negative"),
            NonPositiveTimeGap(r) => write!(f, "nonpositive time gap rho = {r} s"),
            Schedule(msg) => write!(f, "schedule: {msg}"),
            Leader(msg) => write!(f, "leader profile: {msg}"),
            Vehicle { id, inner } => write!(f, "vehicle {id}: {inner}"),
            WaypointOffZone { zone } => write!(f, "waypoint references unknown zone {zone}"),
            TerminalNotRouteEnd { position, route_end } => {
                write!(f, "terminal position {position} m differs from route end {route_end} m")
            }
            Field(field, msg) => write!(f, "{field}: {msg}"),
        }
    }
}
