//! Time-stepped corridor simulation.
//!
//! All entries share one projected coordinate: every route starts at 0 and
//! reaches the corridor end at `length`. Before the first zone, which is the
//! merge when there is more than one entry, each entry has its own lane.
//! From the merge on there is a single lane.
//!
//! In [`SimMode::Optimal`] vehicles are admitted one at a time. Each receives
//! a first-come-first-served schedule and is planned with [`solve_route`]
//! against the plan of the previously admitted vehicle, whatever its entry.
//! Keeping every vehicle behind its predecessor in admission order keeps it
//! behind everything ahead of it on its physical lane too. In
//! [`SimMode::Baseline`] vehicles follow the intelligent driver model, and
//! minor-entry vehicles wait at the merge for a gap.

mod arrivals;
mod baseline;
mod events;
mod schedule;

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;

pub use arrivals::{generate_arrivals, Arrival};
pub use baseline::{advance, baseline_accel, IdmParams};
pub use events::Event;
pub use schedule::{assign_schedule, FifoScheduler, FifoSchedulerParams};

use crate::bvp::{solve_route, RoutePlanProblem};
use crate::error::{Error, Result};
use crate::metrics::{total_fuel, FuelCoefficients, FuelSample, RunReport, VehicleRecord, ViolationEvent};
use crate::model::{CorridorSpec, LeaderMotion, SafetyParams, VehicleParams, VehicleState};
use crate::scenario::{validate_scenario, EntrySpec, Priority, ScenarioSpec, SimMode};
use crate::trajectory::Trajectory;

/// A vehicle that cannot enter for this long after arriving makes the run fail.
const MAX_HOLD: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: ScenarioSpec,
    pub mode: SimMode,
    /// s
    pub dt: f64,
    pub seed: u64,
    /// s
    pub horizon: f64,
}

impl SimConfig {
    /// Mode, step, seed and horizon from the scenario's `[simulation]` table.
    pub fn new(scenario: ScenarioSpec) -> Self {
        let s = scenario.simulation;
        Self {
            scenario,
            mode: s.mode,
            dt: s.dt_s,
            seed: s.seed,
            horizon: s.horizon_s,
        }
    }

    pub fn with_mode(mut self, mode: SimMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = validate_scenario(&self.scenario);
        for (name, x) in [("dt", self.dt), ("horizon", self.horizon)] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(crate::model::Violation::Field(
                    name.into(),
                    format!("{x} is not positive"),
                ));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }
}

/// State of one vehicle at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSample {
    pub vehicle: u32,
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub u: f64,
    /// Margin to the vehicle ahead on the same lane, if any.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimVehicle {
    pub id: u32,
    pub entry: usize,
    pub arrival_time: f64,
    pub entry_time: f64,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub plan: Option<Arc<Trajectory>>,
    cruise_speed: f64,
    committed: bool,
    crossed: usize,
    zone_times: Vec<(u32, f64)>,
    fuel: Vec<FuelSample>,
    steps: u64,
    min_margin: f64,
}

impl SimVehicle {
    pub fn state(&self, time: f64) -> VehicleState {
        VehicleState {
            position: self.position,
            speed: self.speed,
            time,
        }
    }
}

/// Quantities derived once from the configuration.
#[derive(Debug, Clone)]
struct World {
    corridor: CorridorSpec,
    entries: Vec<EntrySpec>,
    safety: SafetyParams,
    bounds: VehicleParams,
    idm: IdmParams,
    merge: Option<f64>,
    stride: u64,
    sample_interval: f64,
    margin_tol: f64,
    approach: f64,
    fuel: FuelCoefficients,
}

impl World {
    fn new(config: &SimConfig) -> Self {
        let spec = &config.scenario;
        let corridor = spec.corridor();
        let entries = spec.entries();
        let safety = spec.safety_params();
        let merge = if entries.len() > 1 {
            corridor.zones.first().map(|z| z.position)
        } else {
            None
        };
        let stride = (spec.simulation.sample_interval_s / config.dt).round().max(1.0) as u64;
        Self {
            idm: IdmParams::from_section(&spec.baseline, safety.gamma, 0.0),
            corridor,
            entries,
            safety,
            bounds: spec.vehicle_params(),
            merge,
            stride,
            sample_interval: stride as f64 * config.dt,
            margin_tol: spec.tolerances.margin_m,
            approach: spec.baseline.zone_approach_m,
            fuel: spec.fuel_coefficients(),
        }
    }

    fn merged(&self, v: &SimVehicle) -> bool {
        self.merge.is_none_or(|m| v.position >= m)
    }
}

pub struct SimState {
    pub clock: f64,
    steps: u64,
    /// Vehicles inside the corridor, in admission order.
    pub queue: Vec<SimVehicle>,
    /// Arrived vehicles waiting to enter, per entry.
    pub waiting: Vec<VecDeque<Arrival>>,
    pub retired: Vec<VehicleRecord>,
    pub events: Vec<Event>,
    pub samples: Vec<StepSample>,
    pub violations: Vec<ViolationEvent>,
    pub plans: Vec<(u32, Arc<Trajectory>)>,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    scheduler: FifoScheduler,
    last_plan: Option<(u32, Arc<Trajectory>)>,
    held: BTreeSet<u32>,
    world: World,
}

impl SimState {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let world = World::new(config);
        let params = FifoSchedulerParams::from_corridor(&world.corridor, config.scenario.scheduler.headway_s);
        Ok(Self {
            clock: 0.0,
            steps: 0,
            queue: Vec::new(),
            waiting: vec![VecDeque::new(); world.entries.len()],
            retired: Vec::new(),
            events: Vec::new(),
            samples: Vec::new(),
            violations: Vec::new(),
            plans: Vec::new(),
            arrivals: generate_arrivals(&config.scenario, config.seed, config.horizon),
            next_arrival: 0,
            scheduler: FifoScheduler::new(&world.corridor, &params),
            last_plan: None,
            held: BTreeSet::new(),
            world,
        })
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn scheduler(&self) -> &FifoScheduler {
        &self.scheduler
    }

    /// No vehicle left to arrive, wait or drive.
    pub fn is_finished(&self) -> bool {
        self.next_arrival == self.arrivals.len() && self.waiting.iter().all(VecDeque::is_empty) && self.queue.is_empty()
    }

    /// Index of the nearest vehicle ahead of `queue[i]` on its physical lane.
    fn physical_leader(&self, i: usize) -> Option<usize> {
        let me = &self.queue[i];
        let mine_merged = self.world.merged(me);
        self.queue
            .iter()
            .enumerate()
            .filter(|&(j, o)| {
                j != i
                    && (o.position > me.position || (o.position == me.position && j < i))
                    && (self.world.merged(o) || (!mine_merged && o.entry == me.entry))
            })
            .min_by(|a, b| a.1.position.total_cmp(&b.1.position))
            .map(|(j, _)| j)
    }

    /// Margin of a vehicle entering `entry` at `speed` to whoever is ahead of it.
    fn entry_margin(&self, entry: usize, speed: f64) -> Option<(u32, f64)> {
        self.queue
            .iter()
            .filter(|o| self.world.merged(o) || o.entry == entry)
            .min_by(|a, b| a.position.total_cmp(&b.position))
            .map(|o| (o.id, self.world.safety.margin(o.position, 0.0, speed)))
    }

    fn hold(&mut self, a: &Arrival, t: f64, reason: String) -> Result<bool> {
        if t - a.time > MAX_HOLD {
            return Err(Error::infeasible(
                t,
                format!("vehicle {} could not enter: {reason}", a.id),
            ));
        }
        if self.held.insert(a.id) {
            self.events.push(Event::Hold {
                t,
                vehicle: a.id,
                reason,
            });
        }
        Ok(false)
    }

    fn enter(&mut self, a: &Arrival, t: f64, accel: f64, plan: Option<Arc<Trajectory>>, leader: Option<u32>) {
        self.events.push(Event::Admit {
            t,
            vehicle: a.id,
            speed: a.speed,
            leader,
        });
        self.queue.push(SimVehicle {
            id: a.id,
            entry: a.entry,
            arrival_time: a.time,
            entry_time: t,
            position: 0.0,
            speed: a.speed,
            accel,
            plan,
            cruise_speed: a.speed,
            committed: false,
            crossed: 0,
            zone_times: Vec::new(),
            fuel: Vec::new(),
            steps: 0,
            min_margin: f64::INFINITY,
        });
    }

    fn admit(&mut self, config: &SimConfig, a: &Arrival, t: f64) -> Result<bool> {
        if let Some((_, m)) = self.entry_margin(a.entry, a.speed) {
            if m < 0.0 {
                return self.hold(a, t, "entry occupied".into());
            }
        }
        match config.mode {
            SimMode::Baseline => {
                let leader = self.entry_margin(a.entry, a.speed).map(|(id, _)| id);
                self.enter(a, t, 0.0, None, leader);
                Ok(true)
            }
            SimMode::Optimal => self.admit_planned(config, a, t),
        }
    }

    fn admit_planned(&mut self, config: &SimConfig, a: &Arrival, t: f64) -> Result<bool> {
        let safety = self.world.safety;
        let leader = self.last_plan.clone().filter(|(_, p)| t < p.end_time());
        if let Some((_, lp)) = &leader {
            if safety.margin(lp.kinematics(t).position, 0.0, a.speed) < 0.0 {
                return self.hold(a, t, "too close to predecessor".into());
            }
        }
        let own = a
            .vehicle
            .map(|i| &config.scenario.vehicles[i])
            .filter(|v| v.terminal_time_s.is_some() && (v.entry_time_s - t).abs() < 1e-9)
            .and_then(|v| v.schedule(&self.world.corridor).ok());
        let schedule = own.unwrap_or_else(|| self.scheduler.propose(t, a.speed));
        let mut problem = RoutePlanProblem::new(schedule.clone()).with_vehicle(self.world.bounds);
        if let Some((_, lp)) = &leader {
            problem = problem.with_leader(lp.as_ref() as &dyn LeaderMotion, safety);
        }
        let plan = match solve_route(&problem) {
            Ok(plan) => plan,
            Err(Error::Infeasible { reason, .. }) if leader.is_some() => {
                return self.hold(a, t, reason);
            }
            Err(Error::Infeasible { time, reason }) => {
                return Err(Error::infeasible(time, format!("vehicle {}: {reason}", a.id)));
            }
            Err(e) => return Err(e),
        };
        self.scheduler.book(&schedule);
        let plan = Arc::new(plan);
        let leader_id = leader.map(|(id, _)| id);
        self.enter(a, t, plan.at(t).u, Some(plan.clone()), leader_id);
        self.events.push(Event::Plan {
            t,
            vehicle: a.id,
            cost: plan.cost,
            terminal_time: schedule.terminal_time,
            constrained_segments: plan.constrained_segments().count(),
            bound_violations: plan.bound_violations(&self.world.bounds, 0.1).len(),
        });
        self.plans.push((a.id, plan.clone()));
        self.last_plan = Some((a.id, plan));
        Ok(true)
    }

    /// Desired speed of the comparison mode at a position.
    fn desired_speed(&self, v: &SimVehicle) -> f64 {
        let approach = self.world.approach;
        self.world
            .corridor
            .zones
            .iter()
            .filter(|z| v.position <= z.position && z.position - v.position <= approach)
            .filter_map(|z| z.desired_speed)
            .fold(v.cruise_speed, f64::min)
    }

    /// Whether a minor-entry vehicle may take the merge now.
    fn gap_accepted(&self, i: usize, merge: f64, critical_gap: f64) -> bool {
        let me = &self.queue[i];
        let a = self.world.idm.max_accel;
        let d = merge - me.position;
        let mine = (-me.speed + (me.speed * me.speed + 2.0 * a * d).sqrt()) / a;
        self.queue.iter().all(|o| {
            if o.entry == me.entry || o.position >= merge {
                return true;
            }
            let theirs = (merge - o.position) / o.speed.max(0.1);
            (theirs - mine).abs() >= critical_gap
        })
    }

    fn baseline_accelerations(&mut self, config: &SimConfig, t: f64) {
        let critical_gap = config.scenario.baseline.critical_gap_s;
        let accels: Vec<(f64, bool)> = (0..self.queue.len())
            .map(|i| {
                let v = &self.queue[i];
                let params = self.world.idm.with_desired_speed(self.desired_speed(v));
                let leader = self.physical_leader(i).map(|j| self.queue[j].state(t));
                let mut a = baseline_accel(&v.state(t), leader.as_ref(), &params, &self.world.bounds);
                let mut committed = v.committed;
                let minor = self.world.entries[v.entry].priority == Priority::Minor;
                if let (Some(m), true, false) = (self.world.merge, minor, committed) {
                    if v.position < m {
                        let can_stop = v.position + v.speed * v.speed / (2.0 * -self.world.bounds.u_min) < m;
                        if self.gap_accepted(i, m, critical_gap) || !can_stop {
                            let braking = v.speed * v.speed / (2.0 * params.comfort_decel);
                            committed = v.position + braking >= m - params.standstill || !can_stop;
                        } else {
                            let line = VehicleState {
                                position: m,
                                speed: 0.0,
                                time: t,
                            };
                            a = a.min(baseline_accel(&v.state(t), Some(&line), &params, &self.world.bounds));
                        }
                    }
                }
                (a, committed)
            })
            .collect();
        for (v, (a, c)) in self.queue.iter_mut().zip(accels) {
            v.accel = a;
            v.committed = c;
        }
    }

    fn observe(&mut self, t: f64) {
        for i in 0..self.queue.len() {
            let margin = self.physical_leader(i).map(|j| {
                let k = &self.queue[j];
                let me = &self.queue[i];
                self.world.safety.margin(k.position, me.position, me.speed)
            });
            let stride = self.world.stride;
            let tol = self.world.margin_tol;
            let v = &mut self.queue[i];
            self.samples.push(StepSample {
                vehicle: v.id,
                t,
                p: v.position,
                v: v.speed,
                u: v.accel,
                margin,
            });
            if let Some(m) = margin {
                v.min_margin = v.min_margin.min(m);
            }
            if v.steps.is_multiple_of(stride) {
                v.fuel.push(FuelSample { v: v.speed, u: v.accel });
                if let Some(m) = margin.filter(|&m| m < -tol) {
                    self.violations.push(ViolationEvent {
                        vehicle: v.id,
                        time: t,
                        margin: m,
                    });
                    self.events.push(Event::Violation {
                        t,
                        vehicle: v.id,
                        margin: m,
                    });
                }
            }
            v.steps += 1;
        }
    }

    /// Moves every vehicle to `t1`, logging zone crossings and exits.
    fn integrate(&mut self, mode: SimMode, t0: f64, t1: f64) {
        let length = self.world.corridor.length;
        let mut exited = Vec::new();
        for (i, v) in self.queue.iter_mut().enumerate() {
            let (p0, start) = (v.position, t0);
            let (p1, end, done) = match (mode, &v.plan) {
                (SimMode::Optimal, Some(plan)) => {
                    let te = plan.end_time();
                    if t1 >= te - 1e-9 {
                        (length, te, true)
                    } else {
                        let pt = plan.at(t1);
                        v.speed = pt.v;
                        v.accel = pt.u;
                        (pt.p, t1, false)
                    }
                }
                _ => {
                    let (p, s) = advance(v.position, v.speed, v.accel, t1 - t0);
                    v.speed = s;
                    if p >= length {
                        let f = if p > p0 { (length - p0) / (p - p0) } else { 1.0 };
                        (length, t0 + f * (t1 - t0), true)
                    } else {
                        (p, t1, false)
                    }
                }
            };
            while let Some(z) = self.world.corridor.zones.get(v.crossed) {
                if z.position > p1 && !done {
                    break;
                }
                let f = if p1 > p0 {
                    ((z.position - p0) / (p1 - p0)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let tz = start + f * (end - start);
                v.zone_times.push((z.id, tz));
                self.events.push(Event::Cross {
                    t: tz,
                    vehicle: v.id,
                    zone: z.id,
                });
                v.crossed += 1;
            }
            v.position = p1;
            if done {
                self.events.push(Event::Exit { t: end, vehicle: v.id });
                exited.push((i, end));
            }
        }
        for &(i, end) in exited.iter().rev() {
            let v = self.queue.remove(i);
            let record = self.record(v, Some(end));
            self.retired.push(record);
        }
    }

    fn record(&self, v: SimVehicle, exit_time: Option<f64>) -> VehicleRecord {
        let fuel = total_fuel(&v.fuel, self.world.sample_interval, &self.world.fuel).unwrap_or(0.0);
        VehicleRecord {
            id: v.id,
            entry: self.world.entries[v.entry].name.clone(),
            arrival_time: v.arrival_time,
            entry_time: v.entry_time,
            exit_time,
            zone_times: v.zone_times,
            fuel,
            min_margin: v.min_margin,
        }
    }
}

/// Advances the simulation by one step of `config.dt`.
///
/// Within a step, arrivals are released first, then at most one waiting
/// vehicle per entry is admitted, then every vehicle is sampled at the
/// current clock and moved to the next one.
pub fn step(state: &mut SimState, config: &SimConfig) -> Result<()> {
    let t = state.clock;
    if !(t < config.horizon) {
        return Err(Error::Domain(format!("clock {t} s has reached the horizon")));
    }
    while let Some(a) = state.arrivals.get(state.next_arrival).copied() {
        if a.time > t + 1e-9 {
            break;
        }
        state.events.push(Event::Arrive {
            t: a.time,
            vehicle: a.id,
            entry: state.world.entries[a.entry].name.clone(),
        });
        state.waiting[a.entry].push_back(a);
        state.next_arrival += 1;
    }
    for e in 0..state.waiting.len() {
        if let Some(a) = state.waiting[e].front().copied() {
            if state.admit(config, &a, t)? {
                state.waiting[e].pop_front();
            }
        }
    }
    if config.mode == SimMode::Baseline {
        state.baseline_accelerations(config, t);
    }
    state.observe(t);
    state.steps += 1;
    let t1 = state.steps as f64 * config.dt;
    state.integrate(config.mode, t, t1);
    state.clock = t1;
    Ok(())
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: RunReport,
    pub samples: Vec<StepSample>,
    pub events: Vec<Event>,
    pub plans: Vec<(u32, Arc<Trajectory>)>,
}

/// Steps until every vehicle has left or the horizon is reached.
///
/// Vehicles still inside at the horizon are reported without an exit time;
/// vehicles that never entered are left out of the report.
pub fn run(config: &SimConfig) -> Result<SimOutcome> {
    let mut state = SimState::new(config)?;
    while state.clock < config.horizon && !state.is_finished() {
        step(&mut state, config)?;
    }
    let remaining = std::mem::take(&mut state.queue);
    for v in remaining {
        let r = state.record(v, None);
        state.retired.push(r);
    }
    let mut vehicles = std::mem::take(&mut state.retired);
    vehicles.sort_by_key(|v| v.id);
    let report = RunReport::new(
        config.scenario.name.clone(),
        config.mode.as_str(),
        config.seed,
        vehicles,
        state.violations,
    );
    Ok(SimOutcome {
        report,
        samples: state.samples,
        events: state.events,
        plans: state.plans,
    })
}
