//! Scenario files: TOML documents whose field names carry their units.
//!
//! ```toml
//! name = "case1"
//!
//! [corridor]
//! length_m = 300.0
//! zones = [{ id = 1, position_m = 300.0 }]
//!
//! [[vehicles]]
//! id = 1
//! entry_time_s = 0.0
//! entry_speed_mps = 12.0
//! terminal_time_s = 26.0
//! ```
//!
//! Every section other than `corridor` has defaults. Unknown keys are
//! rejected so that a misspelt unit suffix cannot silently fall back to a
//! default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FuelCoefficients;
use crate::model::{
    ConflictZone, CorridorSpec, LeaderProfile, SafetyParams, ScheduleAssignment, VehicleParams, Violation, Waypoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub corridor: CorridorSection,
    #[serde(default)]
    pub vehicle: VehicleSection,
    #[serde(default)]
    pub safety: SafetySection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub fuel: FuelSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    /// Traffic sources. Without any, a single major entry named `main` is implied.
    #[serde(default)]
    pub entries: Vec<EntrySpec>,
    /// Individually described vehicles, in addition to generated arrivals.
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSection {
    pub length_m: f64,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpec {
    pub id: u32,
    pub position_m: f64,
    pub desired_speed_mps: Option<f64>,
    /// Free-form label (merge, roundabout, ...); informational only.
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub u_min_mps2: f64,
    pub u_max_mps2: f64,
    pub v_min_mps: f64,
    pub v_max_mps: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let p = VehicleParams::default();
        Self {
            u_min_mps2: p.u_min,
            u_max_mps2: p.u_max,
            v_min_mps: p.v_min,
            v_max_mps: p.v_max,
        }
    }
}

impl From<VehicleSection> for VehicleParams {
    fn from(s: VehicleSection) -> Self {
        VehicleParams {
            u_min: s.u_min_mps2,
            u_max: s.u_max_mps2,
            v_min: s.v_min_mps,
            v_max: s.v_max_mps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetySection {
    pub xi: f64,
    pub gamma_m: f64,
    pub rho_s: f64,
}

impl Default for SafetySection {
    fn default() -> Self {
        let p = SafetyParams::default();
        Self {
            xi: p.xi,
            gamma_m: p.gamma,
            rho_s: p.rho,
        }
    }
}

impl From<SafetySection> for SafetyParams {
    fn from(s: SafetySection) -> Self {
        SafetyParams {
            xi: s.xi,
            gamma: s.gamma_m,
            rho: s.rho_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    /// Minimum spacing between two bookings of the same zone.
    pub headway_s: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self { headway_s: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Optimal,
    Baseline,
}

impl SimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Optimal => "optimal",
            SimMode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(SimMode::Optimal),
            "baseline" => Ok(SimMode::Baseline),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub mode: SimMode,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub seed: u64,
    /// Spacing of the fuel samples.
    pub sample_interval_s: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            mode: SimMode::Optimal,
            dt_s: 0.1,
            horizon_s: 600.0,
            seed: 0,
            sample_interval_s: 1.0,
        }
    }
}

/// Intelligent-driver parameters of the comparison mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub max_accel_mps2: f64,
    pub comfort_decel_mps2: f64,
    pub exponent: f64,
    pub time_headway_s: f64,
    /// Defaults to the safety standstill distance.
    pub standstill_m: Option<f64>,
    /// Smallest time gap a minor-entry vehicle accepts at the merge.
    pub critical_gap_s: f64,
    /// Distance ahead of a zone over which its desired speed applies.
    pub zone_approach_m: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            max_accel_mps2: 1.5,
            comfort_decel_mps2: 2.0,
            exponent: 4.0,
            time_headway_s: 1.2,
            standstill_m: None,
            critical_gap_s: 3.0,
            zone_approach_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuelSection {
    /// Where the coefficient values come from.
    pub source: String,
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for FuelSection {
    fn default() -> Self {
        let c = FuelCoefficients::default();
        Self {
            source: "Kamal et al., IEEE T-ITS 12(3), 2011".into(),
            q0: c.q0,
            q1: c.q1,
            q2: c.q2,
            q3: c.q3,
            r0: c.r0,
            r1: c.r1,
            r2: c.r2,
        }
    }
}

impl FuelSection {
    pub fn coefficients(&self) -> FuelCoefficients {
        FuelCoefficients {
            q0: self.q0,
            q1: self.q1,
            q2: self.q2,
            q3: self.q3,
            r0: self.r0,
            r1: self.r1,
            r2: self.r2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSection {
    pub oracle_steps: usize,
    /// Largest accepted relative gap between analytical and oracle cost.
    pub oracle_rel: f64,
    /// Margins below `-margin_m` count as violations.
    pub margin_m: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            oracle_steps: 1000,
            oracle_rel: 1e-2,
            margin_m: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    #[default]
    Major,
    /// Yields to other traffic at the first zone in the comparison mode.
    Minor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub name: String,
    #[serde(default)]
    pub priority: Priority,
    pub speed_mps: f64,
    /// Entry speeds are drawn uniformly from `speed ± jitter`.
    #[serde(default)]
    pub speed_jitter_mps: f64,
    #[serde(default)]
    pub arrivals: ArrivalSpec,
}

/// Either a fixed list of arrival times or a Poisson stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    pub times_s: Option<Vec<f64>>,
    pub rate_vph: Option<f64>,
    /// Cap on the number of Poisson arrivals.
    pub count: Option<usize>,
    #[serde(default)]
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u32,
    /// Entry name; the first entry when omitted.
    pub entry: Option<String>,
    pub entry_time_s: f64,
    pub entry_speed_mps: f64,
    /// Needed to plan the vehicle on its own; simulations schedule it instead.
    pub terminal_time_s: Option<f64>,
    #[serde(default)]
    pub waypoints: Vec<WaypointSpec>,
    pub leader: Option<LeaderSpec>,
    pub safety: Option<SafetySection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSpec {
    pub zone: u32,
    pub time_s: f64,
    /// Overrides the zone's desired speed.
    pub speed_mps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSpec {
    #[serde(default)]
    pub start_time_s: f64,
    pub start_position_m: f64,
    pub start_speed_mps: f64,
    pub exit_time_s: f64,
    #[serde(default)]
    pub segments: Vec<LeaderSegmentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSegmentSpec {
    pub duration_s: f64,
    pub accel_mps2: f64,
}

impl LeaderSpec {
    pub fn profile(&self) -> LeaderProfile {
        let pieces: Vec<(f64, f64)> = self.segments.iter().map(|s| (s.duration_s, s.accel_mps2)).collect();
        let pieces = if pieces.is_empty() {
            vec![(f64::INFINITY, 0.0)]
        } else {
            pieces
        };
        LeaderProfile::from_accelerations(
            self.start_time_s,
            self.start_position_m,
            self.start_speed_mps,
            &pieces,
            self.exit_time_s,
        )
    }
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let spec = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let violations = validate_scenario(&spec);
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidScenario(violations))
        }
    }

    pub fn corridor(&self) -> CorridorSpec {
        CorridorSpec {
            length: self.corridor.length_m,
            zones: self
                .corridor
                .zones
                .iter()
                .map(|z| ConflictZone {
                    id: z.id,
                    position: z.position_m,
                    desired_speed: z.desired_speed_mps,
                })
                .collect(),
            entry_position: 0.0,
        }
    }

    pub fn vehicle_params(&self) -> VehicleParams {
        self.vehicle.into()
    }

    pub fn safety_params(&self) -> SafetyParams {
        self.safety.into()
    }

    /// Safety constants of one vehicle, its own override first.
    pub fn safety_for(&self, vehicle: &VehicleSpec) -> SafetyParams {
        vehicle.safety.unwrap_or(self.safety).into()
    }

    /// Configured entries, or the implied single `main` entry.
    pub fn entries(&self) -> Vec<EntrySpec> {
        if self.entries.is_empty() {
            vec![EntrySpec {
                name: "main".into(),
                priority: Priority::Major,
                speed_mps: self.vehicles.first().map_or(10.0, |v| v.entry_speed_mps),
                speed_jitter_mps: 0.0,
                arrivals: ArrivalSpec::default(),
            }]
        } else {
            self.entries.clone()
        }
    }

    pub fn fuel_coefficients(&self) -> FuelCoefficients {
        self.fuel.coefficients()
    }
}

impl VehicleSpec {
    /// The vehicle's own crossing schedule, with waypoint positions and
    /// default speeds taken from the corridor zones.
    pub fn schedule(&self, corridor: &CorridorSpec) -> Result<ScheduleAssignment> {
        let terminal_time = self
            .terminal_time_s
            .ok_or_else(|| Error::Contract(format!("vehicle {} has no terminal_time_s", self.id)))?;
        let mut waypoints = Vec::with_capacity(self.waypoints.len());
        for w in &self.waypoints {
            let zone = corridor.zone(w.zone).ok_or_else(|| {
                Error::InvalidScenario(vec![Violation::for_vehicle(
                    self.id,
                    Violation::WaypointOffZone { zone: w.zone },
                )])
            })?;
            waypoints.push(Waypoint {
                time: w.time_s,
                position: zone.position,
                speed: w.speed_mps.or(zone.desired_speed),
            });
        }
        Ok(
            ScheduleAssignment::direct(self.entry_time_s, self.entry_speed_mps, terminal_time, corridor.length)
                .with_waypoints(waypoints),
        )
    }
}

fn positive(out: &mut Vec<Violation>, field: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        out.push(Violation::Field(field.into(), format!("{x} is not positive")));
    }
}

/// Every broken invariant of a scenario; empty when it is usable.
pub fn validate_scenario(spec: &ScenarioSpec) -> Vec<Violation> {
    let corridor = spec.corridor();
    let mut out = corridor.validate();
    out.extend(spec.vehicle_params().validate());
    out.extend(spec.safety_params().validate());

    positive(&mut out, "scheduler.headway_s", spec.scheduler.headway_s);
    positive(&mut out, "simulation.dt_s", spec.simulation.dt_s);
    positive(&mut out, "simulation.horizon_s", spec.simulation.horizon_s);
    positive(
        &mut out,
        "simulation.sample_interval_s",
        spec.simulation.sample_interval_s,
    );
    let b = &spec.baseline;
    positive(&mut out, "baseline.max_accel_mps2", b.max_accel_mps2);
    positive(&mut out, "baseline.comfort_decel_mps2", b.comfort_decel_mps2);
    positive(&mut out, "baseline.exponent", b.exponent);
    positive(&mut out, "baseline.time_headway_s", b.time_headway_s);
    if !(b.zone_approach_m >= 0.0) {
        out.push(Violation::Field("baseline.zone_approach_m".into(), "negative".into()));
    }
    if !(b.critical_gap_s >= 0.0) {
        out.push(Violation::Field("baseline.critical_gap_s".into(), "negative".into()));
    }
    if let Some(s0) = b.standstill_m {
        if !(s0 >= 0.0) {
            out.push(Violation::Field("baseline.standstill_m".into(), "negative".into()));
        }
    }
    if !spec.fuel_coefficients().is_finite() {
        out.push(Violation::Field("fuel".into(), "coefficients must be finite".into()));
    }
    if spec.tolerances.oracle_steps < 10 {
        out.push(Violation::Field(
            "tolerances.oracle_steps".into(),
            "fewer than 10 steps".into(),
        ));
    }
    positive(&mut out, "tolerances.oracle_rel", spec.tolerances.oracle_rel);
    if !(spec.tolerances.margin_m >= 0.0) {
        out.push(Violation::Field("tolerances.margin_m".into(), "negative".into()));
    }

    for (i, e) in spec.entries.iter().enumerate() {
        let field = |f: &str| format!("entries[{i}].{f}");
        if spec.entries[..i].iter().any(|o| o.name == e.name) {
            out.push(Violation::Field(field("name"), format!("{:?} used twice", e.name)));
        }
        positive(&mut out, &field("speed_mps"), e.speed_mps);
        if !(e.speed_jitter_mps >= 0.0 && e.speed_jitter_mps < e.speed_mps) {
            out.push(Violation::Field(
                field("speed_jitter_mps"),
                "must lie in [0, speed_mps)".into(),
            ));
        }
        let a = &e.arrivals;
        match (&a.times_s, a.rate_vph) {
            (Some(_), Some(_)) => out.push(Violation::Field(
                field("arrivals"),
                "give either times_s or rate_vph, not both".into(),
            )),
            (Some(times), None) => {
                if times.windows(2).any(|w| !(w[1] >= w[0])) || times.iter().any(|t| !t.is_finite()) {
                    out.push(Violation::Field(field("arrivals.times_s"), "must be sorted".into()));
                }
            }
            (None, Some(rate)) => positive(&mut out, &field("arrivals.rate_vph"), rate),
            (None, None) => {}
        }
    }

    let entries = spec.entries();
    for (i, v) in spec.vehicles.iter().enumerate() {
        let mut mine = Vec::new();
        if spec.vehicles[..i].iter().any(|o| o.id == v.id) {
            mine.push(Violation::Field("id".into(), "used twice".into()));
        }
        if let Some(name) = &v.entry {
            if !entries.iter().any(|e| &e.name == name) {
                mine.push(Violation::Field("entry".into(), format!("unknown entry {name:?}")));
            }
        }
        if let Some(s) = v.safety {
            mine.extend(SafetyParams::from(s).validate());
        }
        for w in &v.waypoints {
            if corridor.zone(w.zone).is_none() {
                mine.push(Violation::WaypointOffZone { zone: w.zone });
            }
        }
        if v.terminal_time_s.is_some() && mine.is_empty() {
            if let Ok(s) = v.schedule(&corridor) {
                mine.extend(s.validate());
            }
        } else if !(v.entry_speed_mps >= 0.0) {
            mine.push(Violation::Schedule(format!(
                "negative entry speed {}",
                v.entry_speed_mps
            )));
        }
        if let Some(l) = &v.leader {
            mine.extend(l.profile().validate());
        }
        out.extend(mine.into_iter().map(|m| Violation::for_vehicle(v.id, m)));
    }
    out
}
