//! Fuel, travel time and safety statistics of simulation runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Version of the serialized [`RunReport`] and [`Comparison`] layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Polynomial fuel-rate metamodel `f(v, u) = q(v) + max(u, 0)·r(v)`.
///
/// Rates are in mL/s for speeds in m/s and accelerations in m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelCoefficients {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for FuelCoefficients {
    /// Light-duty passenger car values from Kamal et al., "Ecological vehicle
    /// control on roads with up-down slopes" (IEEE T-ITS, 2011).
    fn default() -> Self {
        Self {
            q0: 0.1569,
            q1: 2.450e-2,
            q2: -7.415e-4,
            q3: 5.975e-5,
            r0: 0.07224,
            r1: 9.681e-2,
            r2: 1.075e-3,
        }
    }
}

impl FuelCoefficients {
    pub fn zero() -> Self {
        Self {
            q0: 0.0,
            q1: 0.0,
            q2: 0.0,
            q3: 0.0,
            r0: 0.0,
            r1: 0.0,
            r2: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.q0, self.q1, self.q2, self.q3, self.r0, self.r1, self.r2]
            .iter()
            .all(|c| c.is_finite())
    }
}

/// Instantaneous fuel rate. Braking earns no credit: the acceleration term
/// only counts for `u > 0`.
pub fn fuel_rate(v: f64, u: f64, c: &FuelCoefficients) -> f64 {
    let cruise = c.q0 + v * (c.q1 + v * (c.q2 + v * c.q3));
    let accel = u.max(0.0) * (c.r0 + v * (c.r1 + v * c.r2));
    (cruise + accel).max(0.0)
}

/// Speed and control sampled at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelSample {
    pub v: f64,
    pub u: f64,
}

/// Left-rectangle integral of the fuel rate over uniformly spaced samples.
pub fn total_fuel(samples: &[FuelSample], interval: f64, c: &FuelCoefficients) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples to integrate".into()));
    }
    if !(interval > 0.0) {
        return Err(Error::Domain(format!("sampling interval {interval} s is not positive")));
    }
    Ok(samples.iter().map(|s| fuel_rate(s.v, s.u, c)).sum::<f64>() * interval)
}

/// Samples `t0, t0 + h, …` strictly before the end of a trajectory.
pub fn sample_trajectory(traj: &Trajectory, interval: f64) -> Vec<FuelSample> {
    let (start, end) = (traj.start_time(), traj.end_time());
    let n = ((end - start) / interval - 1e-9).ceil().max(0.0) as usize;
    (0..n)
        .map(|k| {
            let pt = traj.at(start + k as f64 * interval);
            FuelSample { v: pt.v, u: pt.u }
        })
        .collect()
}

/// Per-vehicle outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: u32,
    pub entry: String,
    /// Demand time at the entry, s.
    pub arrival_time: f64,
    /// Time the vehicle entered the control zone, s.
    pub entry_time: f64,
    /// Time it left the corridor; `None` if still inside at the horizon.
    pub exit_time: Option<f64>,
    /// Crossing time of every zone passed, `(zone id, s)`.
    pub zone_times: Vec<(u32, f64)>,
    /// mL
    pub fuel: f64,
    pub min_margin: f64,
}

impl VehicleRecord {
    /// Arrival to exit, queueing at the entry included.
    pub fn travel_time(&self) -> Option<f64> {
        self.exit_time.map(|t| t - self.arrival_time)
    }
}

/// One sampled margin below the violation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub vehicle: u32,
    pub time: f64,
    /// Margin at the sample, m (negative).
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub from_zone: Option<u32>,
    pub to_zone: u32,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub vehicles: usize,
    pub completed: usize,
    pub total_fuel: f64,
    pub mean_fuel: f64,
    pub mean_travel_time: f64,
    pub travel_time_variance: f64,
    pub violation_count: usize,
    pub min_margin: f64,
    pub segments: Vec<SegmentStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub vehicles: Vec<VehicleRecord>,
    pub violations: Vec<ViolationEvent>,
    pub aggregates: Aggregates,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

impl RunReport {
    pub fn new(
        scenario: impl Into<String>,
        mode: impl Into<String>,
        seed: u64,
        vehicles: Vec<VehicleRecord>,
        violations: Vec<ViolationEvent>,
    ) -> Self {
        let aggregates = Self::aggregate(&vehicles, &violations);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.into(),
            mode: mode.into(),
            seed,
            vehicles,
            violations,
            aggregates,
        }
    }

    /// Aggregates recomputed from the per-vehicle entries.
    pub fn aggregate(vehicles: &[VehicleRecord], violations: &[ViolationEvent]) -> Aggregates {
        let travel: Vec<f64> = vehicles.iter().filter_map(VehicleRecord::travel_time).collect();
        let (mean_travel_time, travel_time_variance) = mean_var(&travel);
        let total_fuel: f64 = vehicles.iter().map(|v| v.fuel).sum();

        let mut keys: Vec<(Option<u32>, u32)> = Vec::new();
        let mut samples: Vec<Vec<f64>> = Vec::new();
        for v in vehicles {
            let mut prev: (Option<u32>, f64) = (None, v.entry_time);
            for &(zone, t) in &v.zone_times {
                let key = (prev.0, zone);
                let idx = match keys.iter().position(|k| *k == key) {
                    Some(i) => i,
                    None => {
                        keys.push(key);
                        samples.push(Vec::new());
                        keys.len() - 1
                    }
                };
                samples[idx].push(t - prev.1);
                prev = (Some(zone), t);
            }
        }
        let segments = keys
            .into_iter()
            .zip(samples)
            .map(|((from_zone, to_zone), xs)| {
                let (mean, var) = mean_var(&xs);
                SegmentStats {
                    from_zone,
                    to_zone,
                    count: xs.len(),
                    mean,
                    std_dev: var.sqrt(),
                }
            })
            .collect();

        Aggregates {
            vehicles: vehicles.len(),
            completed: travel.len(),
            total_fuel,
            mean_fuel: if vehicles.is_empty() {
                0.0
            } else {
                total_fuel / vehicles.len() as f64
            },
            mean_travel_time,
            travel_time_variance,
            violation_count: violations.len(),
            min_margin: vehicles.iter().map(|v| v.min_margin).fold(f64::INFINITY, f64::min),
            segments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDelta {
    pub from_zone: Option<u32>,
    pub to_zone: u32,
    pub mean_a: f64,
    pub mean_b: f64,
    pub change_pct: f64,
}

/// How run `b` fares against run `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub scenario: String,
    pub mode_a: String,
    pub mode_b: String,
    pub total_fuel_a: f64,
    pub total_fuel_b: f64,
    /// Fuel saved by `b`, percent of `a`.
    pub fuel_savings_pct: f64,
    pub mean_travel_time_a: f64,
    pub mean_travel_time_b: f64,
    pub travel_time_change_pct: f64,
    pub violations_a: usize,
    pub violations_b: usize,
    pub violation_change_pct: f64,
    pub segments: Vec<SegmentDelta>,
}

fn change_pct(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a == 0.0 {
        f64::INFINITY.copysign(b)
    } else {
        (b - a) / a * 100.0
    }
}

pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    if a.scenario != b.scenario || a.vehicles.is_empty() != b.vehicles.is_empty() {
        return Err(Error::ScenarioMismatch {
            left: format!("{} ({} vehicles)", a.scenario, a.vehicles.len()),
            right: format!("{} ({} vehicles)", b.scenario, b.vehicles.len()),
        });
    }
    let (fa, fb) = (a.aggregates.total_fuel, b.aggregates.total_fuel);
    let segments = a
        .aggregates
        .segments
        .iter()
        .filter_map(|sa| {
            let sb = b
                .aggregates
                .segments
                .iter()
                .find(|s| s.from_zone == sa.from_zone && s.to_zone == sa.to_zone)?;
            Some(SegmentDelta {
                from_zone: sa.from_zone,
                to_zone: sa.to_zone,
                mean_a: sa.mean,
                mean_b: sb.mean,
                change_pct: change_pct(sa.mean, sb.mean),
            })
        })
        .collect();
    Ok(Comparison {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: a.scenario.clone(),
        mode_a: a.mode.clone(),
        mode_b: b.mode.clone(),
        total_fuel_a: fa,
        total_fuel_b: fb,
        fuel_savings_pct: -change_pct(fa, fb),
        mean_travel_time_a: a.aggregates.mean_travel_time,
        mean_travel_time_b: b.aggregates.mean_travel_time,
        travel_time_change_pct: change_pct(a.aggregates.mean_travel_time, b.aggregates.mean_travel_time),
        violations_a: a.aggregates.violation_count,
        violations_b: b.aggregates.violation_count,
        violation_change_pct: change_pct(a.aggregates.violation_count as f64, b.aggregates.violation_count as f64),
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arc::PolynomialArc;

    fn record(id: u32, fuel: f64, exit: f64) -> VehicleRecord {
        VehicleRecord {
            id,
            entry: "main".into(),
            arrival_time: 0.0,
            entry_time: 0.0,
            exit_time: Some(exit),
            zone_times: vec![(1, exit / 2.0), (2, exit)],
            fuel,
            min_margin: 3.0,
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(fuel_rate(12.0, 1.0, &FuelCoefficients::zero()), 0.0);
        let c = FuelCoefficients::default();
        assert_eq!(fuel_rate(0.0, 0.0, &c), c.q0);
        assert_eq!(fuel_rate(10.0, -2.0, &c), fuel_rate(10.0, 0.0, &c));
        assert!(fuel_rate(10.0, 1.0, &c) > fuel_rate(10.0, 0.0, &c));
    }

    #[test]
    fn rectangle_rule() {
        let c = FuelCoefficients::default();
        let cruise = vec![FuelSample { v: 10.0, u: 0.0 }; 10];
        let total = total_fuel(&cruise, 1.0, &c).unwrap();
        assert!((total - 10.0 * fuel_rate(10.0, 0.0, &c)).abs() < 1e-12);
        assert!(total_fuel(&[], 1.0, &c).is_err());
    }

    #[test]
    fn sampling_stops_before_exit() {
        let t = Trajectory::from_arcs(vec![PolynomialArc::cruise(0.0, 10.0, 0.0, 10.0)]);
        assert_eq!(sample_trajectory(&t, 1.0).len(), 10);
    }

    #[test]
    fn comparison_arithmetic() {
        let a = RunReport::new("s", "baseline", 1, vec![record(1, 100.0, 30.0)], vec![]);
        let same = compare_runs(&a, &a).unwrap();
        assert_eq!(same.fuel_savings_pct, 0.0);
        assert_eq!(same.travel_time_change_pct, 0.0);
        let b = RunReport::new("s", "optimal", 1, vec![record(1, 59.0, 30.0)], vec![]);
        let cmp = compare_runs(&a, &b).unwrap();
        assert!((cmp.fuel_savings_pct - 41.0).abs() < 1e-9);
        let empty = RunReport::new("s", "optimal", 1, vec![], vec![]);
        assert!(matches!(compare_runs(&a, &empty), Err(Error::ScenarioMismatch { .. })));
        let other = RunReport::new("t", "optimal", 1, vec![record(1, 59.0, 30.0)], vec![]);
        assert!(compare_runs(&a, &other).is_err());
    }

    #[test]
    fn segments_are_grouped() {
        let r = RunReport::new("s", "m", 0, vec![record(1, 1.0, 20.0), record(2, 1.0, 30.0)], vec![]);
        let seg = &r.aggregates.segments;
        assert_eq!(seg.len(), 2);
        assert_eq!(seg[0].count, 2);
        assert!((seg[0].mean - 12.5).abs() < 1e-12);
        assert!((seg[0].std_dev - 2.5).abs() < 1e-12);
    }
}
