//! First-come-first-served crossing times.

use crate::model::{CorridorSpec, ScheduleAssignment, Waypoint};

/// Lowest average speed used to estimate travel times, m/s.
const MIN_TRAVEL_SPEED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FifoSchedulerParams {
    /// Minimum spacing between two crossings of the same zone, s.
    pub headway: f64,
    /// `(zone id, desired crossing speed)` for zones that impose one.
    pub desired_speeds: Vec<(u32, f64)>,
}

impl FifoSchedulerParams {
    pub fn from_corridor(corridor: &CorridorSpec, headway: f64) -> Self {
        Self {
            headway,
            desired_speeds: corridor
                .zones
                .iter()
                .filter_map(|z| z.desired_speed.map(|v| (z.id, v)))
                .collect(),
        }
    }

    fn desired_speed(&self, zone: u32) -> Option<f64> {
        self.desired_speeds.iter().find(|(id, _)| *id == zone).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Knot {
    zone: Option<u32>,
    position: f64,
    speed: Option<f64>,
}

/// Zone bookings shared by every vehicle of a run.
#[derive(Debug, Clone)]
pub struct FifoScheduler {
    knots: Vec<Knot>,
    bookings: Vec<Option<f64>>,
    headway: f64,
}

impl FifoScheduler {
    /// Every zone short of the corridor end becomes a waypoint; the corridor
    /// end is the terminal knot, whether or not a zone sits there.
    pub fn new(corridor: &CorridorSpec, params: &FifoSchedulerParams) -> Self {
        let mut knots: Vec<Knot> = corridor
            .zones
            .iter()
            .filter(|z| z.position < corridor.length)
            .map(|z| Knot {
                zone: Some(z.id),
                position: z.position,
                speed: params.desired_speed(z.id),
            })
            .collect();
        knots.push(Knot {
            zone: corridor.zone_at(corridor.length).map(|z| z.id),
            position: corridor.length,
            speed: None,
        });
        Self {
            bookings: vec![None; knots.len()],
            knots,
            headway: params.headway,
        }
    }

    pub fn headway(&self) -> f64 {
        self.headway
    }

    /// Latest booked crossing of a zone.
    pub fn last_booking(&self, zone: u32) -> Option<f64> {
        self.knots
            .iter()
            .position(|k| k.zone == Some(zone))
            .and_then(|i| self.bookings[i])
    }

    /// The schedule a vehicle entering now would receive, without booking it.
    pub fn propose(&self, entry_time: f64, entry_speed: f64) -> ScheduleAssignment {
        let (mut t, mut p, mut v) = (entry_time, 0.0, entry_speed);
        let mut times = Vec::with_capacity(self.knots.len());
        for (k, booked) in self.knots.iter().zip(&self.bookings) {
            let v_end = k.speed.unwrap_or(v);
            let earliest = t + (k.position - p) / (0.5 * (v + v_end)).max(MIN_TRAVEL_SPEED);
            t = booked.map_or(earliest, |b| earliest.max(b + self.headway));
            times.push(t);
            p = k.position;
            v = v_end;
        }
        let n = self.knots.len() - 1;
        let waypoints = self.knots[..n]
            .iter()
            .zip(&times)
            .map(|(k, &t)| Waypoint {
                time: t,
                position: k.position,
                speed: k.speed,
            })
            .collect();
        ScheduleAssignment::direct(entry_time, entry_speed, times[n], self.knots[n].position).with_waypoints(waypoints)
    }

    /// Records the crossings of an accepted schedule.
    pub fn book(&mut self, schedule: &ScheduleAssignment) {
        for (i, (t, p)) in schedule.knots().enumerate() {
            if let Some(slot) = self.knots.iter().position(|k| (k.position - p).abs() < 1e-9) {
                self.bookings[slot] = Some(self.bookings[slot].map_or(t, |b: f64| b.max(t)));
            } else {
                log::debug!("knot {i} at {p} m matches no corridor zone");
            }
        }
    }
}

/// Proposes and books the schedule of a vehicle entering at `entry_time`.
pub fn assign_schedule(scheduler: &mut FifoScheduler, entry_time: f64, entry_speed: f64) -> ScheduleAssignment {
    let s = scheduler.propose(entry_time, entry_speed);
    scheduler.book(&s);
    s
}
