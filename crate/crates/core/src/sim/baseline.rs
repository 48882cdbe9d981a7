//! Intelligent-driver car following for the comparison mode.

use crate::model::{VehicleParams, VehicleState};
use crate::scenario::BaselineSection;

/// Gaps are floored here so that a collided pair still brakes hard instead of
/// dividing by zero.
const MIN_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
    pub time_headway: f64,
    pub standstill: f64,
}

impl IdmParams {
    pub fn from_section(b: &BaselineSection, standstill: f64, desired_speed: f64) -> Self {
        Self {
            desired_speed,
            max_accel: b.max_accel_mps2,
            comfort_decel: b.comfort_decel_mps2,
            exponent: b.exponent,
            time_headway: b.time_headway_s,
            standstill: b.standstill_m.unwrap_or(standstill),
        }
    }

    pub fn with_desired_speed(self, desired_speed: f64) -> Self {
        Self { desired_speed, ..self }
    }
}

/// IDM acceleration clamped to the vehicle's control bounds.
pub fn baseline_accel(
    state: &VehicleState,
    leader: Option<&VehicleState>,
    params: &IdmParams,
    bounds: &VehicleParams,
) -> f64 {
    let v = state.speed.max(0.0);
    let free = if params.desired_speed > 0.0 {
        (v / params.desired_speed).powf(params.exponent)
    } else {
        f64::INFINITY
    };
    let interaction = leader.map_or(0.0, |k| {
        let gap = (k.position - state.position).max(MIN_GAP);
        let dv = v - k.speed;
        let dynamic = v * params.time_headway + v * dv / (2.0 * (params.max_accel * params.comfort_decel).sqrt());
        let desired_gap = params.standstill + dynamic.max(0.0);
        (desired_gap / gap).powi(2)
    });
    let a = params.max_accel * (1.0 - free - interaction);
    a.clamp(bounds.u_min, bounds.u_max)
}

/// Ballistic update over one step; a vehicle that would reverse stops instead.
pub fn advance(position: f64, speed: f64, accel: f64, dt: f64) -> (f64, f64) {
    let v = speed + accel * dt;
    if v < 0.0 {
        let stop = if accel < 0.0 {
            -speed * speed / (2.0 * accel)
        } else {
            0.0
        };
        (position + stop, 0.0)
    } else {
        (position + speed * dt + 0.5 * accel * dt * dt, v)
    }
}
