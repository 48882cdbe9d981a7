use serde::Serialize;

/// One line of the simulation event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Arrive {
        t: f64,
        vehicle: u32,
        entry: String,
    },
    /// The vehicle could not enter yet; logged once per vehicle.
    Hold {
        t: f64,
        vehicle: u32,
        reason: String,
    },
    Admit {
        t: f64,
        vehicle: u32,
        speed: f64,
        leader: Option<u32>,
    },
    Plan {
        t: f64,
        vehicle: u32,
        cost: f64,
        terminal_time: f64,
        constrained_segments: usize,
        bound_violations: usize,
    },
    Cross {
        t: f64,
        vehicle: u32,
        zone: u32,
    },
    Violation {
        t: f64,
        vehicle: u32,
        margin: f64,
    },
    Exit {
        t: f64,
        vehicle: u32,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::Arrive { t, .. }
            | Event::Hold { t, .. }
            | Event::Admit { t, .. }
            | Event::Plan { t, .. }
            | Event::Cross { t, .. }
            | Event::Violation { t, .. }
            | Event::Exit { t, .. } => t,
        }
    }
}
