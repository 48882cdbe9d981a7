//! Demand at the corridor entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::scenario::ScenarioSpec;

/// A vehicle showing up at an entry. Ids follow arrival order from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub id: u32,
    /// Index into [`ScenarioSpec::entries`].
    pub entry: usize,
    pub time: f64,
    pub speed: f64,
    /// Index into [`ScenarioSpec::vehicles`] for individually described vehicles.
    pub vehicle: Option<usize>,
}

/// Every arrival before `horizon`, sorted by time with ties broken by entry.
pub fn generate_arrivals(spec: &ScenarioSpec, seed: u64, horizon: f64) -> Vec<Arrival> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = spec.entries();
    let mut out = Vec::new();
    for (e, entry) in entries.iter().enumerate() {
        let speed = |rng: &mut ChaCha8Rng| {
            if entry.speed_jitter_mps > 0.0 {
                entry.speed_mps + rng.random_range(-entry.speed_jitter_mps..=entry.speed_jitter_mps)
            } else {
                entry.speed_mps
            }
        };
        let a = &entry.arrivals;
        if let Some(times) = &a.times_s {
            for &t in times.iter().filter(|&&t| t < horizon) {
                let v = speed(&mut rng);
                out.push((t, e, v, None));
            }
        } else if let Some(rate) = a.rate_vph {
            let exp = Exp::new(rate / 3600.0).expect("arrival rate validated positive");
            let cap = a.count.unwrap_or(usize::MAX);
            let mut t = a.start_s;
            let mut n = 0;
            while n < cap {
                t += exp.sample(&mut rng);
                if t >= horizon {
                    break;
                }
                let v = speed(&mut rng);
                out.push((t, e, v, None));
                n += 1;
            }
        }
    }
    for (i, v) in spec.vehicles.iter().enumerate() {
        let e = v
            .entry
            .as_ref()
            .and_then(|name| entries.iter().position(|x| &x.name == name))
            .unwrap_or(0);
        if v.entry_time_s < horizon {
            out.push((v.entry_time_s, e, v.entry_speed_mps, Some(i)));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.into_iter()
        .enumerate()
        .map(|(i, (time, entry, speed, vehicle))| Arrival {
            id: i as u32 + 1,
            entry,
            time,
            speed,
            vehicle,
        })
        .collect()
}
