use std::path::PathBuf;

use cav_corridor::sim::{run, SimConfig};
use cav_corridor::{ScenarioSpec, SimMode};

fn corridor(count: usize) -> ScenarioSpec {
    let path: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "..",
        "..",
        "scenarios",
        "corridor_4zone.toml",
    ]
    .iter()
    .collect();
    let mut spec = ScenarioSpec::load(&path).unwrap();
    for e in &mut spec.entries {
        e.arrivals.count = Some(count);
    }
    spec
}

#[test]
fn optimal_run_keeps_margins() {
    let out = run(&SimConfig::new(corridor(10))).unwrap();
    assert_eq!(out.report.vehicles.len(), 20);
    assert_eq!(out.report.aggregates.violation_count, 0);
    let worst = out
        .samples
        .iter()
        .filter_map(|s| s.margin)
        .fold(f64::INFINITY, f64::min);
    assert!(worst >= -1e-3, "{worst}");
}

#[test]
fn every_vehicle_finishes_in_both_modes() {
    for mode in [SimMode::Optimal, SimMode::Baseline] {
        let out = run(&SimConfig::new(corridor(8)).with_mode(mode)).unwrap();
        let a = &out.report.aggregates;
        assert_eq!(a.completed, a.vehicles, "{mode:?}");
        assert!(out.report.vehicles.iter().all(|v| v.zone_times.len() == 4), "{mode:?}");
    }
}

#[test]
fn seeds_change_arrivals_but_not_structure() {
    let a = run(&SimConfig::new(corridor(6)).with_seed(1)).unwrap();
    let b = run(&SimConfig::new(corridor(6)).with_seed(2)).unwrap();
    assert_eq!(a.report.vehicles.len(), b.report.vehicles.len());
    assert_ne!(a.report.aggregates.total_fuel, b.report.aggregates.total_fuel);
}

#[test]
fn zone_crossings_are_ordered() {
    let out = run(&SimConfig::new(corridor(6))).unwrap();
    for v in &out.report.vehicles {
        let times: Vec<f64> = v.zone_times.iter().map(|z| z.1).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "vehicle {}: {times:?}", v.id);
        assert!(v.entry_time >= v.arrival_time);
    }
}
