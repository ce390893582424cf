mod common;

use tau_core::analytics::crossing_counts;
use tau_core::sim::compare::{compare_tables, crossing_mismatches, Tolerances};

#[test]
fn twenty_vehicle_scenario_matches_truth() {
    let r = common::run(&common::twenty_vehicles());
    let cmp = compare_tables(&r.records, &r.sim.truth.records, &Tolerances::default());
    assert_eq!(r.stats.tracks_confirmed, 20, "{:?}", r.stats);
    assert_eq!(cmp.identity_switches, 0);
    assert!(cmp.is_clean(), "{cmp:#?}");
    assert!(cmp.max_velocity_delta < 1e-9);
}

#[test]
fn crossroad_scenario_matches_truth() {
    let r = common::run(&common::crossroad());
    let truth = &r.sim.truth.analytics;
    assert_eq!(crossing_counts(&truth.crossings), (27, 2));
    assert_eq!(truth.transitions.percent_between(3, 2), Some(17));
    let cmp = compare_tables(&r.records, &r.sim.truth.records, &Tolerances::default());
    assert!(
        cmp.is_clean(),
        "{:?}",
        (
            cmp.identity_switches,
            cmp.missing_rows.len(),
            cmp.extra_rows.len(),
            cmp.mismatched_rows.len()
        )
    );
    assert_eq!(crossing_counts(&r.analytics.crossings), (27, 2));
    assert_eq!(
        crossing_mismatches(&r.analytics.crossings, &truth.crossings, &cmp.track_identity),
        0
    );
    assert_eq!(r.analytics.transitions, truth.transitions);
}
