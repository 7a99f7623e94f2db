mod common;

use banach_sd::geometry::{DataSpace, Primal};
use banach_sd::multilevel::{run_direct, run_multilevel};

#[test]
fn decay_schedule_succeeds_level_by_level() {
    let (space, schedule, y) = common::decay_schedule(8, &[2, 4, 6, 8], 1e-4, 1e-9, 4.01e-4);
    let report = run_multilevel(&space, DataSpace::default(), &schedule, &y, &Primal::zeros(8), 1_000_000).unwrap();
    assert!(report.succeeded());
    assert_eq!(report.levels.len(), 4);
    for (o, l) in report.levels.iter().zip(&schedule.levels) {
        assert_eq!(o.start_in_radius, Some(true));
        assert!(o.final_residual <= 4.0 * l.eta);
        assert_eq!(o.report.checks.total_violations(), 0, "level {}: {:?}", o.n, o.report.checks);
    }
}

#[test]
fn handoff_keeps_the_stopped_iterate() {
    let (space, schedule, y) = common::decay_schedule(6, &[2, 4, 6], 1e-4, 1e-9, 4.01e-4);
    let report = run_multilevel(&space, DataSpace::default(), &schedule, &y, &Primal::zeros(6), 1_000_000).unwrap();
    for w in report.levels.windows(2) {
        assert_eq!(w[0].report.final_x, w[1].report.iterations[0].x);
        assert!(!w[1].report.projected_start);
    }
}

/// A rough start that is inside the coarsest radius but outside the finest:
/// the multi-level run is covered level by level, the direct run is not.
#[test]
fn rough_start_needs_the_coarse_levels() {
    let (space, schedule, y) = common::decay_schedule(8, &[2, 4, 6, 8], 1e-4, 1e-9, 4.01e-4);
    let mut x00 = vec![0.0; 8];
    x00[0] = 1000.0;
    x00[1] = -1000.0;
    let x00 = Primal::new(x00).unwrap();
    let ml = run_multilevel(&space, DataSpace::default(), &schedule, &y, &x00, 1_000_000).unwrap();
    assert!(ml.succeeded());
    assert!(ml.levels.iter().all(|l| l.start_in_radius == Some(true)));

    let direct = run_direct(&space, DataSpace::default(), &schedule, &y, &x00, 1_000).unwrap();
    assert_eq!(direct.start_in_radius, Some(false));
    assert!(direct.report.checks.radius_violations > 0);
}
