use pmpc::model::rk4_step;
use pmpc::scenario::{bundled, BUNDLED};
use pmpc::sim::{compute_metrics, run_scenario};

#[test]
fn shipped_scenarios_are_consistent_and_safe() {
    for (name, _) in BUNDLED {
        let scn = bundled(name).unwrap();
        let log = run_scenario(&scn).unwrap();
        assert_eq!(log.summary, compute_metrics(&log).unwrap(), "{name}");

        // Consecutive records are linked by one RK4 step under the logged input.
        let mut worst = 0.0f64;
        for w in log.records.windows(2) {
            for j in 0..scn.num_quads() {
                let next = rk4_step(&w[0].states[j], &w[0].inputs[j], log.control_period, &scn.params).unwrap();
                worst = worst.max((next.to_vector() - w[1].states[j].to_vector()).amax());
            }
        }
        assert!(worst < 1e-9, "{name}: residual {worst}");

        if scn.num_quads() == 2 {
            let min_d = log.summary.min_distance.unwrap();
            assert!(min_d >= scn.params.collision_tolerance, "{name}: min distance {min_d}");
            assert!(!log.summary.collision);
        }
        assert_eq!(log.summary.solver_failures, 0, "{name}");
        assert!(log.summary.lap_time.is_some(), "{name} did not finish");
    }
}

#[test]
fn repeated_runs_are_identical() {
    let scn = bundled("position_switch").unwrap();
    let a = run_scenario(&scn).unwrap();
    let b = run_scenario(&scn).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.summary, b.summary);
}
