mod support;

use crf_core::cg::CgOptions;
use crf_core::checkpoint::{self, CheckpointError};
use crf_core::flow::{crf_rhs, run_flow, FlowConfig, FlowError, FlowStatus, FlowTrajectory};
use crf_core::geometry::Geometry;
use crf_core::pressure::solve_pressure;
use crf_core::tensor::MetricField;

fn dt(res: usize) -> f64 {
    let h = support::L / res as f64;
    0.2 * h * h / 12.0
}

fn sup_diff(a: &MetricField<f64>, b: &MetricField<f64>) -> f64 {
    a.tensor()
        .data
        .iter()
        .zip(&b.tensor().data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn step_halving_converges_at_fourth_order() {
    let g0 = support::normalized(8);
    let t = dt(8);
    let run = |steps: usize| {
        let traj = run_flow(&g0, t, t / steps as f64, &support::monitor_only()).unwrap();
        traj.states.last().unwrap().g.clone()
    };
    let (g1, g2, g4) = (run(1), run(2), run(4));
    let (e1, e2) = (sup_diff(&g1, &g4), sup_diff(&g2, &g4));
    // With a dt/4 reference, a fourth-order error ratio is (1 − 4⁻⁴)/(2⁻⁴ − 4⁻⁴) = 17.
    assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
}

#[test]
fn rhs_trace_and_symmetry() {
    let g = support::normalized(8);
    let p = solve_pressure(&g, &CgOptions::default()).unwrap().p;
    let rhs = crf_rhs(&g, &p).unwrap();
    let geo = Geometry::new(&g).unwrap();
    let trace = geo.trace(&rhs);
    let r = geo.scalar_curvature();
    for k in 0..trace.len() {
        let want = -2.0 * (r.values[k] + 3.0 * (p.values[k] + 2.0));
        assert!((trace.values[k] - want).abs() < 1e-10 * want.abs().max(1.0));
        assert_eq!(rhs.get(k, 0, 1), rhs.get(k, 1, 0));
    }
}

#[test]
fn run_records_states_and_diagnostics() {
    let g0 = support::normalized(8);
    let traj = run_flow(&g0, 3.0 * dt(8), dt(8), &support::monitor_only()).unwrap();
    assert_eq!(traj.len(), 4);
    assert!(traj.is_complete());
    assert_eq!(traj.states[0].t, 0.0);
    assert!(traj.states.windows(2).all(|w| w[1].t > w[0].t));
    for s in &traj.states {
        assert!(s.diagnostics.min_p >= -1e-8);
        assert!(s.diagnostics.pressure_residual < 1e-10);
        assert!(s.diagnostics.min_metric_eig > 0.0);
    }
    assert!(traj.states[0].diagnostics.constraint_drift < 1e-6);
    assert!(traj.max_constraint_drift().is_finite());
    assert!(traj.max_constraint_drift() > traj.states[0].diagnostics.constraint_drift);
}

#[test]
fn drift_ceiling_aborts_with_partial_trajectory() {
    let g0 = support::normalized(8);
    let cfg = FlowConfig {
        drift_ceiling: 1e-12,
        ..FlowConfig::default()
    };
    match run_flow(&g0, 2.0 * dt(8), dt(8), &cfg) {
        Err(FlowError::Aborted { step, partial, .. }) => {
            assert_eq!(step, 1);
            assert_eq!(partial.len(), 1);
            assert!(matches!(partial.status, FlowStatus::Aborted { .. }));
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn unnormalized_start_and_bad_steps_are_rejected() {
    let seed = support::seed(8);
    assert!(matches!(
        run_flow(&seed, 0.01, 1e-3, &FlowConfig::default()),
        Err(FlowError::NotNormalized { .. })
    ));
    let g0 = support::normalized(8);
    assert!(matches!(run_flow(&g0, 0.01, -1.0, &FlowConfig::default()), Err(FlowError::Config(_))));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let g0 = support::normalized(8);
    let traj = run_flow(&g0, 2.0 * dt(8), dt(8), &support::monitor_only()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.bin");
    checkpoint::save(&path, &traj).unwrap();
    let back: FlowTrajectory<f64> = checkpoint::load(&path).unwrap();
    assert_eq!(back.len(), traj.len());
    assert_eq!(back.m, traj.m);
    assert_eq!(back.dt, traj.dt);
    for (a, b) in back.states.iter().zip(&traj.states) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.g, b.g);
        assert_eq!(a.p, b.p);
        assert_eq!(a.diagnostics.constraint_drift, b.diagnostics.constraint_drift);
    }

    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"NOTATRAJECTORY").unwrap();
    assert!(matches!(checkpoint::load::<f64>(&bad), Err(CheckpointError::BadMagic)));
}
