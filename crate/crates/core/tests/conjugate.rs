mod support;

use std::f64::consts::PI;

use crf_core::conjugate::{solve_backward, solve_forward, ConjugateError};
use crf_core::flow::{run_flow, FlowTrajectory};
use crf_core::geometry::Geometry;
use crf_core::grid::{GridSpec, ScalarField};
use crf_core::seeds::periodic_bump;
use crf_core::tensor::MetricField;

/// Flat `nx × 8 × 8` box of unit period with `p ≡ 0` held fixed.
fn flat_static(nx: usize, dt: f64, steps: usize) -> FlowTrajectory<f64> {
    let grid = GridSpec::new(vec![nx, 8, 8], vec![1.0, 1.0, 1.0]).unwrap();
    FlowTrajectory::fixed(MetricField::flat(&grid), ScalarField::zeros(&grid), 2, dt, steps).unwrap()
}

fn mode(grid: &GridSpec<f64>) -> ScalarField<f64> {
    ScalarField::from_fn(grid, |x| 1.0 + 0.1 * (2.0 * PI * x[0]).sin())
}

/// Sup error at `τ = T` against `1 + 0.1 e^{−λτ} sin(2πx)`.
fn mode_error(traj: &FlowTrajectory<f64>, lambda: f64) -> f64 {
    let grid = traj.grid().clone();
    let sol = solve_backward(traj, &mode(&grid)).unwrap();
    let tau = traj.final_time;
    let decay = (-lambda * tau).exp();
    let exact = ScalarField::from_fn(&grid, |x| 1.0 + 0.1 * decay * (2.0 * PI * x[0]).sin());
    sol.u[0].zip_map(&exact, |a, b| a - b).sup_norm()
}

#[test]
fn fourier_mode_decays_at_the_heat_rate() {
    let traj = flat_static(64, 2.5e-4, 80);
    let err = mode_error(&traj, 4.0 * PI * PI);
    assert!(err < 1e-6, "error {err:e}");
}

#[test]
fn time_discretization_is_at_least_second_order() {
    // Compare against the exact solution of the spatially discrete system,
    // whose decay rate is the symbol of the composed gradient stencils.
    let nx = 16;
    let h = 1.0 / nx as f64;
    let theta = 2.0 * PI * h;
    let lambda_h = ((8.0 * theta.sin() - (2.0 * theta).sin()) / (6.0 * h)).powi(2);
    let errs: Vec<f64> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&dt| mode_error(&flat_static(nx, dt, (0.04 / dt).round() as usize), lambda_h))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 2.0, "temporal order {order} from {errs:?}");
    }
}

#[test]
fn space_discretization_is_at_least_order_three_and_a_half() {
    let lambda = 4.0 * PI * PI;
    let errs: Vec<f64> = [8usize, 16, 32]
        .iter()
        .map(|&nx| mode_error(&flat_static(nx, 2.5e-4, 80), lambda))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.5, "spatial order {order} from {errs:?}");
    }
}

#[test]
fn constants_stay_constant_and_mass_is_exact_on_static_metrics() {
    let g = support::seed(8);
    let p = ScalarField::zeros(g.grid());
    let traj = FlowTrajectory::fixed(g.clone(), p, 2, 1e-3, 10).unwrap();
    let sol = solve_backward(&traj, &ScalarField::constant(g.grid(), 0.25)).unwrap();
    for u in &sol.u {
        assert!(u.values.iter().all(|v| (v - 0.25).abs() < 1e-14));
    }
    let geo = Geometry::new(&g).unwrap();
    let bump = periodic_bump(&geo, 2.0, &[1.5, 1.5, 1.5]);
    let sol = solve_backward(&traj, &bump).unwrap();
    assert!(sol.max_mass_drift() < 1e-12, "drift {:e}", sol.max_mass_drift());
    assert!(sol.min_value() > 0.0);
}

#[test]
fn backward_then_forward_recovers_terminal_data() {
    let traj = flat_static(16, 1e-3, 10);
    let ut = mode(traj.grid());
    let back = solve_backward(&traj, &ut).unwrap();
    let fwd = solve_forward(&traj, &back.u[0]).unwrap();
    let err = fwd.last().unwrap().zip_map(&ut, |a, b| a - b).sup_norm();
    assert!(err < 1e-6, "error {err:e}");
}

#[test]
fn invalid_terminal_data_is_reported() {
    let traj = flat_static(16, 4e-3, 3);
    let grid = traj.grid().clone();
    let negative = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[0]).sin());
    assert!(matches!(
        solve_backward(&traj, &negative),
        Err(ConjugateError::NonPositiveTerminal(_))
    ));
    let short = ScalarField::new(vec![1.0; 7]);
    assert!(matches!(
        solve_backward(&traj, &short),
        Err(ConjugateError::GridMismatch { .. })
    ));
    // A one-node spike: the wide stencil's negative weights overshoot the floor.
    let mut spike = ScalarField::constant(&grid, 1e-3);
    spike.values[0] = 1.0;
    match solve_backward(&traj, &spike) {
        Err(ConjugateError::PositivityLoss { index, min }) => {
            assert_eq!(index, traj.len() - 2);
            assert!(min < 0.0);
        }
        other => panic!("expected positivity loss, got {other:?}"),
    }
}

#[test]
fn mass_drift_along_the_flow_shrinks_under_refinement() {
    let drift = |res: usize| {
        let g0 = support::normalized(res);
        let h = support::L / res as f64;
        let traj = run_flow(&g0, 0.004, 0.2 * h * h / 12.0, &support::monitor_only()).unwrap();
        let last = Geometry::new(&traj.states.last().unwrap().g).unwrap();
        let ut = periodic_bump(&last, 2.0, &[1.5, 1.5, 1.5]);
        let sol = solve_backward(&traj, &ut).unwrap();
        assert!(sol.min_value() > 0.0);
        sol.max_mass_drift()
    };
    let (coarse, fine) = (drift(8), drift(12));
    assert!(coarse / fine > 1.5f64.powi(3), "drift {coarse:e} -> {fine:e}");
}
