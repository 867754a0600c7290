mod support;

use std::f64::consts::PI;

use crf_core::conjugate::{solve_backward, ConjugateHeatSolution};
use crf_core::flow::{run_flow, FlowTrajectory};
use crf_core::functionals::{dw_dt_analytic, entropy_w_f};
use crf_core::geometry::Geometry;
use crf_core::grid::{GridSpec, ScalarField};
use crf_core::identities::{
    apply_conjugate_op, assemble_v, assemble_w, check_bochner, check_conjugate_v, check_laplacian_variation,
    conjugate_v_rhs, IdentityError, SpacetimeField,
};
use crf_core::pressure::solve_pressure;
use crf_core::seeds::periodic_bump;
use crf_core::tensor::MetricField;

fn flat_static(nx: usize, dt: f64, steps: usize) -> FlowTrajectory<f64> {
    let grid = GridSpec::new(vec![nx, 8, 8], vec![1.0, 1.0, 1.0]).unwrap();
    FlowTrajectory::fixed(MetricField::flat(&grid), ScalarField::zeros(&grid), 2, dt, steps).unwrap()
}

fn profile(grid: &GridSpec<f64>) -> ScalarField<f64> {
    ScalarField::from_fn(grid, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).sin())
}

#[test]
fn w_of_constants_and_zero() {
    let geo = Geometry::new(&support::normalized(8)).unwrap();
    let c = ScalarField::constant(geo.grid(), 0.7);
    assert!(assemble_w(&geo, &c, 2).values.iter().all(|w| (w + 6.0 * 0.7).abs() < 1e-12));
    let zero = ScalarField::zeros(geo.grid());
    assert_eq!(assemble_v(&geo, &zero, 2).sup_norm(), 0.0);
}

#[test]
fn integral_of_v_is_w() {
    let grid = GridSpec::new(vec![32, 8, 8], vec![1.0, 1.0, 1.0]).unwrap();
    let geo = Geometry::new(&MetricField::flat(&grid)).unwrap();
    let f = ScalarField::from_fn(&grid, |x| 0.5 * (2.0 * PI * x[0]).cos());
    let iv = geo.integrate(&assemble_v(&geo, &f, 2));
    let w = entropy_w_f(&geo, &f, 2);
    assert!((iv - w).abs() < 1e-5 * w.abs(), "{iv} vs {w}");
}

#[test]
fn conjugate_heat_solution_is_annihilated() {
    // The residual is the centred time difference's truncation error.
    let residual = |dt: f64| {
        let traj = flat_static(32, dt, 10);
        let sol = solve_backward(&traj, &profile(traj.grid())).unwrap();
        let u = SpacetimeField { values: sol.u.clone() };
        apply_conjugate_op(&traj, &u, 5).unwrap().sup_norm() / sol.u[5].sup_norm()
    };
    let (coarse, fine) = (residual(2e-4), residual(1e-4));
    assert!(fine < 1e-4, "residual {fine:e}");
    let ratio = coarse / fine;
    assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
}

#[test]
fn laplacian_commutes_with_time_on_static_metrics() {
    let traj = flat_static(16, 1e-3, 4);
    let grid = traj.grid().clone();
    let f = SpacetimeField {
        values: (0..traj.len())
            .map(|k| ScalarField::from_fn(&grid, |x| (k as f64 * 0.3) * (2.0 * PI * x[0]).sin() + x[1].cos()))
            .collect(),
    };
    let r = check_laplacian_variation(&traj, &f, 2).unwrap();
    assert!(r.relative() < 1e-12, "{r:?}");
}

#[test]
fn total_of_v_formula_is_minus_w_rate() {
    // The divergence term integrates to zero exactly, so the remaining terms
    // reproduce the four-term rate.
    let g = support::normalized(8);
    let geo = Geometry::new(&g).unwrap();
    let p = solve_pressure(&g, &Default::default()).unwrap().p;
    let u = periodic_bump(&geo, 2.0, &[1.0, 1.5, 2.0]);
    let rhs = conjugate_v_rhs(&geo, &u, &p, 2).unwrap();
    let total = dw_dt_analytic(&geo, &u, &p, 2).unwrap().total();
    let integral = geo.integrate(&rhs);
    assert!((integral + total).abs() < 1e-10 * total, "{integral} vs {total}");
}

#[test]
fn boundary_and_length_errors() {
    let traj = flat_static(8, 1e-3, 3);
    let f = SpacetimeField {
        values: vec![ScalarField::zeros(traj.grid()); traj.len()],
    };
    assert!(matches!(
        check_bochner(&traj, &f, 0),
        Err(IdentityError::BoundaryIndex { index: 0, .. })
    ));
    assert!(matches!(
        check_laplacian_variation(&traj, &f, traj.len() - 1),
        Err(IdentityError::BoundaryIndex { .. })
    ));
    let short = SpacetimeField {
        values: f.values[..2].to_vec(),
    };
    assert!(matches!(
        apply_conjugate_op(&traj, &short, 1),
        Err(IdentityError::LengthMismatch { .. })
    ));
    let bad = ConjugateHeatSolution {
        u: vec![ScalarField::zeros(traj.grid()); traj.len()],
        terminal_index: traj.len() - 1,
        masses: vec![0.0; traj.len()],
    };
    assert!(matches!(
        SpacetimeField::log_density(&bad),
        Err(IdentityError::NonPositive(_))
    ));
}

/// Residuals of the three identities at `t = 0.002` along the flow.
fn flow_residuals(res: usize, steps: usize) -> [f64; 3] {
    let g0 = support::normalized(res);
    let traj = run_flow(&g0, 0.004, 0.004 / steps as f64, &support::monitor_only()).unwrap();
    let last = Geometry::new(&traj.states.last().unwrap().g).unwrap();
    let sol = solve_backward(&traj, &periodic_bump(&last, 2.0, &[1.5, 1.5, 1.5])).unwrap();
    let f = SpacetimeField::log_density(&sol).unwrap();
    let mid = steps / 2;
    [
        check_conjugate_v(&traj, &sol, mid).unwrap().sup,
        check_bochner(&traj, &f, mid).unwrap().sup,
        check_laplacian_variation(&traj, &f, mid).unwrap().sup,
    ]
}

#[test]
fn flow_identities_converge_under_refinement() {
    let coarse = flow_residuals(8, 2);
    let fine = flow_residuals(12, 4);
    for (name, (c, f)) in ["box v", "bochner", "laplacian"].iter().zip(coarse.iter().zip(&fine)) {
        let order = support::order(*c, *f, 8.0, 12.0);
        assert!(order >= 2.0, "{name}: {c:e} -> {f:e}, order {order}");
    }
}
