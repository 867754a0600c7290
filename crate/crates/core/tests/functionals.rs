mod support;

use std::f64::consts::PI;

use crf_core::conjugate::solve_backward;
use crf_core::flow::{run_flow, FlowTrajectory};
use crf_core::functionals::{
    de_dt_analytic, dw_dt_analytic, entropy_e, entropy_w, entropy_w_f, lower_bound, report, FunctionalError,
};
use crf_core::geometry::Geometry;
use crf_core::grid::{GridSpec, ScalarField};
use crf_core::nu::random_smooth_field;
use crf_core::pressure::solve_pressure;
use crf_core::seeds::periodic_bump;
use crf_core::tensor::MetricField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn uniform_density_has_closed_form_entropies() {
    let g = support::normalized(8);
    let geo = Geometry::new(&g).unwrap();
    let v = geo.volume();
    let u = ScalarField::constant(geo.grid(), 1.0 / v);
    let e = entropy_e(&geo, &u).unwrap();
    let w = entropy_w(&geo, &u, 2).unwrap();
    assert!((e + v.ln()).abs() < 1e-12 * v.ln().abs());
    assert!((w + 6.0 * v.ln()).abs() < 1e-12 * v.ln().abs());
}

#[test]
fn density_and_log_forms_of_w_agree() {
    let g = support::normalized(8);
    let geo = Geometry::new(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let f = random_smooth_field(&geo, &mut rng, 2, 1.0);
        let u = f.map(|v| (-v).exp());
        let a = entropy_w(&geo, &u, 2).unwrap();
        let b = entropy_w_f(&geo, &f, 2);
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn nonpositive_densities_are_rejected() {
    let geo = Geometry::new(&MetricField::flat(&support::grid(8))).unwrap();
    let mut u = ScalarField::constant(geo.grid(), 1.0);
    u.values[5] = 0.0;
    assert!(matches!(
        entropy_e(&geo, &u),
        Err(FunctionalError::NonPositive { node: 5, .. })
    ));
    assert!(entropy_w(&geo, &u, 2).is_err());
}

#[test]
fn gradient_term_converges_at_fourth_order() {
    // Flat unit box, u = exp(0.3 sin 2πx); the x-only variation keeps the
    // transverse resolution cheap.
    let w_at = |nx: usize| {
        let grid = GridSpec::new(vec![nx, 8, 8], vec![1.0, 1.0, 1.0]).unwrap();
        let geo = Geometry::new(&MetricField::flat(&grid)).unwrap();
        let u = ScalarField::from_fn(&grid, |x| (0.3 * (2.0 * PI * x[0]).sin()).exp());
        entropy_w(&geo, &u, 2).unwrap()
    };
    let reference = w_at(128);
    let errs: Vec<f64> = [8usize, 16, 32].iter().map(|&n| (w_at(n) - reference).abs()).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.5, "order {order} from {errs:?}");
    }
}

#[test]
fn lower_bound_holds_for_random_potentials() {
    let geo = Geometry::new(&support::normalized(8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for amp in [0.1, 1.0, 3.0] {
        let f = random_smooth_field(&geo, &mut rng, 2, amp);
        let lb = lower_bound(&geo, &f, 2);
        assert!(lb.holds(), "amplitude {amp}: {lb:?}");
    }
}

#[test]
fn w_rate_terms_are_nonnegative() {
    let g = support::normalized(8);
    let geo = Geometry::new(&g).unwrap();
    let p = solve_pressure(&g, &Default::default()).unwrap().p;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_smooth_field(&geo, &mut rng, 2, 1.0);
    let rate = dw_dt_analytic(&geo, &f.map(|v| (-v).exp()), &p, 2).unwrap();
    assert!(rate.min_term() >= 0.0, "{rate:?}");
    assert!((rate.total() - rate.terms.iter().sum::<f64>()).abs() < 1e-12 * rate.total());
}

#[test]
fn static_heat_flow_matches_the_entropy_rate() {
    let grid = GridSpec::new(vec![32, 8, 8], vec![1.0, 1.0, 1.0]).unwrap();
    let traj = FlowTrajectory::fixed(MetricField::flat(&grid), ScalarField::zeros(&grid), 2, 1e-4, 100).unwrap();
    let ut = ScalarField::from_fn(&grid, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
    let sol = solve_backward(&traj, &ut).unwrap();
    let rep = report(&traj, &sol).unwrap();
    assert_eq!(rep.rows.len(), traj.len());
    assert!(rep.max_de_rel_error() < 1e-4, "{:e}", rep.max_de_rel_error());
    // With p = 0 on a fixed metric the rate reduces to the Fisher information.
    let geo = Geometry::new(&traj.states[0].g).unwrap();
    let fisher = de_dt_analytic(&geo, &sol.u[3], &ScalarField::zeros(&grid), 2).unwrap();
    assert!((fisher - rep.rows[3].de_analytic).abs() < 1e-14 * fisher);
    assert!(rep.min_de_analytic() > 0.0);
    assert!(rep.max_mass_drift() < 1e-12);
}

#[test]
fn short_flow_report_is_monotone_and_consistent() {
    let g0 = support::normalized(8);
    let h = support::L / 8.0;
    let dt = 0.2 * h * h / 12.0;
    let traj = run_flow(&g0, 4.0 * dt, dt, &support::monitor_only()).unwrap();
    let last = Geometry::new(&traj.states.last().unwrap().g).unwrap();
    let bump = periodic_bump(&last, 2.0, &[1.5, 1.5, 1.5]);
    let mass = last.integrate(&bump);
    let sol = solve_backward(&traj, &bump.map(|v| v / mass)).unwrap();
    let rep = report(&traj, &sol).unwrap();
    assert_eq!(rep.rows.len(), 5);
    assert_eq!(rep.e_violation(0.0, 0.0), 0.0);
    assert_eq!(rep.w_violation(0.0, 0.0), 0.0);
    assert!(rep.min_w_term() >= 0.0);
    assert!(rep.min_de_analytic() > 0.0);
    assert!(rep.max_de_rel_error() < 5e-2, "dE {:e}", rep.max_de_rel_error());
    assert!(rep.max_dw_rel_error() < 5e-2, "dW {:e}", rep.max_dw_rel_error());
    for r in &rep.rows {
        assert!(r.min_p >= -1e-8 && r.min_metric_eig > 0.0);
    }
    let short = FlowTrajectory::fixed(g0, ScalarField::zeros(last.grid()), 2, dt, 2).unwrap();
    assert!(matches!(
        report(&short, &sol),
        Err(FunctionalError::LengthMismatch { .. })
    ));
}
