mod support;

use std::f64::consts::PI;

use crf_core::functionals::entropy_w_f;
use crf_core::geometry::Geometry;
use crf_core::grid::ScalarField;
use crf_core::nu::{
    constant_candidate, constraint_error, gradient_check, nu_functional, project, random_smooth_field, NuConfig,
    NuError,
};
use crf_core::tensor::MetricField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geo() -> Geometry<f64> {
    Geometry::new(&support::normalized(8)).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let geo = geo();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random_smooth_field(&geo, &mut rng, 2, 0.8);
    for _ in 0..3 {
        let dir = random_smooth_field(&geo, &mut rng, 3, 1.0);
        let (analytic, fd) = gradient_check(&geo, &f, &dir, 2, 1e-5);
        assert!((analytic - fd).abs() < 1e-7 * analytic.abs().max(1.0), "{analytic} vs {fd}");
    }
}

#[test]
fn projection_enforces_unit_mass() {
    let geo = geo();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_smooth_field(&geo, &mut rng, 2, 5.0).map(|v| v + 40.0);
    let p = project(&geo, &f);
    assert!(constraint_error(&geo, &p) < 1e-12);
    assert!(constraint_error(&geo, &constant_candidate(&geo)) < 1e-12);
}

#[test]
fn minimum_is_the_uniform_density() {
    let geo = geo();
    let exact = -6.0 * geo.volume().ln();
    let res = nu_functional(&geo, 2, &NuConfig::default()).unwrap();
    assert!(!res.unbounded);
    assert_eq!(res.starts.len(), 5);
    assert!(res.value >= exact - 1e-10 * exact.abs(), "{} below {exact}", res.value);
    assert!(res.value - exact < 1e-6 * exact.abs(), "{} vs {exact}", res.value);
    assert!(res.constraint_error < 1e-8);
    assert!(res.spread() < 1e-4, "spread {:e}", res.spread());
    let f0 = geo.volume().ln();
    let dev = res.minimizer_f.values.iter().map(|v| (v - f0).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-3, "minimizer deviates by {dev:e}");
}

#[test]
fn flat_torus_value() {
    let geo = Geometry::new(&MetricField::flat(&support::grid(8))).unwrap();
    let res = nu_functional(&geo, 2, &NuConfig::default()).unwrap();
    let exact = -6.0 * 27f64.ln();
    assert!((res.value - exact).abs() < 1e-6 * exact.abs());
}

#[test]
fn brute_force_fourier_scan_finds_nothing_lower() {
    // Scan a two-mode family of admissible potentials.
    let geo = geo();
    let res = nu_functional(&geo, 2, &NuConfig::default()).unwrap();
    let k = 2.0 * PI / support::L;
    let mut best = f64::INFINITY;
    let mut argbest = (f64::NAN, f64::NAN);
    for i in -6..=6 {
        for j in -6..=6 {
            let (a, b) = (0.1 * i as f64, 0.1 * j as f64);
            let f = ScalarField::from_fn(geo.grid(), |x| a * (k * x[0]).cos() + b * (k * (x[1] + x[2])).sin());
            let w = entropy_w_f(&geo, &project(&geo, &f), 2);
            if w < best {
                best = w;
                argbest = (a, b);
            }
        }
    }
    assert!(best >= res.value - 1e-9 * best.abs());
    assert_eq!(argbest, (0.0, 0.0));
}

#[test]
fn runs_are_deterministic() {
    let geo = geo();
    let cfg = NuConfig {
        max_iters: 20,
        ..NuConfig::default()
    };
    let a = nu_functional(&geo, 2, &cfg).unwrap();
    let b = nu_functional(&geo, 2, &cfg).unwrap();
    assert_eq!(a, b);
    let zero = NuConfig { starts: 0, ..cfg };
    assert!(matches!(nu_functional(&geo, 2, &zero), Err(NuError::NoStarts)));
}
