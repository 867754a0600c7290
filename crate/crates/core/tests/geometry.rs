//! Geometry kernel checks against closed-form conformal oracles and discrete
//! summation-by-parts identities.

use std::f64::consts::PI;

use crf_core::geometry::Geometry;
use crf_core::grid::{GridSpec, ScalarField};
use crf_core::tensor::{MetricField, SymTensorField};
use proptest::prelude::*;

const TAU: f64 = 2.0 * PI;

/// Conformal exponent with analytic derivatives: value, gradient, Hessian.
struct Phi {
    l: f64,
}

impl Phi {
    fn k(&self) -> f64 {
        TAU / self.l
    }
    // phi = 0.1 sin(kx) cos(ky) + 0.05 sin(kz)  (z term only when n >= 3)
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let n = x.len();
        let k = self.k();
        let (sx, cx) = (k * x[0]).sin_cos();
        let (sy, cy) = (k * x[1]).sin_cos();
        let mut v = 0.1 * sx * cy;
        let mut d = vec![0.0; n];
        let mut h = vec![vec![0.0; n]; n];
        d[0] = 0.1 * k * cx * cy;
        d[1] = -0.1 * k * sx * sy;
        h[0][0] = -0.1 * k * k * sx * cy;
        h[1][1] = -0.1 * k * k * sx * cy;
        h[0][1] = -0.1 * k * k * cx * sy;
        h[1][0] = h[0][1];
        if n >= 3 {
            let (sz, cz) = (k * x[2]).sin_cos();
            v += 0.05 * sz;
            d[2] = 0.05 * k * cz;
            h[2][2] = -0.05 * k * k * sz;
        }
        (v, d, h)
    }
}

fn conformal_setup(n: usize, res: usize) -> (GridSpec<f64>, Phi, MetricField<f64>) {
    let grid = GridSpec::cubic(n, res, 1.3).unwrap();
    let phi = Phi { l: 1.3 };
    let f = ScalarField::from_fn(&grid, |x| phi.eval(x).0);
    let g = MetricField::conformally_flat(&grid, &f).unwrap();
    (grid, phi, g)
}

fn ricci_oracle(n: usize, d: &[f64], h: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let nf = n as f64;
    let lap: f64 = (0..n).map(|a| h[a][a]).sum();
    let grad2: f64 = d.iter().map(|v| v * v).sum();
    let delta = if i == j { 1.0 } else { 0.0 };
    -(nf - 2.0) * (h[i][j] - d[i] * d[j]) - (lap + (nf - 2.0) * grad2) * delta
}

fn order(errs: &[f64]) -> f64 {
    (errs[0] / errs[1]).log2()
}

#[test]
fn constant_metrics_are_flat() {
    for c in [1.0, 2.7] {
        let grid = GridSpec::cubic(3, 8, 1.0).unwrap();
        let geo = Geometry::new(&MetricField::constant_multiple(&grid, c)).unwrap();
        assert!(geo.christoffel().sup_norm() <= 1e-12);
        assert!(geo.ricci().sup_norm() <= 1e-12);
        assert!(geo.scalar_curvature().sup_norm() <= 1e-12);
    }
}

#[test]
fn christoffel_symmetric_and_matches_conformal_oracle() {
    let mut errs = vec![];
    for res in [16, 32] {
        let (grid, phi, g) = conformal_setup(3, res);
        let gam = Geometry::new(&g).unwrap().christoffel();
        let mut err: f64 = 0.0;
        for node in 0..grid.nodes() {
            let (_, d, _) = phi.eval(&grid.coords(node));
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(gam.get(node, k, i, j), gam.get(node, k, j, i));
                        let dk = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        let want = dk(k, i) * d[j] + dk(k, j) * d[i] - dk(i, j) * d[k];
                        err = err.max((gam.get(node, k, i, j) - want).abs());
                    }
                }
            }
        }
        errs.push(err);
    }
    assert!(order(&errs) >= 3.5, "errors {errs:?}");
}

#[test]
fn ricci_and_scalar_curvature_match_conformal_oracle() {
    for n in [2, 3] {
        let mut ric_errs = vec![];
        let mut scal_errs = vec![];
        for res in [16, 32] {
            let (grid, phi, g) = conformal_setup(n, res);
            let geo = Geometry::new(&g).unwrap();
            let ric = geo.ricci();
            let scal = geo.scalar_curvature();
            let (mut er, mut es): (f64, f64) = (0.0, 0.0);
            for node in 0..grid.nodes() {
                let (v, d, h) = phi.eval(&grid.coords(node));
                let mut r_want = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let want = ricci_oracle(n, &d, &h, i, j);
                        er = er.max((ric.get(node, i, j) - want).abs());
                        if i == j {
                            r_want += (-2.0 * v).exp() * want;
                        }
                    }
                }
                es = es.max((scal.values[node] - r_want).abs());
            }
            ric_errs.push(er);
            scal_errs.push(es);
        }
        assert!(order(&ric_errs) >= 3.5, "n={n} ricci errors {ric_errs:?}");
        assert!(order(&scal_errs) >= 3.5, "n={n} scalar errors {scal_errs:?}");
    }
}

#[test]
fn laplacian_of_fourier_mode_on_flat_torus() {
    let l = 2.0;
    let k = TAU / l;
    let mut errs = vec![];
    for res in [16, 32] {
        let grid = GridSpec::cubic(3, res, l).unwrap();
        let geo = Geometry::new(&MetricField::flat(&grid)).unwrap();
        let f = ScalarField::from_fn(&grid, |x| (k * x[0]).sin());
        let lap = geo.laplace_beltrami(&f);
        let err = lap
            .values
            .iter()
            .zip(&f.values)
            .map(|(a, b)| (a + k * k * b).abs())
            .fold(0.0, f64::max);
        errs.push(err);
        assert!(err < 2e-2 * k * k);
        let c = geo.laplace_beltrami(&ScalarField::constant(&grid, 3.0));
        assert!(c.sup_norm() < 1e-12);
    }
    assert!(order(&errs) > 3.8);
}

/// Non-divergence form `g^{ij}(∂_i∂_j f − Γ^k_ij ∂_k f)` coded independently
/// of the flux form.
fn laplacian_nondivergence(geo: &Geometry<f64>, f: &ScalarField<f64>) -> ScalarField<f64> {
    geo.trace(&geo.hessian(f))
}

#[test]
fn divergence_and_nondivergence_laplacians_agree_under_refinement() {
    let mut errs = vec![];
    for res in [16, 32] {
        let (grid, _, g) = conformal_setup(3, res);
        let geo = Geometry::new(&g).unwrap();
        let f = ScalarField::from_fn(&grid, |x| (TAU * x[1] / 1.3).cos() + 0.3 * (TAU * x[2] / 1.3).sin());
        let a = geo.laplace_beltrami(&f);
        let b = laplacian_nondivergence(&geo, &f);
        errs.push(a.zip_map(&b, |x, y| x - y).sup_norm());
    }
    assert!(errs[1] < errs[0] / 8.0, "{errs:?}");
}

#[test]
fn discrete_divergence_theorem_and_integration_by_parts() {
    let (grid, _, g) = conformal_setup(3, 16);
    let geo = Geometry::new(&g).unwrap();
    let f = ScalarField::from_fn(&grid, |x| (x[0] * TAU / 1.3).sin() * (x[2] * TAU / 1.3).cos() + 2.0);
    let h = ScalarField::from_fn(&grid, |x| (x[1] * TAU / 1.3).cos().exp());
    let norm = f.sup_norm();
    assert!(geo.integrate(&geo.laplace_beltrami(&f)).abs() < 1e-10 * norm);
    let lhs = geo.integrate(&f.zip_map(&geo.laplace_beltrami(&h), |a, b| a * b));
    let rhs = -geo.integrate(&geo.grad_dot(&f, &h));
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn metric_norm_is_dimension_and_hessian_of_constant_vanishes() {
    let (grid, _, g) = conformal_setup(3, 16);
    let geo = Geometry::new(&g).unwrap();
    let n = geo.tensor_norm_sq(g.tensor());
    assert!(n.values.iter().all(|v| (v - 3.0).abs() < 1e-12));
    let hc = geo.hessian(&ScalarField::constant(&grid, -4.0));
    assert!(hc.sup_norm() < 1e-12);
}

#[test]
fn gradient_sq_on_flat_sine() {
    let l = 1.7;
    let k = TAU / l;
    let grid = GridSpec::cubic(3, 32, l).unwrap();
    let geo = Geometry::new(&MetricField::flat(&grid)).unwrap();
    let f = ScalarField::from_fn(&grid, |x| (k * x[0]).sin());
    let g2 = geo.gradient_sq(&f);
    for node in 0..grid.nodes() {
        let want = k * k * (k * grid.coords(node)[0]).cos().powi(2);
        assert!((g2.values[node] - want).abs() < 1e-3 * k * k);
    }
}

#[test]
fn integration_volumes() {
    let grid = GridSpec::<f64>::cubic(3, 8, 1.0).unwrap();
    let one = ScalarField::constant(&grid, 1.0);
    let flat = Geometry::new(&MetricField::flat(&grid)).unwrap();
    assert!((flat.integrate(&one) - 1.0).abs() < 1e-14);
    for n in [2usize, 3, 4] {
        let grid = GridSpec::cubic(n, 8, 1.0).unwrap();
        let one = ScalarField::constant(&grid, 1.0);
        let c = 2.3f64;
        let geo = Geometry::new(&MetricField::constant_multiple(&grid, c)).unwrap();
        assert!((geo.integrate(&one) - c.powf(n as f64 / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn curved_integration_self_converges() {
    let f = |x: &[f64]| 1.0 + 0.5 * (TAU * x[0] / 1.3).cos() * (TAU * x[1] / 1.3).sin();
    let vals: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&r| {
            let (grid, _, g) = conformal_setup(3, r);
            Geometry::new(&g).unwrap().integrate(&ScalarField::from_fn(&grid, f))
        })
        .collect();
    // Trapezoidal rule on smooth periodic data converges faster than h^4.
    let d1 = (vals[1] - vals[0]).abs();
    let d2 = (vals[2] - vals[1]).abs();
    assert!(d2 <= d1 / 16.0 || d2 < 1e-13, "{vals:?}");
}

#[test]
fn degenerate_metric_rejected() {
    let grid = GridSpec::cubic(3, 8, 1.0).unwrap();
    let t = SymTensorField::from_fn(&grid, |x, out| {
        out.copy_from_slice(&[1.0, 0.0, 0.0, if x[0] > 0.5 { -1.0 } else { 1.0 }, 0.0, 1.0]);
    });
    assert!(MetricField::new(grid, t).is_err());
}

fn spd_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        proptest::collection::vec(-1.0f64..1.0, 9),
        proptest::collection::vec(-5.0f64..5.0, 6),
    )
        .prop_map(|(a, t)| {
            // g = A A^T + 0.1 I
            let mut g = vec![0.0; 6];
            let idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
            for (p, &(i, j)) in idx.iter().enumerate() {
                let mut s = if i == j { 0.1 } else { 0.0 };
                for k in 0..3 {
                    s += a[i * 3 + k] * a[j * 3 + k];
                }
                g[p] = s;
            }
            (g, t)
        })
}

proptest! {
    #[test]
    fn tensor_norm_is_nonnegative((g, t) in spd_strategy()) {
        let grid = GridSpec::cubic(3, 8, 1.0).unwrap();
        let metric = MetricField::from_fn(&grid, |_, out| out.copy_from_slice(&g)).unwrap();
        let tensor = SymTensorField::from_fn(&grid, |x, out| {
            for (o, v) in out.iter_mut().zip(&t) { *o = v * (1.0 + x[0]); }
        });
        let geo = Geometry::new(&metric).unwrap();
        let n = geo.tensor_norm_sq(&tensor);
        prop_assert!(n.values.iter().all(|&v| v >= 0.0));
    }
}
