//! Ready-made seed metrics and terminal profiles for experiments.

use crate::geometry::Geometry;
use crate::grid::{GridSpec, ScalarField};
use crate::scalar::Real;
use crate::tensor::{GeometryError, MetricField, SymLayout};

/// Anisotropic seed whose linearization at the flat metric is
/// transverse-traceless:
///
/// `g_ii = exp(2a (sin(k x_{i+2} + θ_i) − sin(k x_{i+1} + θ_{i−1})))`
/// (indices mod `n`), plus an off-diagonal coupling
/// `g_01 = b sin(k x_2) sqrt(g_00 g_11)` with `|b| < 1`.
///
/// Because the trace and divergence of the perturbation vanish, the total
/// scalar curvature is negative at second order, which puts the conformal
/// class in the negative Yamabe range. Conformally flat seeds never are.
pub fn tt_seed<T: Real>(grid: &GridSpec<T>, a: T, b: T) -> Result<MetricField<T>, GeometryError> {
    let n = grid.dim();
    assert!(n >= 3, "tt_seed needs at least three axes");
    let layout = SymLayout::new(n);
    let phases: Vec<T> = (0..n).map(|i| T::lit(0.7 * i as f64)).collect();
    let ks: Vec<T> = (0..n)
        .map(|i| T::lit(2.0) * T::PI() / grid.period()[i])
        .collect();
    MetricField::from_fn(grid, |x, out| {
        for v in out.iter_mut() {
            *v = T::zero();
        }
        let f = |i: usize| -> T {
            let axis = (i + 2) % n;
            a * (ks[axis] * x[axis] + phases[i]).sin()
        };
        let mut diag = vec![T::zero(); n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            diag[i] = (T::lit(2.0) * (f(i) - f(prev))).exp();
            out[layout.index(i, i)] = diag[i];
        }
        out[layout.index(0, 1)] = b * (ks[2] * x[2]).sin() * (diag[0] * diag[1]).sqrt();
    })
}

/// Smooth periodic bump `exp(−κ Σ (L_a/π)² sin²(π (x_a − c_a)/L_a))`
/// normalized to unit mass under `geo`.
pub fn periodic_bump<T: Real>(geo: &Geometry<T>, kappa: T, center: &[T]) -> ScalarField<T> {
    let grid = geo.grid();
    let raw = ScalarField::from_fn(grid, |x| {
        let mut d2 = T::zero();
        for a in 0..grid.dim() {
            let l = grid.period()[a];
            let s = (T::PI() * (x[a] - center[a]) / l).sin() * l / T::PI();
            d2 += s * s;
        }
        (-kappa * d2).exp()
    });
    let mass = geo.integrate(&raw);
    raw.map(|v| v / mass)
}
