//! `ν(g) = inf { W(g, e^{−f}) : ∫ e^{−f} dμ = 1 }` by multi-start projected
//! gradient descent.
//!
//! Since `∫ u ln u dμ ≥ −ln V` for unit-mass `u` (Jensen) and the gradient
//! term is nonnegative, the infimum is `−2(m + 1) ln V`, attained by the
//! constant `f = ln V`. The discrete functional inherits this because the
//! quadrature weights are positive. The optimizer does not use the fact; it
//! is what the tests check it against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cg::{self, CgError, CgOptions, WeightedElliptic};
use crate::functionals::entropy_w_f;
use crate::geometry::Geometry;
use crate::grid::ScalarField;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NuError {
    #[error("at least one start is required")]
    NoStarts,
    #[error("preconditioner solve failed: {0}")]
    Solver(#[from] CgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuConfig<T> {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop when the projected gradient's `L²(dμ)` norm falls below this.
    pub grad_tol: T,
    /// Amplitude of the random low-mode perturbation of each start.
    pub perturbation: T,
    /// Highest wavenumber used in start perturbations.
    pub modes: usize,
    /// Values below this are reported as unbounded below.
    pub floor: T,
}

impl<T: Real> Default for NuConfig<T> {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 7,
            max_iters: 200,
            grad_tol: T::lit(1e-9),
            perturbation: T::lit(0.5),
            modes: 2,
            floor: T::lit(-1e8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartOutcome<T> {
    pub value: T,
    pub iterations: usize,
    pub gradient_norm: T,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuResult<T> {
    pub value: T,
    pub minimizer_f: ScalarField<T>,
    /// `|∫ e^{−f} dμ − 1|` at the minimizer.
    pub constraint_error: T,
    pub starts: Vec<StartOutcome<T>>,
    pub unbounded: bool,
}

impl<T: Real> NuResult<T> {
    /// Largest difference between the values found by different starts.
    pub fn spread(&self) -> T {
        let (lo, hi) = self
            .starts
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), s| {
                (lo.min(s.value), hi.max(s.value))
            });
        hi - lo
    }
}

/// `L²(dμ)` gradient of `f ↦ W(g, e^{−f})` for the discrete functional:
/// `−2 div(e^{−f} ∇f) + e^{−f} (2(m + 1)(f − 1) − |∇f|²)`.
///
/// The divergence uses the adjoint of the gradient stencil, so this is the
/// exact derivative of [`entropy_w_f`], not just a consistent approximation.
pub fn w_gradient<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>, m: usize) -> ScalarField<T> {
    let c = T::lit(2.0) * T::from_usize_lossy(m + 1);
    let e = f.map(|v| (-v).exp());
    let g2 = geo.gradient_sq(f);
    let flux = geo.gradient_vector(f).scale_nodes(&e);
    let div = geo.divergence_vec(&flux);
    ScalarField::new(
        (0..f.len())
            .map(|k| {
                -T::lit(2.0) * div.values[k]
                    + e.values[k] * (c * (f.values[k] - T::one()) - g2.values[k])
            })
            .collect(),
    )
}

/// Shifts `f` so that `∫ e^{−f} dμ = 1`.
pub fn project<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>) -> ScalarField<T> {
    // Factor out the largest exponent to keep the sum finite.
    let lo = f.min();
    let z = geo.integrate(&f.map(|v| (lo - v).exp()));
    let shift = z.ln() - lo;
    f.map(|v| v + shift)
}

pub fn constraint_error<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>) -> T {
    (geo.integrate(&f.map(|v| (-v).exp())) - T::one()).abs()
}

/// The admissible constant `f = ln V`.
pub fn constant_candidate<T: Real>(geo: &Geometry<T>) -> ScalarField<T> {
    ScalarField::constant(geo.grid(), geo.volume().ln())
}

/// Analytic and centred finite-difference directional derivatives of
/// `W(g, e^{−f})` along `dir`.
pub fn gradient_check<T: Real>(
    geo: &Geometry<T>,
    f: &ScalarField<T>,
    dir: &ScalarField<T>,
    m: usize,
    eps: T,
) -> (T, T) {
    let g = w_gradient(geo, f, m);
    let analytic = geo.integrate(&g.zip_map(dir, |a, b| a * b));
    let plus = entropy_w_f(geo, &f.zip_map(dir, |a, b| a + eps * b), m);
    let minus = entropy_w_f(geo, &f.zip_map(dir, |a, b| a - eps * b), m);
    (analytic, (plus - minus) / (T::lit(2.0) * eps))
}

/// Random smooth field `Σ a_k cos(k·x) + b_k sin(k·x)` over wavevectors with
/// entries in `−modes..=modes`, amplitudes uniform in `[−1, 1]` and the
/// whole field scaled to sup norm `amplitude`.
pub fn random_smooth_field<T: Real>(
    geo: &Geometry<T>,
    rng: &mut ChaCha8Rng,
    modes: usize,
    amplitude: T,
) -> ScalarField<T> {
    let grid = geo.grid();
    let n = grid.dim();
    let span = 2 * modes + 1;
    let mut field = ScalarField::zeros(grid);
    for code in 0..span.pow(n as u32) {
        let k: Vec<i64> = (0..n)
            .map(|a| ((code / span.pow(a as u32)) % span) as i64 - modes as i64)
            .collect();
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        let (ca, sa) = (T::lit(rng.gen_range(-1.0..=1.0)), T::lit(rng.gen_range(-1.0..=1.0)));
        for node in 0..grid.nodes() {
            let x = grid.coords(node);
            let phase = (0..n).fold(T::zero(), |s, a| {
                s + T::lit(2.0) * T::PI() * T::lit(k[a] as f64) * x[a] / grid.period()[a]
            });
            field.values[node] += ca * phase.cos() + sa * phase.sin();
        }
    }
    let sup = field.sup_norm();
    if sup > T::zero() {
        field.map(|v| v * amplitude / sup)
    } else {
        field
    }
}

/// Preconditioned projected gradient descent from one start.
fn descend<T: Real>(
    geo: &Geometry<T>,
    f0: ScalarField<T>,
    m: usize,
    cfg: &NuConfig<T>,
) -> Result<(ScalarField<T>, StartOutcome<T>), NuError> {
    // Near the minimizer the Hessian is about 2 e^{−f}(−Δ + (m + 1)/2) on
    // mean-free perturbations, so this preconditioner makes unit steps
    // close to Newton steps.
    let nodes = geo.grid().nodes();
    let shift = T::from_usize_lossy(m + 1) * T::lit(0.5);
    let op = WeightedElliptic::new(geo, T::one(), vec![shift; nodes]);
    let opts = CgOptions::default();

    let mut f = project(geo, &f0);
    let mut w = entropy_w_f(geo, &f, m);
    let mut step = T::one();
    let mut grad_norm = T::infinity();
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations = it;
        let g = w_gradient(geo, &f, m);
        let e = f.map(|v| (-v).exp());
        let ge = geo.integrate(&g.zip_map(&e, |a, b| a * b));
        let ee = geo.integrate(&e.zip_map(&e, |a, b| a * b));
        let gp = g.zip_map(&e, |a, b| a - ge / ee * b);
        grad_norm = geo.integrate(&gp.map(|v| v * v)).sqrt();
        if grad_norm < cfg.grad_tol {
            return Ok((f, StartOutcome { value: w, iterations: it, gradient_norm: grad_norm, converged: true }));
        }
        if w < cfg.floor {
            break;
        }
        let mean_f = geo.integrate(&f) / geo.volume();
        let solved = cg::solve(&op, &gp.values, None, &opts)?;
        let half_ef = T::lit(0.5) * mean_f.exp();
        let dir = ScalarField::new(solved.solution.iter().map(|&v| -half_ef * v).collect());
        let slope = geo.integrate(&g.zip_map(&dir, |a, b| a * b));
        if !(slope < T::zero()) {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let trial = project(geo, &f.zip_map(&dir, |a, b| a + step * b));
            let wt = entropy_w_f(geo, &trial, m);
            if wt <= w + T::lit(1e-4) * step * slope {
                f = trial;
                w = wt;
                accepted = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
        step = (step * T::lit(2.0)).min(T::one());
    }
    let converged = grad_norm < cfg.grad_tol;
    Ok((f, StartOutcome { value: w, iterations, gradient_norm: grad_norm, converged }))
}

/// Best value of `W(g, e^{−f})` over `cfg.starts` seeded perturbations of
/// the constant candidate.
pub fn nu_functional<T: Real>(geo: &Geometry<T>, m: usize, cfg: &NuConfig<T>) -> Result<NuResult<T>, NuError> {
    if cfg.starts == 0 {
        return Err(NuError::NoStarts);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = constant_candidate(geo);
    let mut best: Option<ScalarField<T>> = None;
    let mut best_value = T::infinity();
    let mut starts = Vec::with_capacity(cfg.starts);
    for _ in 0..cfg.starts {
        let noise = random_smooth_field(geo, &mut rng, cfg.modes, cfg.perturbation);
        let (f, outcome) = descend(geo, base.zip_map(&noise, |a, b| a + b), m, cfg)?;
        if outcome.value < best_value {
            best_value = outcome.value;
            best = Some(f);
        }
        starts.push(outcome);
    }
    let minimizer_f = best.unwrap_or(base);
    Ok(NuResult {
        value: best_value,
        constraint_error: constraint_error(geo, &minimizer_f),
        minimizer_f,
        starts,
        unbounded: best_value < cfg.floor,
    })
}
