//! Entropy functionals `E = ∫ u ln u dμ` and
//! `W = ∫ (|∇ ln u|² + 2(m + 1) ln u) u dμ`, their predicted time derivatives
//! along the flow, and per-time reports comparing those predictions with
//! finite differences of the computed series.

use thiserror::Error;

use crate::conjugate::ConjugateHeatSolution;
use crate::flow::FlowTrajectory;
use crate::geometry::Geometry;
use crate::grid::ScalarField;
use crate::pressure::shifted_ricci;
use crate::scalar::Real;
use crate::tensor::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("density must be positive (min {min:e} at node {node})")]
    NonPositive { node: usize, min: f64 },
    #[error("solution has {solution} time levels, trajectory has {trajectory}")]
    LengthMismatch { trajectory: usize, solution: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn check_positive<T: Real>(u: &ScalarField<T>) -> Result<(), FunctionalError> {
    let (node, min) = u
        .values
        .iter()
        .enumerate()
        .fold((0, T::infinity()), |(k, m), (i, &v)| if v < m { (i, v) } else { (k, m) });
    if min > T::zero() && min.is_finite() {
        Ok(())
    } else {
        Err(FunctionalError::NonPositive {
            node,
            min: min.to_f64().unwrap_or(f64::NAN),
        })
    }
}

fn ln<T: Real>(u: &ScalarField<T>) -> ScalarField<T> {
    u.map(T::ln)
}

/// `∫ u ln u dμ`.
pub fn entropy_e<T: Real>(geo: &Geometry<T>, u: &ScalarField<T>) -> Result<T, FunctionalError> {
    check_positive(u)?;
    Ok(geo.integrate(&u.map(|v| v * v.ln())))
}

/// `∫ (|∇ ln u|² + 2(m + 1) ln u) u dμ`.
pub fn entropy_w<T: Real>(geo: &Geometry<T>, u: &ScalarField<T>, m: usize) -> Result<T, FunctionalError> {
    check_positive(u)?;
    let c = T::lit(2.0) * T::from_usize_lossy(m + 1);
    let l = ln(u);
    let g2 = geo.gradient_sq(&l);
    let integrand = ScalarField::new(
        (0..u.len())
            .map(|k| (g2.values[k] + c * l.values[k]) * u.values[k])
            .collect(),
    );
    Ok(geo.integrate(&integrand))
}

/// The same functional in terms of `f = −ln u`:
/// `∫ (|∇f|² − 2(m + 1) f) e^{−f} dμ`.
pub fn entropy_w_f<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>, m: usize) -> T {
    let c = T::lit(2.0) * T::from_usize_lossy(m + 1);
    let g2 = geo.gradient_sq(f);
    let integrand = ScalarField::new(
        (0..f.len())
            .map(|k| (g2.values[k] - c * f.values[k]) * (-f.values[k]).exp())
            .collect(),
    );
    geo.integrate(&integrand)
}

/// `∫ (|∇ ln u|² + (m + 1) p) u dμ`.
pub fn de_dt_analytic<T: Real>(
    geo: &Geometry<T>,
    u: &ScalarField<T>,
    p: &ScalarField<T>,
    m: usize,
) -> Result<T, FunctionalError> {
    check_positive(u)?;
    let c = T::from_usize_lossy(m + 1);
    let g2 = geo.gradient_sq(&ln(u));
    let integrand = ScalarField::new(
        (0..u.len())
            .map(|k| (g2.values[k] + c * p.values[k]) * u.values[k])
            .collect(),
    );
    Ok(geo.integrate(&integrand))
}

/// The four integrals whose sum is the predicted `dW/dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WRate<T> {
    /// `2 ∫ |Rc + m g − ∇∇ ln u|² u`
    /// `(2/m) ∫ |Rc + m g|² u`
    /// `2 ∫ |∇ ln u|² p u`
    /// `2 ∫ |∇ ln u|² u`
    pub terms: [T; 4],
}

impl<T: Real> WRate<T> {
    pub fn total(&self) -> T {
        self.terms.iter().copied().sum()
    }

    pub fn min_term(&self) -> T {
        self.terms.iter().copied().fold(T::infinity(), T::min)
    }
}

pub fn dw_dt_analytic<T: Real>(
    geo: &Geometry<T>,
    u: &ScalarField<T>,
    p: &ScalarField<T>,
    m: usize,
) -> Result<WRate<T>, FunctionalError> {
    check_positive(u)?;
    let two = T::lit(2.0);
    let l = ln(u);
    let a = shifted_ricci(geo.metric(), &geo.ricci(), m);
    let hess = geo.hessian(&l);
    let b = a.axpy(-T::one(), &hess);
    let nb = geo.tensor_norm_sq(&b);
    let na = geo.tensor_norm_sq(&a);
    let g2 = geo.gradient_sq(&l);
    let weighted = |f: &dyn Fn(usize) -> T| {
        geo.integrate(&ScalarField::new((0..u.len()).map(|k| f(k) * u.values[k]).collect()))
    };
    Ok(WRate {
        terms: [
            two * weighted(&|k| nb.values[k]),
            two / T::from_usize_lossy(m) * weighted(&|k| na.values[k]),
            two * weighted(&|k| g2.values[k] * p.values[k]),
            two * weighted(&|k| g2.values[k]),
        ],
    })
}

/// Both sides of `W(g, e^{−f}) ≥ ∫ (|∇f|² + f) e^{−f} dμ − (2m + 3) e^{−1} vol`,
/// which follows pointwise from `x e^{−x} ≤ e^{−1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound<T> {
    pub w: T,
    pub bound: T,
}

impl<T: Real> LowerBound<T> {
    pub fn holds(&self) -> bool {
        self.w >= self.bound
    }
}

pub fn lower_bound<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>, m: usize) -> LowerBound<T> {
    let g2 = geo.gradient_sq(f);
    let first = geo.integrate(&ScalarField::new(
        (0..f.len())
            .map(|k| (g2.values[k] + f.values[k]) * (-f.values[k]).exp())
            .collect(),
    ));
    let c = T::from_usize_lossy(2 * m + 3) * (-T::one()).exp();
    LowerBound {
        w: entropy_w_f(geo, f, m),
        bound: first - c * geo.volume(),
    }
}

/// Derivative of a uniformly sampled series: centred in the interior,
/// second-order one-sided at the ends.
pub fn finite_difference<T: Real>(values: &[T], dt: T) -> Vec<T> {
    let n = values.len();
    let two_dt = T::lit(2.0) * dt;
    match n {
        0 => Vec::new(),
        1 => vec![T::zero()],
        2 => {
            let d = (values[1] - values[0]) / dt;
            vec![d, d]
        }
        _ => (0..n)
            .map(|k| {
                if k == 0 {
                    (-T::lit(3.0) * values[0] + T::lit(4.0) * values[1] - values[2]) / two_dt
                } else if k == n - 1 {
                    (T::lit(3.0) * values[n - 1] - T::lit(4.0) * values[n - 2] + values[n - 3])
                        / two_dt
                } else {
                    (values[k + 1] - values[k - 1]) / two_dt
                }
            })
            .collect(),
    }
}

/// One CSV row of the harness output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow<T> {
    pub t: T,
    pub e: T,
    pub w: T,
    pub de_fd: T,
    pub de_analytic: T,
    pub dw_fd: T,
    pub dw_analytic: T,
    pub terms: [T; 4],
    pub min_p: T,
    pub constraint_drift: T,
    pub mass: T,
    pub min_metric_eig: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalReport<T> {
    pub rows: Vec<ReportRow<T>>,
}

impl<T: Real> FunctionalReport<T> {
    /// Largest `|fd − analytic| / |analytic|` over interior rows for the
    /// selected pair.
    fn max_interior_rel(&self, pick: impl Fn(&ReportRow<T>) -> (T, T)) -> T {
        let n = self.rows.len();
        if n < 3 {
            return T::zero();
        }
        self.rows[1..n - 1]
            .iter()
            .map(|r| {
                let (fd, an) = pick(r);
                (fd - an).abs() / an.abs().max(T::lit(1e-300))
            })
            .fold(T::zero(), T::max)
    }

    pub fn max_de_rel_error(&self) -> T {
        self.max_interior_rel(|r| (r.de_fd, r.de_analytic))
    }

    pub fn max_dw_rel_error(&self) -> T {
        self.max_interior_rel(|r| (r.dw_fd, r.dw_analytic))
    }

    pub fn min_de_analytic(&self) -> T {
        self.rows.iter().map(|r| r.de_analytic).fold(T::infinity(), T::min)
    }

    pub fn min_w_term(&self) -> T {
        self.rows
            .iter()
            .flat_map(|r| r.terms)
            .fold(T::infinity(), T::min)
    }

    /// Largest step decrease of a series beyond `rel·|x| + abs` (zero when
    /// the series is nondecreasing within budget).
    fn worst_decrease(&self, pick: impl Fn(&ReportRow<T>) -> T, rel: T, abs: T) -> T {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (pick(&w[0]), pick(&w[1]));
                let budget = rel * a.abs() + abs;
                (a - b - budget).max(T::zero())
            })
            .fold(T::zero(), T::max)
    }

    pub fn e_violation(&self, rel: T, abs: T) -> T {
        self.worst_decrease(|r| r.e, rel, abs)
    }

    pub fn w_violation(&self, rel: T, abs: T) -> T {
        self.worst_decrease(|r| r.w, rel, abs)
    }

    pub fn max_mass_drift(&self) -> T {
        let Some(last) = self.rows.last() else {
            return T::zero();
        };
        self.rows
            .iter()
            .map(|r| ((r.mass - last.mass) / last.mass).abs())
            .fold(T::zero(), T::max)
    }
}

/// Evaluates every functional at every trajectory time.
pub fn report<T: Real>(
    traj: &FlowTrajectory<T>,
    sol: &ConjugateHeatSolution<T>,
) -> Result<FunctionalReport<T>, FunctionalError> {
    if traj.len() != sol.u.len() {
        return Err(FunctionalError::LengthMismatch {
            trajectory: traj.len(),
            solution: sol.u.len(),
        });
    }
    let m = traj.m;
    let mut rows = Vec::with_capacity(traj.len());
    for (state, u) in traj.states.iter().zip(&sol.u) {
        let geo = Geometry::new(&state.g)?;
        let rate = dw_dt_analytic(&geo, u, &state.p, m)?;
        rows.push(ReportRow {
            t: state.t,
            e: entropy_e(&geo, u)?,
            w: entropy_w(&geo, u, m)?,
            de_fd: T::zero(),
            de_analytic: de_dt_analytic(&geo, u, &state.p, m)?,
            dw_fd: T::zero(),
            dw_analytic: rate.total(),
            terms: rate.terms,
            min_p: state.diagnostics.min_p,
            constraint_drift: state.diagnostics.constraint_drift,
            mass: geo.integrate(u),
            min_metric_eig: state.diagnostics.min_metric_eig,
        });
    }
    let e: Vec<T> = rows.iter().map(|r| r.e).collect();
    let w: Vec<T> = rows.iter().map(|r| r.w).collect();
    for ((row, de), dw) in rows
        .iter_mut()
        .zip(finite_difference(&e, traj.dt))
        .zip(finite_difference(&w, traj.dt))
    {
        row.de_fd = de;
        row.dw_fd = dw;
    }
    Ok(FunctionalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_is_exact_on_quadratics() {
        let dt = 0.1;
        let xs: Vec<f64> = (0..6).map(|k| 2.0 + 3.0 * (k as f64 * dt).powi(2)).collect();
        for (k, d) in finite_difference(&xs, dt).iter().enumerate() {
            assert!((d - 6.0 * k as f64 * dt).abs() < 1e-12);
        }
    }
}
