//! Pointwise identities behind the monotonicity of `W`, evaluated on stored
//! trajectories with the grid stencils.
//!
//! With `u` a conjugate heat solution and `f = −ln u`:
//!
//! * `w = 2Δf − |∇f|² − 2(m + 1) f` and `v = w e^{−f}`,
//! * `□* = −∂t − Δ + (m + 1) p`,
//! * `□* v = −2|Rc + m g + ∇∇f|² u − (2/m)|Rc + m g|² u − 2|∇f|² u
//!   − 2|∇f|² p u + 4 div(p ∇u)`,
//! * the parabolic Bochner formula for `|∇f|²`,
//! * the variation of `Δf` under the flow.
//!
//! Time derivatives are centred differences on the trajectory grid, so only
//! interior time indices are accepted.

use thiserror::Error;

use crate::conjugate::ConjugateHeatSolution;
use crate::flow::{FlowKind, FlowTrajectory};
use crate::geometry::Geometry;
use crate::grid::ScalarField;
use crate::pressure::shifted_ricci;
use crate::scalar::Real;
use crate::tensor::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentityError {
    #[error("time index {index} has no centred difference (trajectory has {len} states)")]
    BoundaryIndex { index: usize, len: usize },
    #[error("field has {got} time levels, trajectory has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("density must be positive (min {0:e})")]
    NonPositive(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One scalar field per trajectory time index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimeField<T> {
    pub values: Vec<ScalarField<T>>,
}

impl<T: Real> SpacetimeField<T> {
    /// `f = −ln u` at every time.
    pub fn log_density(sol: &ConjugateHeatSolution<T>) -> Result<Self, IdentityError> {
        let min = sol.min_value();
        if !(min > T::zero()) {
            return Err(IdentityError::NonPositive(min.as_f64()));
        }
        Ok(Self {
            values: sol.u.iter().map(|u| u.map(|v| -v.ln())).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `sup |lhs − rhs|` together with the size of the terms involved, so
/// callers can judge the residual relative to the quantities it compares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual<T> {
    pub sup: T,
    pub scale: T,
}

impl<T: Real> Residual<T> {
    fn between(lhs: &ScalarField<T>, rhs: &ScalarField<T>) -> Self {
        Self {
            sup: lhs.zip_map(rhs, |a, b| a - b).sup_norm(),
            scale: lhs.sup_norm().max(rhs.sup_norm()),
        }
    }

    pub fn relative(&self) -> T {
        if self.scale > T::zero() {
            self.sup / self.scale
        } else {
            self.sup
        }
    }
}

/// `2Δf − |∇f|² − 2(m + 1) f`.
pub fn assemble_w<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>, m: usize) -> ScalarField<T> {
    let c = T::lit(2.0) * T::from_usize_lossy(m + 1);
    let lap = geo.laplace_beltrami(f);
    let g2 = geo.gradient_sq(f);
    ScalarField::new(
        (0..f.len())
            .map(|k| T::lit(2.0) * lap.values[k] - g2.values[k] - c * f.values[k])
            .collect(),
    )
}

/// `w e^{−f}`.
pub fn assemble_v<T: Real>(geo: &Geometry<T>, f: &ScalarField<T>, m: usize) -> ScalarField<T> {
    assemble_w(geo, f, m).zip_map(f, |w, f| w * (-f).exp())
}

fn check_interior<T: Real>(
    traj: &FlowTrajectory<T>,
    field: &SpacetimeField<T>,
    idx: usize,
) -> Result<(), IdentityError> {
    if field.len() != traj.len() {
        return Err(IdentityError::LengthMismatch {
            expected: traj.len(),
            got: field.len(),
        });
    }
    if idx == 0 || idx + 1 >= traj.len() {
        return Err(IdentityError::BoundaryIndex {
            index: idx,
            len: traj.len(),
        });
    }
    Ok(())
}

fn metric_moves<T: Real>(traj: &FlowTrajectory<T>) -> T {
    match traj.kind {
        FlowKind::Crf => T::one(),
        FlowKind::Static => T::zero(),
    }
}

fn centred<T: Real>(values: &[ScalarField<T>], idx: usize, dt: T) -> ScalarField<T> {
    let inv = T::one() / (T::lit(2.0) * dt);
    values[idx + 1].zip_map(&values[idx - 1], |a, b| (a - b) * inv)
}

/// `□* h = −∂t h − Δ h + (m + 1) p h` at time index `idx`.
pub fn apply_conjugate_op<T: Real>(
    traj: &FlowTrajectory<T>,
    h: &SpacetimeField<T>,
    idx: usize,
) -> Result<ScalarField<T>, IdentityError> {
    check_interior(traj, h, idx)?;
    let state = &traj.states[idx];
    let geo = Geometry::new(&state.g)?;
    let c = T::from_usize_lossy(traj.m + 1);
    let dt = centred(&h.values, idx, traj.dt);
    let lap = geo.laplace_beltrami(&h.values[idx]);
    Ok(ScalarField::new(
        (0..dt.len())
            .map(|k| -dt.values[k] - lap.values[k] + c * state.p.values[k] * h.values[idx].values[k])
            .collect(),
    ))
}

/// The five-term right-hand side of the `□* v` formula.
pub fn conjugate_v_rhs<T: Real>(
    geo: &Geometry<T>,
    u: &ScalarField<T>,
    p: &ScalarField<T>,
    m: usize,
) -> Result<ScalarField<T>, IdentityError> {
    let min = u.min();
    if !(min > T::zero()) {
        return Err(IdentityError::NonPositive(min.as_f64()));
    }
    let two = T::lit(2.0);
    let f = u.map(|v| -v.ln());
    let a = shifted_ricci(geo.metric(), &geo.ricci(), m);
    let b = a.axpy(T::one(), &geo.hessian(&f));
    let nb = geo.tensor_norm_sq(&b);
    let na = geo.tensor_norm_sq(&a);
    let g2 = geo.gradient_sq(&f);
    let div = geo.divergence_vec(&geo.gradient_vector(u).scale_nodes(p));
    let inv_m = T::one() / T::from_usize_lossy(m);
    Ok(ScalarField::new(
        (0..u.len())
            .map(|k| {
                let uk = u.values[k];
                -two * nb.values[k] * uk - two * inv_m * na.values[k] * uk - two * g2.values[k] * uk
                    - two * g2.values[k] * p.values[k] * uk
                    + T::lit(4.0) * div.values[k]
            })
            .collect(),
    ))
}

/// `v` at every time index of a conjugate heat solution.
pub fn v_field<T: Real>(
    traj: &FlowTrajectory<T>,
    f: &SpacetimeField<T>,
) -> Result<SpacetimeField<T>, IdentityError> {
    let values = traj
        .states
        .iter()
        .zip(&f.values)
        .map(|(s, f)| Ok(assemble_v(&Geometry::new(&s.g)?, f, traj.m)))
        .collect::<Result<_, IdentityError>>()?;
    Ok(SpacetimeField { values })
}

/// `□* v` against the five-term formula at `idx`.
pub fn check_conjugate_v<T: Real>(
    traj: &FlowTrajectory<T>,
    sol: &ConjugateHeatSolution<T>,
    idx: usize,
) -> Result<Residual<T>, IdentityError> {
    let f = SpacetimeField::log_density(sol)?;
    let v = v_field(traj, &f)?;
    let lhs = apply_conjugate_op(traj, &v, idx)?;
    let state = &traj.states[idx];
    let rhs = conjugate_v_rhs(&Geometry::new(&state.g)?, &sol.u[idx], &state.p, traj.m)?;
    Ok(Residual::between(&lhs, &rhs))
}

/// `(∂t + Δ)|∇f|²` against
/// `4 Rc(∇f, ∇f) + 2|∇∇f|² + 2(p + m)|∇f|² + 2⟨∇|∇f|², ∇f⟩ − 2(m + 1)⟨∇p, ∇f⟩`,
/// valid when `∂t f + Δf − |∇f|² + (m + 1) p = 0`. On static trajectories the
/// terms produced by `∂t g` (`2 Rc(∇f, ∇f) + 2(p + m)|∇f|²`) are dropped.
pub fn check_bochner<T: Real>(
    traj: &FlowTrajectory<T>,
    f: &SpacetimeField<T>,
    idx: usize,
) -> Result<Residual<T>, IdentityError> {
    check_interior(traj, f, idx)?;
    let grad_sq = |k: usize| -> Result<ScalarField<T>, IdentityError> {
        Ok(Geometry::new(&traj.states[k].g)?.gradient_sq(&f.values[k]))
    };
    let series = [grad_sq(idx - 1)?, ScalarField::new(Vec::new()), grad_sq(idx + 1)?];
    let dt = centred(&series, 1, traj.dt);

    let state = &traj.states[idx];
    let geo = Geometry::new(&state.g)?;
    let m = traj.m;
    let fi = &f.values[idx];
    let g2 = geo.gradient_sq(fi);
    let lap = geo.laplace_beltrami(&g2);
    let lhs = dt.zip_map(&lap, |a, b| a + b);

    let ricci = geo.ricci();
    let hess = geo.hessian(fi);
    let hess_sq = geo.tensor_norm_sq(&hess);
    let grad = geo.gradient_vector(fi);
    let cross = geo.grad_dot(&g2, fi);
    let pf = geo.grad_dot(&state.p, fi);
    let n = geo.dim();
    let two = T::lit(2.0);
    // The metric does not move on static trajectories.
    let moving = metric_moves(traj);
    let mt = T::from_usize_lossy(m);
    let c = T::from_usize_lossy(m + 1);
    let rhs = ScalarField::new(
        (0..fi.len())
            .map(|k| {
                let d = &grad.data[k * n..(k + 1) * n];
                let mut rc = T::zero();
                for i in 0..n {
                    for j in 0..n {
                        rc += ricci.get(k, i, j) * d[i] * d[j];
                    }
                }
                let variation = two * rc + two * (state.p.values[k] + mt) * g2.values[k];
                moving * variation
                    + two * rc
                    + two * hess_sq.values[k]
                    + two * cross.values[k]
                    - two * c * pf.values[k]
            })
            .collect(),
    );
    Ok(Residual::between(&lhs, &rhs))
}

/// `∂t Δf` against `Δ ∂t f + 2 Rc·∇∇f + 2(p + m)Δf − (m − 1)⟨∇p, ∇f⟩`,
/// which holds for any `f` along the flow. On static trajectories only
/// `∂t Δf = Δ ∂t f` remains.
pub fn check_laplacian_variation<T: Real>(
    traj: &FlowTrajectory<T>,
    f: &SpacetimeField<T>,
    idx: usize,
) -> Result<Residual<T>, IdentityError> {
    check_interior(traj, f, idx)?;
    let lap_at = |k: usize| -> Result<ScalarField<T>, IdentityError> {
        Ok(Geometry::new(&traj.states[k].g)?.laplace_beltrami(&f.values[k]))
    };
    let series = [lap_at(idx - 1)?, ScalarField::new(Vec::new()), lap_at(idx + 1)?];
    let lhs = centred(&series, 1, traj.dt);

    let state = &traj.states[idx];
    let geo = Geometry::new(&state.g)?;
    let m = traj.m;
    let fi = &f.values[idx];
    let ft = centred(&f.values, idx, traj.dt);
    let lap_ft = geo.laplace_beltrami(&ft);
    let lap_f = geo.laplace_beltrami(fi);
    let ricci = geo.ricci();
    let hess = geo.hessian(fi);
    // ⟨Rc, ∇∇f⟩_g by polarization.
    let plus = geo.tensor_norm_sq(&ricci.axpy(T::one(), &hess));
    let minus = geo.tensor_norm_sq(&ricci.axpy(-T::one(), &hess));
    let pf = geo.grad_dot(&state.p, fi);
    let (two, mt) = (T::lit(2.0), T::from_usize_lossy(m));
    let moving = metric_moves(traj);
    let quarter = T::lit(0.25);
    let rhs = ScalarField::new(
        (0..fi.len())
            .map(|k| {
                let contraction = quarter * (plus.values[k] - minus.values[k]);
                lap_ft.values[k]
                    + moving
                        * (two * contraction + two * (state.p.values[k] + mt) * lap_f.values[k]
                            - (mt - T::one()) * pf.values[k])
            })
            .collect(),
    );
    Ok(Residual::between(&lhs, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::tensor::MetricField;

    #[test]
    fn w_of_a_constant_is_affine_in_the_constant() {
        let grid = GridSpec::cubic(3, 8, 1.0).unwrap();
        let geo = Geometry::new(&MetricField::flat(&grid)).unwrap();
        let a = 0.7f64;
        let f = ScalarField::constant(&grid, a);
        let w = assemble_w(&geo, &f, 2);
        let v = assemble_v(&geo, &f, 2);
        assert!(w.values.iter().all(|x| (x + 6.0 * a).abs() < 1e-12));
        assert!(v.values.iter().all(|x| (x + 6.0 * a * (-a).exp()).abs() < 1e-12));
    }
}
