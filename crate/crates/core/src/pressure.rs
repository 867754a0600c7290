//! Elliptic pressure equation `(−Δ_g + (m + 1)) p = |Rc + m g|²_g / m`.

use thiserror::Error;

use crate::cg::{self, CgError, CgOptions, WeightedElliptic};
use crate::geometry::Geometry;
use crate::grid::ScalarField;
use crate::scalar::Real;
use crate::tensor::{GeometryError, MetricField, SymTensorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PressureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("pressure solve failed: {0}")]
    Solver(#[from] CgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureSolve<T> {
    pub p: ScalarField<T>,
    /// `‖(−Δ + m + 1) p − rhs‖₂ / ‖rhs‖₂` (absolute if `rhs ≈ 0`).
    pub residual_norm: T,
    pub iterations: usize,
    pub min_p: T,
}

/// `Rc + m g`.
pub fn shifted_ricci<T: Real>(
    metric: &MetricField<T>,
    ricci: &SymTensorField<T>,
    m: usize,
) -> SymTensorField<T> {
    ricci.axpy(T::from_usize_lossy(m), metric.tensor())
}

/// Right-hand side `|Rc + m g|² / m`.
pub fn pressure_rhs<T: Real>(
    geo: &Geometry<T>,
    ricci: &SymTensorField<T>,
    m: usize,
) -> ScalarField<T> {
    let mt = T::from_usize_lossy(m);
    geo.tensor_norm_sq(&shifted_ricci(geo.metric(), ricci, m))
        .map(|v| v / mt)
}

/// Solves `(−Δ_g + (m + 1)) p = rhs` for an arbitrary right-hand side.
pub fn solve_with_rhs<T: Real>(
    geo: &Geometry<T>,
    rhs: &ScalarField<T>,
    m: usize,
    guess: Option<&ScalarField<T>>,
    opts: &CgOptions,
) -> Result<PressureSolve<T>, PressureError> {
    let op = operator(geo, m);
    let out = cg::solve(&op, &rhs.values, guess.map(|g| g.values.as_slice()), opts)?;
    let p = ScalarField::new(out.solution);
    Ok(PressureSolve {
        min_p: p.min(),
        p,
        residual_norm: out.residual,
        iterations: out.iterations,
    })
}

/// Pressure of the metric `g` with `m = dim − 1`.
pub fn solve_pressure<T: Real>(
    g: &MetricField<T>,
    opts: &CgOptions,
) -> Result<PressureSolve<T>, PressureError> {
    let geo = Geometry::new(g)?;
    let m = g.dim() - 1;
    let rhs = pressure_rhs(&geo, &geo.ricci(), m);
    solve_with_rhs(&geo, &rhs, m, None, opts)
}

/// The discrete `(−Δ_g + (m + 1))` in weighted form. The Laplacian is the
/// divergence-form one plus the odd-even correction of
/// [`WeightedElliptic::with_compact_correction`]; without it, odd-even modes
/// of the right-hand side pass into `p` undamped and feed back into the
/// curvature through the flow.
pub fn operator<T: Real>(geo: &Geometry<T>, m: usize) -> WeightedElliptic<'_, T> {
    let shift = T::from_usize_lossy(m + 1);
    WeightedElliptic::new(geo, T::one(), vec![shift; geo.grid().nodes()]).with_compact_correction()
}

/// Applies the discrete `(−Δ_g + (m + 1))` to `p`.
pub fn apply_operator<T: Real>(geo: &Geometry<T>, p: &ScalarField<T>, m: usize) -> ScalarField<T> {
    let mut y = vec![T::zero(); p.len()];
    operator(geo, m).apply(&p.values, &mut y);
    ScalarField::new(y.iter().zip(geo.sqrt_det()).map(|(v, s)| *v / *s).collect())
}
