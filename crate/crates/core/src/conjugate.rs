//! Conjugate heat equation `∂t u = −Δ_{g(t)} u + (m + 1) p u` along a
//! stored trajectory.
//!
//! The equation is well posed backward in time. In `τ = T − t` it reads
//! `∂τ u = Δu − (m + 1) p u`, which is integrated with classical RK4 on the
//! trajectory's own time grid. Metric and pressure at the half-step stage
//! times come from cubic Lagrange interpolation of the stored snapshots.

use thiserror::Error;

use crate::flow::{FlowKind, FlowTrajectory};
use crate::geometry::Geometry;
use crate::grid::ScalarField;
use crate::scalar::Real;
use crate::tensor::{GeometryError, MetricField, SymTensorField};

/// Values below this count as a loss of positivity.
pub const POSITIVITY_FLOOR: f64 = -1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConjugateError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("field has {got} nodes, trajectory grid has {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("terminal data must be positive (min {0:e})")]
    NonPositiveTerminal(f64),
    #[error("u lost positivity at time index {index} (min {min:e})")]
    PositivityLoss { index: usize, min: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateHeatSolution<T> {
    /// `u` at every trajectory time index.
    pub u: Vec<ScalarField<T>>,
    pub terminal_index: usize,
    /// `∫ u dμ_{g(t)}` at every time index.
    pub masses: Vec<T>,
}

impl<T: Real> ConjugateHeatSolution<T> {
    /// `max_t |mass(t) − mass(T)| / |mass(T)|`.
    pub fn max_mass_drift(&self) -> T {
        let reference = self.masses[self.terminal_index];
        self.masses
            .iter()
            .map(|&m| ((m - reference) / reference).abs())
            .fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.u.iter().map(|u| u.min()).fold(T::infinity(), T::min)
    }
}

/// Lagrange weights at `x` for the nodes `x0, x0 + 1, …`.
fn lagrange_weights<T: Real>(x: T, x0: usize, count: usize) -> Vec<T> {
    (0..count)
        .map(|i| {
            let xi = T::from_usize_lossy(x0 + i);
            (0..count).filter(|&j| j != i).fold(T::one(), |w, j| {
                let xj = T::from_usize_lossy(x0 + j);
                w * (x - xj) / (xi - xj)
            })
        })
        .collect()
}

/// Metric and pressure interpolated at fractional time index `x`.
struct Snapshot<T> {
    geo: Geometry<T>,
    p: ScalarField<T>,
}

struct Interpolator<'a, T> {
    traj: &'a FlowTrajectory<T>,
}

impl<'a, T: Real> Interpolator<'a, T> {
    fn at_index(&self, k: usize) -> Result<Snapshot<T>, GeometryError> {
        let s = &self.traj.states[k];
        Ok(Snapshot {
            geo: Geometry::new(&s.g)?,
            p: s.p.clone(),
        })
    }

    /// Cubic interpolation at `k + ½`, with the four-point stencil shifted
    /// to stay inside the trajectory.
    fn at_midpoint(&self, k: usize) -> Result<Snapshot<T>, GeometryError> {
        let n = self.traj.len();
        let count = n.min(4);
        let x0 = k.saturating_sub(1).min(n - count);
        let w = lagrange_weights(T::from_usize_lossy(k) + T::lit(0.5), x0, count);
        let first = &self.traj.states[x0];
        let mut g = vec![T::zero(); first.g.tensor().data.len()];
        let mut p = vec![T::zero(); first.p.len()];
        for (i, &wi) in w.iter().enumerate() {
            let s = &self.traj.states[x0 + i];
            for (a, &b) in g.iter_mut().zip(&s.g.tensor().data) {
                *a += wi * b;
            }
            for (a, &b) in p.iter_mut().zip(&s.p.values) {
                *a += wi * b;
            }
        }
        let metric = MetricField::new(
            first.g.grid().clone(),
            SymTensorField::from_data(first.g.dim(), g),
        )?;
        Ok(Snapshot {
            geo: Geometry::new(&metric)?,
            p: ScalarField::new(p),
        })
    }
}

/// `Δu − (m + 1) p u`, the right-hand side in backward time.
fn backward_rate<T: Real>(snap: &Snapshot<T>, u: &ScalarField<T>, m: usize) -> ScalarField<T> {
    let c = T::from_usize_lossy(m + 1);
    let lap = snap.geo.laplace_beltrami(u);
    ScalarField::new(
        lap.values
            .iter()
            .zip(&snap.p.values)
            .zip(&u.values)
            .map(|((&l, &p), &v)| l - c * p * v)
            .collect(),
    )
}

fn axpy<T: Real>(u: &ScalarField<T>, s: T, k: &ScalarField<T>) -> ScalarField<T> {
    u.zip_map(k, |a, b| a + s * b)
}

fn rk4_step<T: Real>(
    u: &ScalarField<T>,
    h: T,
    m: usize,
    start: &Snapshot<T>,
    mid: &Snapshot<T>,
    end: &Snapshot<T>,
    sign: T,
) -> ScalarField<T> {
    let rate = |s: &Snapshot<T>, v: &ScalarField<T>| backward_rate(s, v, m).map(|x| sign * x);
    let half = h * T::lit(0.5);
    let k1 = rate(start, u);
    let k2 = rate(mid, &axpy(u, half, &k1));
    let k3 = rate(mid, &axpy(u, half, &k2));
    let k4 = rate(end, &axpy(u, h, &k3));
    let sixth = h / T::lit(6.0);
    ScalarField::new(
        (0..u.len())
            .map(|i| {
                u.values[i]
                    + sixth
                        * (k1.values[i] + T::lit(2.0) * (k2.values[i] + k3.values[i]) + k4.values[i])
            })
            .collect(),
    )
}

fn check_shape<T: Real>(traj: &FlowTrajectory<T>, u: &ScalarField<T>) -> Result<(), ConjugateError> {
    if traj.is_empty() {
        return Err(ConjugateError::EmptyTrajectory);
    }
    let expected = traj.grid().nodes();
    if u.len() != expected {
        return Err(ConjugateError::GridMismatch {
            expected,
            got: u.len(),
        });
    }
    Ok(())
}

fn masses<T: Real>(traj: &FlowTrajectory<T>, u: &[ScalarField<T>]) -> Result<Vec<T>, GeometryError> {
    traj.states
        .iter()
        .zip(u)
        .map(|(s, u)| Ok(Geometry::new(&s.g)?.integrate(u)))
        .collect()
}

/// Solves backward from `u_terminal` at the last trajectory time.
pub fn solve_backward<T: Real>(
    traj: &FlowTrajectory<T>,
    u_terminal: &ScalarField<T>,
) -> Result<ConjugateHeatSolution<T>, ConjugateError> {
    check_shape(traj, u_terminal)?;
    let min = u_terminal.min();
    if !(min > T::zero()) {
        return Err(ConjugateError::NonPositiveTerminal(min.as_f64()));
    }
    let n = traj.len();
    let interp = Interpolator { traj };
    let fixed = traj.kind == FlowKind::Static;
    let mut u = vec![u_terminal.clone(); n];
    let mut end = interp.at_index(n - 1)?;
    for k in (0..n - 1).rev() {
        let (mid, start) = if fixed {
            (interp.at_index(k)?, interp.at_index(k)?)
        } else {
            (interp.at_midpoint(k)?, interp.at_index(k)?)
        };
        let next = rk4_step(&u[k + 1], traj.dt, traj.m, &end, &mid, &start, T::one());
        let min = next.min();
        if !(min > T::lit(POSITIVITY_FLOOR)) {
            return Err(ConjugateError::PositivityLoss {
                index: k,
                min: min.as_f64(),
            });
        }
        u[k] = next;
        end = start;
    }
    let masses = masses(traj, &u)?;
    Ok(ConjugateHeatSolution {
        u,
        terminal_index: n - 1,
        masses,
    })
}

/// Integrates `∂t u = −Δu + (m + 1) p u` forward from `u0` at the first
/// trajectory time with the same stages as [`solve_backward`]. This is the
/// ill-posed direction; it is only meaningful for smooth data over short
/// times and exists to check that the backward solve can be undone.
pub fn solve_forward<T: Real>(
    traj: &FlowTrajectory<T>,
    u0: &ScalarField<T>,
) -> Result<Vec<ScalarField<T>>, ConjugateError> {
    check_shape(traj, u0)?;
    let n = traj.len();
    let interp = Interpolator { traj };
    let fixed = traj.kind == FlowKind::Static;
    let mut u = vec![u0.clone(); n];
    let mut start = interp.at_index(0)?;
    for k in 0..n - 1 {
        let (mid, end) = if fixed {
            (interp.at_index(k)?, interp.at_index(k + 1)?)
        } else {
            (interp.at_midpoint(k)?, interp.at_index(k + 1)?)
        };
        u[k + 1] = rk4_step(&u[k], traj.dt, traj.m, &start, &mid, &end, -T::one());
        start = end;
    }
    Ok(u)
}
