//! Explicit RK4 integration of the conformal Ricci flow
//! `∂t g = −2 (Rc + (p + m) g)` with a pressure solve at every stage.
//!
//! Every accepted state keeps its metric, pressure and diagnostics so that
//! the conjugate heat equation can later be solved backward along the same
//! time grid.

use thiserror::Error;

use crate::cg::CgOptions;
use crate::geometry::Geometry;
use crate::grid::{GridSpec, ScalarField};
use crate::pressure::{self, PressureError};
use crate::scalar::Real;
use crate::tensor::{GeometryError, MetricField, SymTensorField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    pub min_p: T,
    /// `sup |R + m (m + 1)|`.
    pub constraint_drift: T,
    pub min_metric_eig: T,
    pub pressure_residual: T,
    pub pressure_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState<T> {
    pub t: T,
    pub g: MetricField<T>,
    pub p: ScalarField<T>,
    pub diagnostics: Diagnostics<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    /// Metric evolved by the flow.
    Crf,
    /// Metric and pressure held fixed (synthetic backgrounds for tests).
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowStatus {
    Complete,
    Aborted { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory<T> {
    pub states: Vec<FlowState<T>>,
    pub dt: T,
    pub final_time: T,
    pub m: usize,
    pub kind: FlowKind,
    pub status: FlowStatus,
}

impl<T: Real> FlowTrajectory<T> {
    /// A trajectory that holds `g` and `p` fixed over `steps` steps of size
    /// `dt`. Diagnostics are evaluated once on `g`.
    pub fn fixed(
        g: MetricField<T>,
        p: ScalarField<T>,
        m: usize,
        dt: T,
        steps: usize,
    ) -> Result<Self, GeometryError> {
        let geo = Geometry::new(&g)?;
        let target = T::from_usize_lossy(m * (m + 1));
        let diagnostics = Diagnostics {
            min_p: p.min(),
            constraint_drift: geo.scalar_curvature().map(|r| r + target).sup_norm(),
            min_metric_eig: g.min_eigenvalue(),
            pressure_residual: T::zero(),
            pressure_iterations: 0,
        };
        let states = (0..=steps)
            .map(|k| FlowState {
                t: dt * T::from_usize_lossy(k),
                g: g.clone(),
                p: p.clone(),
                diagnostics,
            })
            .collect();
        Ok(Self {
            states,
            dt,
            final_time: dt * T::from_usize_lossy(steps),
            m,
            kind: FlowKind::Static,
            status: FlowStatus::Complete,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.states[0].g.grid()
    }

    pub fn times(&self) -> Vec<T> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.status == FlowStatus::Complete
    }

    /// Largest constraint drift over the stored states.
    pub fn max_constraint_drift(&self) -> T {
        self.states
            .iter()
            .map(|s| s.diagnostics.constraint_drift)
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig<T> {
    /// Required `sup |R(g₀) + m (m + 1)|`; `None` skips the check.
    pub normalized_tol: Option<T>,
    /// Runs abort once the constraint drift exceeds this.
    pub drift_ceiling: T,
    pub pressure: CgOptions,
}

impl<T: Real> Default for FlowConfig<T> {
    fn default() -> Self {
        Self {
            normalized_tol: Some(T::lit(1e-6)),
            drift_ceiling: T::lit(1e-3),
            pressure: CgOptions::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError<T: Real> {
    #[error("invalid flow parameters: {0}")]
    Config(&'static str),
    #[error("initial metric is not normalized: sup|R + m(m+1)| = {residual:e} exceeds {tol:e}")]
    NotNormalized { residual: f64, tol: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Pressure(#[from] PressureError),
    #[error("flow aborted at step {step}: {reason}")]
    Aborted {
        step: usize,
        reason: String,
        partial: Box<FlowTrajectory<T>>,
    },
}

/// `dt = c h² / (2n)` with `h` the smallest grid spacing.
pub fn stable_dt<T: Real>(grid: &GridSpec<T>, c: T) -> T {
    let h = grid.min_spacing();
    c * h * h / T::from_usize_lossy(2 * grid.dim())
}

/// `−2 (Rc + (p + m) g)` from a precomputed Ricci tensor.
pub fn crf_rhs_with_ricci<T: Real>(
    g: &SymTensorField<T>,
    ricci: &SymTensorField<T>,
    p: &ScalarField<T>,
    m: usize,
) -> SymTensorField<T> {
    let nc = g.layout().ncomp();
    let mt = T::from_usize_lossy(m);
    let two = T::lit(2.0);
    let data = g
        .data
        .iter()
        .zip(&ricci.data)
        .enumerate()
        .map(|(idx, (&gv, &rv))| -two * (rv + (p.values[idx / nc] + mt) * gv))
        .collect();
    SymTensorField::from_data(g.dim(), data)
}

/// `−2 (Rc + (p + m) g)` with `m = dim − 1`.
pub fn crf_rhs<T: Real>(
    g: &MetricField<T>,
    p: &ScalarField<T>,
) -> Result<SymTensorField<T>, GeometryError> {
    let ricci = Geometry::new(g)?.ricci();
    Ok(crf_rhs_with_ricci(g.tensor(), &ricci, p, g.dim() - 1))
}

struct Stage<T> {
    rhs: SymTensorField<T>,
    p: ScalarField<T>,
    drift: T,
    pressure_residual: T,
    pressure_iterations: usize,
}

fn evaluate<T: Real>(
    g: &MetricField<T>,
    guess: Option<&ScalarField<T>>,
    opts: &CgOptions,
) -> Result<Stage<T>, PressureError> {
    let m = g.dim() - 1;
    let geo = Geometry::new(g)?;
    let ricci = geo.ricci();
    let target = T::from_usize_lossy(m * (m + 1));
    let drift = geo.trace(&ricci).map(|r| r + target).sup_norm();
    let rhs = pressure::pressure_rhs(&geo, &ricci, m);
    let solve = pressure::solve_with_rhs(&geo, &rhs, m, guess, opts)?;
    Ok(Stage {
        rhs: crf_rhs_with_ricci(g.tensor(), &ricci, &solve.p, m),
        p: solve.p,
        drift,
        pressure_residual: solve.residual_norm,
        pressure_iterations: solve.iterations,
    })
}

fn record<T: Real>(t: T, g: MetricField<T>, stage: &Stage<T>) -> FlowState<T> {
    let diagnostics = Diagnostics {
        min_p: stage.p.min(),
        constraint_drift: stage.drift,
        min_metric_eig: g.min_eigenvalue(),
        pressure_residual: stage.pressure_residual,
        pressure_iterations: stage.pressure_iterations,
    };
    FlowState {
        t,
        g,
        p: stage.p.clone(),
        diagnostics,
    }
}

/// Integrates from `g0` to `final_time` in uniform steps no larger than
/// `dt`. The step is shrunk so that the last state lands on `final_time`.
pub fn run_flow<T: Real>(
    g0: &MetricField<T>,
    final_time: T,
    dt: T,
    cfg: &FlowConfig<T>,
) -> Result<FlowTrajectory<T>, FlowError<T>> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(FlowError::Config("dt must be positive"));
    }
    if !(final_time >= T::zero()) || !final_time.is_finite() {
        return Err(FlowError::Config("final time must be non-negative"));
    }
    let m = g0.dim() - 1;
    let steps = (final_time / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
    let dt = final_time / T::from_usize_lossy(steps);

    let mut stage = evaluate(g0, None, &cfg.pressure)?;
    if let Some(tol) = cfg.normalized_tol {
        if !(stage.drift < tol) {
            return Err(FlowError::NotNormalized {
                residual: stage.drift.as_f64(),
                tol: tol.as_f64(),
            });
        }
    }
    let mut traj = FlowTrajectory {
        states: vec![record(T::zero(), g0.clone(), &stage)],
        dt,
        final_time,
        m,
        kind: FlowKind::Crf,
        status: FlowStatus::Complete,
    };
    if final_time == T::zero() {
        traj.states.truncate(1);
        return Ok(traj);
    }

    let half = dt * T::lit(0.5);
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    for step in 1..=steps {
        let result = (|| -> Result<(MetricField<T>, Stage<T>), String> {
            let current = &traj.states[step - 1];
            let g = current.g.tensor();
            let grid = current.g.grid().clone();
            let at = |t: SymTensorField<T>| MetricField::new(grid.clone(), t).map_err(|e| e.to_string());
            let k1 = &stage.rhs;
            let s2 = evaluate(&at(g.axpy(half, k1))?, Some(&current.p), &cfg.pressure)
                .map_err(|e| e.to_string())?;
            let s3 = evaluate(&at(g.axpy(half, &s2.rhs))?, Some(&s2.p), &cfg.pressure)
                .map_err(|e| e.to_string())?;
            let s4 = evaluate(&at(g.axpy(dt, &s3.rhs))?, Some(&s3.p), &cfg.pressure)
                .map_err(|e| e.to_string())?;
            let incr = k1.axpy(two, &s2.rhs).axpy(two, &s3.rhs).axpy(T::one(), &s4.rhs);
            let next = at(g.axpy(sixth, &incr))?;
            let s = evaluate(&next, Some(&s4.p), &cfg.pressure).map_err(|e| e.to_string())?;
            if !(s.drift <= cfg.drift_ceiling) {
                return Err(format!(
                    "constraint drift {:e} exceeds ceiling {:e}",
                    s.drift.as_f64(),
                    cfg.drift_ceiling.as_f64()
                ));
            }
            Ok((next, s))
        })();
        match result {
            Ok((next, s)) => {
                stage = s;
                traj.states
                    .push(record(dt * T::from_usize_lossy(step), next, &stage));
            }
            Err(reason) => {
                traj.status = FlowStatus::Aborted {
                    step,
                    reason: reason.clone(),
                };
                return Err(FlowError::Aborted {
                    step,
                    reason,
                    partial: Box::new(traj),
                });
            }
        }
    }
    Ok(traj)
}
