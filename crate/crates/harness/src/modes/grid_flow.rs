use nalgebra::{DMatrix, DVector};

use crf_core::cg::CgOptions;
use crf_core::geometry::Geometry;
use crf_core::grid::ScalarField;
use crf_core::pressure::{apply_operator, pressure_rhs, solve_pressure};

use crate::config::{ExperimentConfig, Tolerances};
use crate::error::HarnessError;
use crate::outcome::{Invariant, Outcome};
use crate::pipeline::{initial_metric, GridRun, Lab, PipelineSpec};

/// Invariants every grid run is judged on.
pub fn flow_invariants(run: &GridRun, tol: &Tolerances) -> Vec<Invariant> {
    let rep = &run.report;
    let traj = &run.traj;
    let max_residual = traj
        .states
        .iter()
        .map(|s| s.diagnostics.pressure_residual)
        .fold(0.0, f64::max);
    let min_p = traj
        .states
        .iter()
        .map(|s| s.diagnostics.min_p)
        .fold(f64::INFINITY, f64::min);
    vec![
        Invariant::below("normalization", run.normalization_residual, tol.normalization),
        Invariant::holds("flow_completed", run.flow_abort.is_none()),
        Invariant::below("mass_drift", run.sol.max_mass_drift(), tol.mass_drift),
        Invariant::below("de_rel_error", rep.max_de_rel_error(), tol.fd_rel),
        Invariant::at_least("de_analytic_min", rep.min_de_analytic(), -tol.nonneg),
        Invariant::at_most("e_decrease", rep.e_violation(tol.w_step_rel, tol.w_step_abs), 0.0),
        Invariant::below("dw_rel_error", rep.max_dw_rel_error(), tol.fd_rel),
        Invariant::at_least("w_term_min", rep.min_w_term(), -tol.nonneg),
        Invariant::at_most("w_decrease", rep.w_violation(tol.w_step_rel, tol.w_step_abs), 0.0),
        Invariant::below("pressure_residual", max_residual, tol.pressure_residual),
        Invariant::at_least("min_p", min_p, -tol.min_p),
        Invariant::below("constraint_drift", traj.max_constraint_drift(), tol.constraint_drift),
        Invariant::above("conjugate_min", run.sol.min_value(), 0.0),
    ]
}

pub fn summarize(run: &GridRun, out: &mut Outcome) {
    let rep = &run.report;
    let first = rep.rows.first();
    let last = rep.rows.last();
    out.note("resolution", run.spec.grid.resolution);
    out.note("t_final", run.traj.final_time);
    out.note("dt", run.traj.dt);
    out.note("steps", run.traj.len() - 1);
    out.note("normalization_residual", run.normalization_residual);
    out.note("normalization_iterations", run.normalization_iterations);
    out.note("flow_abort", run.flow_abort.clone());
    out.note("max_mass_drift", run.sol.max_mass_drift());
    out.note("max_constraint_drift", run.traj.max_constraint_drift());
    out.note("max_de_rel_error", rep.max_de_rel_error());
    out.note("max_dw_rel_error", rep.max_dw_rel_error());
    out.note("min_de_analytic", rep.min_de_analytic());
    out.note("min_w_term", rep.min_w_term());
    out.note("e_range", vec![first.map(|r| r.e), last.map(|r| r.e)]);
    out.note("w_range", vec![first.map(|r| r.w), last.map(|r| r.w)]);
    out.note(
        "min_metric_eig",
        rep.rows.iter().map(|r| r.min_metric_eig).fold(f64::INFINITY, f64::min),
    );
}

/// CG against a dense LU solve of the same discrete operator.
pub fn dense_pressure_check(spec: &PipelineSpec, tol: &Tolerances) -> Result<Vec<Invariant>, HarnessError> {
    let (g, _, _) = initial_metric(spec)?;
    let geo = Geometry::new(&g)?;
    let n = geo.grid().nodes();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut e = ScalarField::zeros(geo.grid());
    for j in 0..n {
        e.values[j] = 1.0;
        let col = apply_operator(&geo, &e, 2);
        e.values[j] = 0.0;
        a.set_column(j, &DVector::from_vec(col.values));
    }
    let rhs = pressure_rhs(&geo, &geo.ricci(), 2);
    let dense = a
        .lu()
        .solve(&DVector::from_vec(rhs.values))
        .ok_or_else(|| HarnessError::Study("dense pressure operator is singular".into()))?;
    let cg = solve_pressure(&g, &CgOptions::default())?;
    let diff = cg
        .p
        .values
        .iter()
        .zip(dense.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        Invariant::below("dense_pressure", diff / dense.amax(), tol.dense_pressure),
        Invariant::below("dense_pressure_residual", cg.residual_norm, tol.pressure_residual),
    ])
}

pub fn run(lab: &Lab, cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let spec = PipelineSpec::from_config(cfg)?;
    let run = lab.grid_run(&spec)?;
    let mut out = Outcome::new(cfg.run.mode);
    out.invariants = flow_invariants(&run, &cfg.tolerances);
    if let Some(res) = cfg.checks.dense_pressure_resolution {
        out.invariants
            .extend(dense_pressure_check(&spec.with_resolution(res), &cfg.tolerances)?);
    }
    summarize(&run, &mut out);
    out.rows = run.report.rows.clone();
    out.trajectory = Some(run);
    Ok(out)
}
