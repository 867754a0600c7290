use crf_core::functionals::dw_dt_analytic;
use crf_core::geometry::Geometry;
use crf_core::identities::{
    apply_conjugate_op, check_bochner, check_conjugate_v, check_laplacian_variation, conjugate_v_rhs, Residual,
    SpacetimeField,
};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::outcome::{Invariant, Outcome, Table};
use crate::pipeline::{GridRun, Lab, PipelineSpec};

/// Residuals of the identities at one interior time index.
#[derive(Debug, Clone, Copy)]
pub struct IdentityResiduals {
    pub t: f64,
    pub box_v: Residual<f64>,
    pub bochner: Residual<f64>,
    pub laplacian: Residual<f64>,
    /// `□* u`, which vanishes up to the time stencil's truncation.
    pub box_u: Residual<f64>,
    /// `|∫ rhs dμ + dW/dt| / |dW/dt|` with the four-term rate.
    pub integrated: f64,
}

pub fn residuals_at(run: &GridRun, f: &SpacetimeField<f64>, u: &SpacetimeField<f64>, idx: usize) -> Result<IdentityResiduals, HarnessError> {
    let traj = &run.traj;
    let state = &traj.states[idx];
    let geo = Geometry::new(&state.g)?;
    let box_u = apply_conjugate_op(traj, u, idx)?;
    let rhs = conjugate_v_rhs(&geo, &run.sol.u[idx], &state.p, traj.m)?;
    let rate = dw_dt_analytic(&geo, &run.sol.u[idx], &state.p, traj.m)?.total();
    Ok(IdentityResiduals {
        t: state.t,
        box_v: check_conjugate_v(traj, &run.sol, idx)?,
        bochner: check_bochner(traj, f, idx)?,
        laplacian: check_laplacian_variation(traj, f, idx)?,
        box_u: Residual {
            sup: box_u.sup_norm(),
            scale: run.sol.u[idx].sup_norm(),
        },
        integrated: (geo.integrate(&rhs) + rate).abs() / rate.abs().max(1e-300),
    })
}

pub fn fields(run: &GridRun) -> Result<(SpacetimeField<f64>, SpacetimeField<f64>), HarnessError> {
    let f = SpacetimeField::log_density(&run.sol)?;
    let u = SpacetimeField {
        values: run.sol.u.clone(),
    };
    Ok((f, u))
}

pub fn run(lab: &Lab, cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let spec = PipelineSpec::from_config(cfg)?;
    let run = lab.grid_run(&spec)?;
    if run.traj.len() < 3 {
        return Err(HarnessError::Study("identity sweep needs at least three trajectory times".into()));
    }
    let (f, u) = fields(&run)?;
    let mut table = Table::new(
        "identities.csv",
        &[
            "t",
            "box_v",
            "box_v_scale",
            "bochner",
            "bochner_scale",
            "laplacian",
            "laplacian_scale",
            "box_u",
            "box_u_scale",
            "integrated",
        ],
    );
    let (mut worst_rel, mut worst_integrated) = (0.0f64, 0.0f64);
    for idx in (1..run.traj.len() - 1).step_by(cfg.checks.identity_stride) {
        let r = residuals_at(&run, &f, &u, idx)?;
        worst_rel = worst_rel.max(r.box_v.relative());
        worst_integrated = worst_integrated.max(r.integrated);
        table.rows.push(vec![
            r.t,
            r.box_v.sup,
            r.box_v.scale,
            r.bochner.sup,
            r.bochner.scale,
            r.laplacian.sup,
            r.laplacian.scale,
            r.box_u.sup,
            r.box_u.scale,
            r.integrated,
        ]);
    }
    let mut out = Outcome::new(cfg.run.mode);
    out.invariants.push(Invariant::holds("flow_completed", run.flow_abort.is_none()));
    out.invariants
        .push(Invariant::below("box_v_relative", worst_rel, cfg.tolerances.identity_rel));
    out.invariants.push(Invariant::below(
        "integrated_identity",
        worst_integrated,
        cfg.tolerances.integrated_identity,
    ));
    super::grid_flow::summarize(&run, &mut out);
    out.note("max_box_v_relative", worst_rel);
    out.note("max_integrated_identity", worst_integrated);
    out.tables.push(table);
    out.rows = run.report.rows.clone();
    out.trajectory = Some(run);
    Ok(out)
}
