use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crf_core::geometry::Geometry;
use crf_core::nu::{gradient_check, nu_functional, random_smooth_field, NuConfig};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::outcome::{Invariant, Outcome, Table};
use crate::pipeline::{Lab, PipelineSpec};

/// `samples` indices spread evenly over `0..len`, both ends included.
pub fn sample_indices(len: usize, samples: usize) -> Vec<usize> {
    let last = len - 1;
    let mut idx: Vec<usize> = (0..samples)
        .map(|i| ((i * last) as f64 / (samples - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

pub fn run(lab: &Lab, cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let spec = PipelineSpec::from_config(cfg)?;
    let run = lab.grid_run(&spec)?;
    let m = cfg.run.m;
    let tol = &cfg.tolerances;
    let nu_cfg = NuConfig {
        starts: cfg.nu.starts,
        seed: cfg.run.seed,
        max_iters: cfg.nu.max_iters,
        ..NuConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut table = Table::new(
        "nu.csv",
        &["t", "nu", "closed_form", "volume", "constraint_error", "spread", "gradient_rel_error"],
    );
    let indices = sample_indices(run.traj.len(), cfg.nu.samples);
    let mut values = Vec::with_capacity(indices.len());
    let (mut worst_constraint, mut worst_grad, mut worst_spread) = (0.0f64, 0.0f64, 0.0f64);
    let mut unbounded = false;
    for &k in &indices {
        let state = &run.traj.states[k];
        let geo = Geometry::new(&state.g)?;
        let res = nu_functional(&geo, m, &nu_cfg)?;
        // Directional derivatives at a perturbed minimizer along random
        // smooth directions.
        let base = res
            .minimizer_f
            .zip_map(&random_smooth_field(&geo, &mut rng, 2, 0.5), |a, b| a + b);
        let mut grad_err = 0.0f64;
        for _ in 0..cfg.nu.directions {
            let dir = random_smooth_field(&geo, &mut rng, 3, 1.0);
            let (analytic, fd) = gradient_check(&geo, &base, &dir, m, 1e-5);
            grad_err = grad_err.max((analytic - fd).abs() / analytic.abs().max(1e-300));
        }
        let volume = geo.volume();
        let closed = -2.0 * (m + 1) as f64 * volume.ln();
        worst_constraint = worst_constraint.max(res.constraint_error);
        worst_grad = worst_grad.max(grad_err);
        worst_spread = worst_spread.max(res.spread());
        unbounded |= res.unbounded;
        table.rows.push(vec![
            state.t,
            res.value,
            closed,
            volume,
            res.constraint_error,
            res.spread(),
            grad_err,
        ]);
        values.push(res.value);
    }
    let worst_decrease = values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0f64, f64::max);
    let closed_gap = table
        .rows
        .iter()
        .map(|r| (r[1] - r[2]).abs())
        .fold(0.0f64, f64::max);

    let mut out = Outcome::new(cfg.run.mode);
    out.invariants.push(Invariant::holds("flow_completed", run.flow_abort.is_none()));
    out.invariants.push(Invariant::at_least("nu_samples", values.len() as f64, 5.0));
    out.invariants
        .push(Invariant::at_most("nu_decrease", worst_decrease, tol.nu_monotone));
    out.invariants
        .push(Invariant::below("nu_constraint", worst_constraint, tol.nu_constraint));
    out.invariants
        .push(Invariant::below("nu_gradient", worst_grad, tol.gradient_check));
    out.invariants
        .push(Invariant::below("nu_spread", worst_spread, tol.nu_monotone));
    out.invariants.push(Invariant::holds("nu_bounded", !unbounded));
    super::grid_flow::summarize(&run, &mut out);
    out.note("nu", values);
    out.note("max_closed_form_gap", closed_gap);
    out.tables.push(table);
    out.rows = run.report.rows.clone();
    out.trajectory = Some(run);
    Ok(out)
}
