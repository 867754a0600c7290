use std::f64::consts::PI;

use crf_core::conjugate::solve_backward;
use crf_core::flow::FlowTrajectory;
use crf_core::functionals::report;
use crf_core::geometry::Geometry;
use crf_core::grid::{GridSpec, ScalarField};
use crf_core::tensor::MetricField;

use crate::config::{ConfigError, ConvergenceSection, ExperimentConfig, Study};
use crate::error::HarnessError;
use crate::oracle::ConformalWave;
use crate::orders::QuantityOrders;
use crate::outcome::{Invariant, Outcome, Table};
use crate::pipeline::{Lab, PipelineSpec};

use super::identity_sweep::{fields, residuals_at};

pub const FLOW_QUANTITIES: [&str; 8] = [
    "mass_drift",
    "constraint_drift",
    "de_rel_error",
    "dw_rel_error",
    "box_v",
    "bochner",
    "laplacian",
    "box_u",
];

/// Errors at or below this are treated as round-off.
const FLOOR: f64 = 1e-12;

/// Measurements of one study: spacing and one error per quantity per level.
struct Levels {
    names: Vec<&'static str>,
    resolution: Vec<usize>,
    h: Vec<f64>,
    dt: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Levels {
    fn new(names: &[&'static str]) -> Self {
        Self {
            names: names.to_vec(),
            resolution: Vec::new(),
            h: Vec::new(),
            dt: Vec::new(),
            values: Vec::new(),
        }
    }

    fn column(&self, q: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[q]).collect()
    }

    fn table(&self) -> Table {
        let mut header = vec!["level", "resolution", "h", "dt"];
        header.extend(self.names.iter().copied());
        let mut t = Table::new("convergence.csv", &header);
        for (k, v) in self.values.iter().enumerate() {
            let mut row = vec![k as f64, self.resolution[k] as f64, self.h[k], self.dt[k]];
            row.extend(v);
            t.rows.push(row);
        }
        t
    }
}

fn flow_study(lab: &Lab, cfg: &ExperimentConfig, conv: &ConvergenceSection, out: &mut Outcome) -> Result<Levels, HarnessError> {
    let mut base = PipelineSpec::from_config(cfg)?;
    base.even_steps = true;
    let mut levels = Levels::new(&FLOW_QUANTITIES);
    let mut finest = None;
    for k in 0..conv.levels {
        let res = conv.base_resolution + k * conv.resolution_step;
        let spec = base.with_resolution(res);
        let run = lab.grid_run(&spec)?;
        if let Some(reason) = &run.flow_abort {
            return Err(HarnessError::Flow(format!("level {res}^3 stopped early: {reason}")));
        }
        let (f, u) = fields(&run)?;
        let mid = (run.traj.len() - 1) / 2;
        let r = residuals_at(&run, &f, &u, mid)?;
        levels.resolution.push(res);
        levels.h.push(spec.grid.period / res as f64);
        levels.dt.push(run.traj.dt);
        levels.values.push(vec![
            run.sol.max_mass_drift(),
            run.traj.max_constraint_drift(),
            run.report.max_de_rel_error(),
            run.report.max_dw_rel_error(),
            r.box_v.sup,
            r.bochner.sup,
            r.laplacian.sup,
            r.box_u.sup,
        ]);
        finest = Some(run);
    }
    if let Some(run) = finest {
        out.rows = run.report.rows.clone();
        out.note("identity_time", run.traj.states[(run.traj.len() - 1) / 2].t);
        out.trajectory = Some(run);
    }
    Ok(levels)
}

fn flat_box(nx: usize, dt: f64, steps: usize) -> Result<FlowTrajectory<f64>, HarnessError> {
    let grid = GridSpec::new(vec![nx, 8, 8], vec![1.0, 1.0, 1.0])?;
    Ok(FlowTrajectory::fixed(MetricField::flat(&grid), ScalarField::zeros(&grid), 2, dt, steps)?)
}

/// Sup error at `τ = T` of the backward heat solution started from
/// `1 + 0.1 sin 2πx`, against decay at rate `lambda`, or at the discrete
/// Laplacian's own rate when `lambda` is `None`.
fn heat_mode_error(traj: &FlowTrajectory<f64>, lambda: Option<f64>) -> Result<(f64, Vec<crf_core::functionals::ReportRow<f64>>), HarnessError> {
    let grid = traj.grid().clone();
    let mode = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[0]).sin());
    let lambda = match lambda {
        Some(l) => l,
        None => {
            let geo = Geometry::new(&traj.states[0].g)?;
            let lap = geo.laplace_beltrami(&mode);
            let k = mode
                .values
                .iter()
                .enumerate()
                .fold(0, |b, (i, v)| if v.abs() > mode.values[b].abs() { i } else { b });
            -lap.values[k] / mode.values[k]
        }
    };
    let ut = mode.map(|s| 1.0 + 0.1 * s);
    let sol = solve_backward(traj, &ut)?;
    let decay = (-lambda * traj.final_time).exp();
    let err = sol.u[0]
        .zip_map(&mode, |u, s| u - 1.0 - 0.1 * decay * s)
        .sup_norm();
    Ok((err, report(traj, &sol)?.rows))
}

fn heat_study(conv: &ConvergenceSection, out: &mut Outcome) -> Result<Levels, HarnessError> {
    let mut levels = Levels::new(&["spatial", "temporal"]);
    let lambda = 4.0 * PI * PI;
    for k in 0..conv.levels {
        let nx = conv.base_resolution.max(8) << k;
        let (spatial, rows) = heat_mode_error(&flat_box(nx, 2.5e-4, 80)?, Some(lambda))?;
        let dt = 4e-3 / (1 << k) as f64;
        let (temporal, _) = heat_mode_error(&flat_box(16, dt, 10 << k)?, None)?;
        levels.resolution.push(nx);
        levels.h.push(1.0 / nx as f64);
        levels.dt.push(dt);
        levels.values.push(vec![spatial, temporal]);
        out.rows = rows;
    }
    Ok(levels)
}

fn geometry_study(conv: &ConvergenceSection, cfg: &ExperimentConfig, out: &mut Outcome) -> Result<Levels, HarnessError> {
    let period = 1.3;
    let wave = ConformalWave { period };
    let mut levels = Levels::new(&["ricci", "scalar_curvature"]);
    let mut finest = None;
    for k in 0..conv.levels {
        let res = conv.base_resolution.max(8) << k;
        let grid = GridSpec::cubic(3, res, period)?;
        let phi = ScalarField::from_fn(&grid, |x| wave.eval(x).0);
        let g = MetricField::conformally_flat(&grid, &phi)?;
        let geo = Geometry::new(&g)?;
        let ric = geo.ricci();
        let scal = geo.scalar_curvature();
        let (mut er, mut es) = (0.0f64, 0.0f64);
        for node in 0..grid.nodes() {
            let x = grid.coords(node);
            let want = wave.ricci(&x);
            for (i, row) in want.iter().enumerate() {
                for (j, w) in row.iter().enumerate() {
                    er = er.max((ric.get(node, i, j) - w).abs());
                }
            }
            es = es.max((scal.values[node] - wave.scalar(&x)).abs());
        }
        levels.resolution.push(res);
        levels.h.push(period / res as f64);
        levels.dt.push(0.0);
        levels.values.push(vec![er, es]);
        finest = Some(geo);
    }
    if let Some(geo) = finest {
        // Summation by parts on the finest level.
        let kk = 2.0 * PI / period;
        let f = ScalarField::from_fn(geo.grid(), |x| (kk * x[0]).sin() * (kk * x[2]).cos() + 2.0);
        let h = ScalarField::from_fn(geo.grid(), |x| (kk * x[1]).cos().exp());
        let divergence = geo.integrate(&geo.laplace_beltrami(&f)).abs() / f.sup_norm();
        let lhs = geo.integrate(&f.zip_map(&geo.laplace_beltrami(&h), |a, b| a * b));
        let rhs = -geo.integrate(&geo.grad_dot(&f, &h));
        let ibp = (lhs - rhs).abs() / lhs.abs().max(1.0);
        let tol = cfg.tolerances.integrated_identity;
        out.invariants.push(Invariant::below("divergence_theorem", divergence, tol));
        out.invariants.push(Invariant::below("integration_by_parts", ibp, tol));
    }
    Ok(levels)
}

fn flat_ricci_study(conv: &ConvergenceSection) -> Result<Levels, HarnessError> {
    let mut levels = Levels::new(&["ricci"]);
    for k in 0..conv.levels {
        let res = conv.base_resolution.max(8) << k;
        let grid = GridSpec::cubic(3, res, 1.0)?;
        let geo = Geometry::new(&MetricField::flat(&grid))?;
        levels.resolution.push(res);
        levels.h.push(1.0 / res as f64);
        levels.dt.push(0.0);
        levels.values.push(vec![geo.ricci().sup_norm()]);
    }
    Ok(levels)
}

fn space_form_study(cfg: &ExperimentConfig, conv: &ConvergenceSection, out: &mut Outcome) -> Result<Vec<QuantityOrders>, HarnessError> {
    let sf = cfg
        .space_form
        .as_ref()
        .ok_or_else(|| HarnessError::Study("config has no [space_form] section".into()))?;
    let mut c = Vec::new();
    let mut w = Vec::new();
    let mut h = Vec::new();
    let mut table = Table::new("convergence.csv", &["level", "dt", "c_final", "w_final"]);
    for k in 0..conv.levels {
        let dt = sf.dt / (1 << k) as f64;
        let s = super::space_form::series(sf, cfg.run.m, dt)?;
        let last = s.rows[s.rows.len() - 1];
        table.rows.push(vec![k as f64, dt, last.c, last.w]);
        c.push(last.c);
        w.push(last.w);
        h.push(dt);
        out.rows = super::space_form::rows(&s);
    }
    out.tables.push(table);
    Ok(vec![
        QuantityOrders::from_richardson("c_final", h.clone(), &c, 2.0, 1e-15),
        QuantityOrders::from_richardson("w_final", h, &w, 2.0, 1e-15),
    ])
}

pub fn run(lab: &Lab, cfg: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let conv = cfg
        .convergence
        .as_ref()
        .ok_or_else(|| HarnessError::Study("config has no [convergence] section".into()))?;
    let mut out = Outcome::new(cfg.run.mode);
    out.note("study", serde_json::to_value(conv.study)?);
    let orders = if conv.study == Study::SpaceForm {
        space_form_study(cfg, conv, &mut out)?
    } else {
        let levels = match conv.study {
            Study::Flow => flow_study(lab, cfg, conv, &mut out)?,
            Study::HeatMode => heat_study(conv, &mut out)?,
            Study::Geometry => geometry_study(conv, cfg, &mut out)?,
            Study::FlatRicci => flat_ricci_study(conv)?,
            Study::SpaceForm => unreachable!(),
        };
        let spacing = if conv.study == Study::HeatMode {
            // Spatial errors scale with h, temporal ones with dt.
            vec![levels.h.clone(), levels.dt.clone()]
        } else {
            vec![levels.h.clone(); levels.names.len()]
        };
        let orders: Vec<QuantityOrders> = levels
            .names
            .iter()
            .enumerate()
            .map(|(q, name)| QuantityOrders::from_errors(name, spacing[q].clone(), levels.column(q), FLOOR))
            .collect();
        doubling_checks(cfg, conv, &levels, &mut out)?;
        out.tables.push(levels.table());
        orders
    };
    for name in &conv.require {
        let q = orders.iter().find(|q| &q.name == name).ok_or_else(|| ConfigError::Invalid {
            field: "convergence.require",
            reason: format!("`{name}` is not measured by this study"),
        })?;
        out.invariants.push(Invariant {
            name: format!("order:{name}"),
            passed: q.order.meets(cfg.tolerances.min_order),
            value: q.order.value(),
            relation: ">=",
            threshold: cfg.tolerances.min_order,
        });
    }
    out.orders = orders;
    Ok(out)
}

fn doubling_checks(cfg: &ExperimentConfig, conv: &ConvergenceSection, levels: &Levels, out: &mut Outcome) -> Result<(), HarnessError> {
    for name in &conv.require_doubling {
        let q = levels.names.iter().position(|n| n == name).ok_or_else(|| ConfigError::Invalid {
            field: "convergence.require_doubling",
            reason: format!("`{name}` is not measured by this study"),
        })?;
        let mut found = false;
        for i in 0..levels.resolution.len() {
            for j in i + 1..levels.resolution.len() {
                if levels.resolution[j] == 2 * levels.resolution[i] {
                    found = true;
                    let ratio = levels.values[i][q] / levels.values[j][q];
                    out.invariants.push(Invariant::at_least(
                        format!("doubling:{name}:{}->{}", levels.resolution[i], levels.resolution[j]),
                        ratio,
                        cfg.tolerances.doubling_factor,
                    ));
                }
            }
        }
        if !found {
            return Err(HarnessError::Study(format!(
                "`{name}` needs two levels whose resolutions differ by a factor of two"
            )));
        }
    }
    Ok(())
}
