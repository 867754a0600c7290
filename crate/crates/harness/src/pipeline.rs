//! Seed, normalize, flow, solve the conjugate heat equation backward and
//! evaluate the functionals: the computation shared by every grid mode.

use std::cell::RefCell;
use std::rc::Rc;

use crf_core::conjugate::{solve_backward, ConjugateHeatSolution};
use crf_core::flow::{run_flow, FlowConfig, FlowError, FlowTrajectory};
use crf_core::functionals::{report, FunctionalReport};
use crf_core::geometry::Geometry;
use crf_core::grid::{GridSpec, ScalarField};
use crf_core::seeds::{periodic_bump, tt_seed};
use crf_core::tensor::MetricField;
use crf_core::yamabe::{normalize, NormalizerConfig};

use crate::config::{ExperimentConfig, GridSection, TerminalKind, TerminalSection, TimeSection};
use crate::error::HarnessError;

/// Everything that determines a grid run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub grid: GridSection,
    pub time: TimeSection,
    pub terminal: TerminalSection,
    pub abort_drift: Option<f64>,
    /// Round the step count up to an even number so `T/2` is a grid time.
    pub even_steps: bool,
}

impl PipelineSpec {
    /// Reads the grid, time and terminal sections; validation has already
    /// ensured they exist.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let missing = |s: &str| HarnessError::Study(format!("config has no [{s}] section"));
        Ok(Self {
            grid: cfg.grid.clone().ok_or_else(|| missing("grid"))?,
            time: cfg.time.clone().ok_or_else(|| missing("time"))?,
            terminal: cfg.terminal.clone(),
            abort_drift: cfg.tolerances.abort_drift,
            even_steps: false,
        })
    }

    pub fn with_resolution(&self, resolution: usize) -> Self {
        let mut spec = self.clone();
        spec.grid.resolution = resolution;
        spec
    }

    pub fn grid_spec(&self) -> Result<GridSpec<f64>, HarnessError> {
        Ok(GridSpec::cubic(3, self.grid.resolution, self.grid.period)?)
    }

    /// Number of uniform steps to `t_final`.
    pub fn steps(&self) -> usize {
        let h = self.grid.period / self.grid.resolution as f64;
        let dt = self
            .time
            .dt
            .unwrap_or(self.time.dt_factor * h * h / 12.0);
        let mut n = ((self.time.t_final / dt) - 1e-9).ceil().max(1.0) as usize;
        if self.even_steps && n % 2 == 1 {
            n += 1;
        }
        n
    }

    pub fn dt(&self) -> f64 {
        self.time.t_final / self.steps() as f64
    }
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub spec: PipelineSpec,
    pub normalization_residual: f64,
    pub normalization_iterations: usize,
    pub traj: FlowTrajectory<f64>,
    /// Why the flow stopped early, if it did.
    pub flow_abort: Option<String>,
    pub sol: ConjugateHeatSolution<f64>,
    pub report: FunctionalReport<f64>,
}

/// The normalized seed metric for a spec.
pub fn initial_metric(spec: &PipelineSpec) -> Result<(MetricField<f64>, f64, usize), HarnessError> {
    let grid = spec.grid_spec()?;
    let seed = tt_seed(&grid, spec.grid.seed_a, spec.grid.seed_b)?;
    let n = normalize(&seed, &NormalizerConfig::for_dim(3))?;
    Ok((n.metric, n.residual, n.iterations))
}

pub fn terminal_density(geo: &Geometry<f64>, terminal: &TerminalSection) -> ScalarField<f64> {
    match terminal.kind {
        TerminalKind::Uniform => ScalarField::constant(geo.grid(), 1.0 / geo.volume()),
        TerminalKind::Bump => {
            let center = terminal
                .center
                .clone()
                .unwrap_or_else(|| geo.grid().period().iter().map(|l| 0.5 * l).collect());
            periodic_bump(geo, terminal.kappa, &center)
        }
    }
}

pub fn grid_run(spec: &PipelineSpec) -> Result<GridRun, HarnessError> {
    let (g0, residual, iterations) = initial_metric(spec)?;
    let cfg = FlowConfig {
        drift_ceiling: spec.abort_drift.unwrap_or(f64::INFINITY),
        ..FlowConfig::default()
    };
    let (traj, flow_abort) = match run_flow(&g0, spec.time.t_final, spec.dt(), &cfg) {
        Ok(traj) => (traj, None),
        Err(FlowError::Aborted { partial, reason, .. }) => (*partial, Some(reason)),
        Err(e) => return Err(HarnessError::Flow(e.to_string())),
    };
    let last = Geometry::new(&traj.states[traj.len() - 1].g)?;
    let ut = terminal_density(&last, &spec.terminal);
    let sol = solve_backward(&traj, &ut)?;
    let report = report(&traj, &sol)?;
    Ok(GridRun {
        spec: spec.clone(),
        normalization_residual: residual,
        normalization_iterations: iterations,
        traj,
        flow_abort,
        sol,
        report,
    })
}

/// Runs experiments and remembers grid runs, so that several experiments
/// over the same flow compute it once.
#[derive(Debug, Default)]
pub struct Lab {
    cache: RefCell<Vec<Rc<GridRun>>>,
    /// Progress lines go to stderr unless set.
    pub quiet: bool,
}

impl Lab {
    pub fn new(quiet: bool) -> Self {
        Self {
            cache: RefCell::new(Vec::new()),
            quiet,
        }
    }

    pub fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn grid_run(&self, spec: &PipelineSpec) -> Result<Rc<GridRun>, HarnessError> {
        if let Some(hit) = self.cache.borrow().iter().find(|r| &r.spec == spec) {
            return Ok(Rc::clone(hit));
        }
        self.log(format!(
            "grid run: {}^3, T = {}, {} steps",
            spec.grid.resolution,
            spec.time.t_final,
            spec.steps()
        ));
        let start = std::time::Instant::now();
        let run = Rc::new(grid_run(spec)?);
        self.log(format!("  done in {:.1} s", start.elapsed().as_secs_f64()));
        self.cache.borrow_mut().push(Rc::clone(&run));
        Ok(run)
    }
}
