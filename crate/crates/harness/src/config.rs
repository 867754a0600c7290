//! Experiment configuration, read from TOML.
//!
//! Every section except `[run]` is optional at parse time; [`ExperimentConfig::validate`]
//! checks that the sections a mode needs are present and that every numeric
//! field is in range, naming the offending field on failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides `run.out_dir`.
pub const OUT_DIR_ENV: &str = "CRF_LAB_OUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("mode `{mode}` requires a [{section}] section")]
    MissingSection { mode: Mode, section: &'static str },
    #[error("unknown mode `{0}` (expected grid_flow, space_form, identity_sweep, nu_study or convergence_study)")]
    UnknownMode(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    GridFlow,
    SpaceForm,
    IdentitySweep,
    NuStudy,
    ConvergenceStudy,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GridFlow => "grid_flow",
            Mode::SpaceForm => "space_form",
            Mode::IdentitySweep => "identity_sweep",
            Mode::NuStudy => "nu_study",
            Mode::ConvergenceStudy => "convergence_study",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "grid_flow" => Mode::GridFlow,
            "space_form" => Mode::SpaceForm,
            "identity_sweep" => Mode::IdentitySweep,
            "nu_study" => Mode::NuStudy,
            "convergence_study" => Mode::ConvergenceStudy,
            other => return Err(ConfigError::UnknownMode(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Seeds every random draw (optimizer starts, test directions).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Write the flow trajectory next to the CSV.
    #[serde(default)]
    pub checkpoint: bool,
}

fn default_m() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub resolution: usize,
    #[serde(default = "default_period")]
    pub period: f64,
    /// Amplitudes of the transverse-traceless seed metric.
    #[serde(default = "default_seed_a")]
    pub seed_a: f64,
    #[serde(default = "default_seed_b")]
    pub seed_b: f64,
}

fn default_period() -> f64 {
    3.0
}
fn default_seed_a() -> f64 {
    1.0
}
fn default_seed_b() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    /// Step as a multiple of `h² / (4n)`; ignored when `dt` is set.
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    #[serde(default)]
    pub dt: Option<f64>,
}

fn default_dt_factor() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    /// Smooth periodic bump of width `1/√κ` with unit mass.
    Bump,
    /// `1 / vol`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSection {
    #[serde(default = "default_terminal_kind")]
    pub kind: TerminalKind,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Bump centre; the box centre when absent.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

fn default_terminal_kind() -> TerminalKind {
    TerminalKind::Bump
}
fn default_kappa() -> f64 {
    2.0
}

impl Default for TerminalSection {
    fn default() -> Self {
        Self {
            kind: default_terminal_kind(),
            kappa: default_kappa(),
            center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFormSection {
    pub c0: f64,
    #[serde(default = "default_vol_hyp")]
    pub vol_hyp: f64,
    pub steps: usize,
    pub dt: f64,
}

fn default_vol_hyp() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuSection {
    /// Number of trajectory times at which the functional is minimized.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Random directions used to check the optimizer gradient.
    #[serde(default = "default_directions")]
    pub directions: usize,
}

fn default_samples() -> usize {
    5
}
fn default_starts() -> usize {
    5
}
fn default_max_iters() -> usize {
    200
}
fn default_directions() -> usize {
    3
}

impl Default for NuSection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            starts: default_starts(),
            max_iters: default_max_iters(),
            directions: default_directions(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Flow, conjugate heat and identity residuals at increasing resolution.
    Flow,
    /// Heat equation on a flat box against a decaying Fourier mode.
    HeatMode,
    /// Step halving of the space-form ODE.
    SpaceForm,
    /// Curvature of a conformally flat metric against its closed form.
    Geometry,
    /// Curvature of the flat metric, which is zero at every level.
    FlatRicci,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub study: Study,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// First resolution (or step count for time-only studies).
    #[serde(default = "default_base")]
    pub base_resolution: usize,
    /// Resolution increment between levels for the flow study; the other
    /// studies double.
    #[serde(default = "default_step")]
    pub resolution_step: usize,
    /// Quantities whose observed order is checked against `min_order`.
    #[serde(default)]
    pub require: Vec<String>,
    /// Quantities whose error must drop by `doubling_factor` when the
    /// resolution doubles, for level pairs that double.
    #[serde(default)]
    pub require_doubling: Vec<String>,
}

fn default_levels() -> usize {
    3
}
fn default_base() -> usize {
    8
}
fn default_step() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    /// Cross-check CG against a dense LU solve on a seed of this resolution.
    #[serde(default)]
    pub dense_pressure_resolution: Option<usize>,
    /// Sample every `identity_stride`-th interior time in identity sweeps.
    #[serde(default = "default_stride")]
    pub identity_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            dense_pressure_resolution: None,
            identity_stride: default_stride(),
        }
    }
}

/// Pass/fail thresholds. Defaults follow the acceptance targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub normalization: f64,
    pub mass_drift: f64,
    pub fd_rel: f64,
    pub nonneg: f64,
    pub w_step_rel: f64,
    pub w_step_abs: f64,
    pub pressure_residual: f64,
    pub min_p: f64,
    pub constraint_drift: f64,
    /// Flow aborts past this drift; unset keeps the run going so that the
    /// whole CSV is written and the drift is judged afterwards.
    pub abort_drift: Option<f64>,
    pub dense_pressure: f64,
    pub stationary: f64,
    pub nu_monotone: f64,
    pub nu_constraint: f64,
    pub gradient_check: f64,
    pub identity_rel: f64,
    pub integrated_identity: f64,
    pub min_order: f64,
    pub doubling_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            normalization: 1e-6,
            mass_drift: 1e-5,
            fd_rel: 0.05,
            nonneg: 1e-8,
            w_step_rel: 1e-6,
            w_step_abs: 1e-8,
            pressure_residual: 1e-10,
            min_p: 1e-8,
            constraint_drift: 1e-3,
            abort_drift: None,
            dense_pressure: 1e-8,
            stationary: 1e-10,
            nu_monotone: 1e-4,
            nu_constraint: 1e-8,
            gradient_check: 1e-4,
            identity_rel: 1e-2,
            integrated_identity: 1e-10,
            min_order: 2.0,
            doubling_factor: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub time: Option<TimeSection>,
    #[serde(default)]
    pub terminal: TerminalSection,
    #[serde(default)]
    pub space_form: Option<SpaceFormSection>,
    #[serde(default)]
    pub nu: NuSection,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(field: &'static str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(field, format!("must be at least {min}, got {v}")))
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    /// Parses and validates.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mode = self.run.mode;
        at_least("run.m", self.run.m, 1)?;
        let needs_grid = !matches!(mode, Mode::SpaceForm)
            && !matches!(
                &self.convergence,
                Some(ConvergenceSection {
                    study: Study::SpaceForm | Study::HeatMode | Study::Geometry | Study::FlatRicci,
                    ..
                })
            );
        if needs_grid {
            if self.run.m != 2 {
                return Err(invalid("run.m", format!("grid modes run on three-dimensional tori (m = 2), got {}", self.run.m)));
            }
            let grid = self.grid.as_ref().ok_or(ConfigError::MissingSection { mode, section: "grid" })?;
            at_least("grid.resolution", grid.resolution, crf_core::grid::MIN_RESOLUTION)?;
            positive("grid.period", grid.period)?;
            if !grid.seed_a.is_finite() || !grid.seed_b.is_finite() {
                return Err(invalid("grid.seed_a", "seed amplitudes must be finite"));
            }
            let time = self.time.as_ref().ok_or(ConfigError::MissingSection { mode, section: "time" })?;
            positive("time.t_final", time.t_final)?;
            positive("time.dt_factor", time.dt_factor)?;
            if let Some(dt) = time.dt {
                positive("time.dt", dt)?;
                if dt > time.t_final {
                    return Err(invalid("time.dt", format!("exceeds time.t_final ({dt} > {})", time.t_final)));
                }
            }
            positive("terminal.kappa", self.terminal.kappa)?;
            if let Some(c) = &self.terminal.center {
                if c.len() != 3 || c.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("terminal.center", "needs three finite coordinates"));
                }
            }
        }
        match mode {
            Mode::SpaceForm => self.validate_space_form(mode)?,
            Mode::NuStudy => {
                at_least("nu.samples", self.nu.samples, 2)?;
                at_least("nu.starts", self.nu.starts, 1)?;
                at_least("nu.max_iters", self.nu.max_iters, 1)?;
                at_least("nu.directions", self.nu.directions, 1)?;
            }
            Mode::ConvergenceStudy => {
                let conv = self
                    .convergence
                    .as_ref()
                    .ok_or(ConfigError::MissingSection { mode, section: "convergence" })?;
                at_least("convergence.levels", conv.levels, 3)?;
                at_least("convergence.base_resolution", conv.base_resolution, 1)?;
                if conv.study == Study::Flow {
                    at_least("convergence.base_resolution", conv.base_resolution, crf_core::grid::MIN_RESOLUTION)?;
                    at_least("convergence.resolution_step", conv.resolution_step, 1)?;
                }
                if conv.study == Study::SpaceForm {
                    self.validate_space_form(mode)?;
                }
            }
            Mode::GridFlow | Mode::IdentitySweep => {}
        }
        at_least("checks.identity_stride", self.checks.identity_stride, 1)?;
        if let Some(r) = self.checks.dense_pressure_resolution {
            at_least("checks.dense_pressure_resolution", r, crf_core::grid::MIN_RESOLUTION)?;
        }
        self.validate_tolerances()
    }

    fn validate_space_form(&self, mode: Mode) -> Result<(), ConfigError> {
        let sf = self
            .space_form
            .as_ref()
            .ok_or(ConfigError::MissingSection { mode, section: "space_form" })?;
        positive("space_form.c0", sf.c0)?;
        positive("space_form.vol_hyp", sf.vol_hyp)?;
        positive("space_form.dt", sf.dt)?;
        at_least("space_form.steps", sf.steps, 1)
    }

    fn validate_tolerances(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        for (field, v) in [
            ("tolerances.normalization", t.normalization),
            ("tolerances.mass_drift", t.mass_drift),
            ("tolerances.fd_rel", t.fd_rel),
            ("tolerances.nonneg", t.nonneg),
            ("tolerances.w_step_rel", t.w_step_rel),
            ("tolerances.w_step_abs", t.w_step_abs),
            ("tolerances.pressure_residual", t.pressure_residual),
            ("tolerances.min_p", t.min_p),
            ("tolerances.constraint_drift", t.constraint_drift),
            ("tolerances.dense_pressure", t.dense_pressure),
            ("tolerances.stationary", t.stationary),
            ("tolerances.nu_monotone", t.nu_monotone),
            ("tolerances.nu_constraint", t.nu_constraint),
            ("tolerances.gradient_check", t.gradient_check),
            ("tolerances.identity_rel", t.identity_rel),
            ("tolerances.integrated_identity", t.integrated_identity),
            ("tolerances.min_order", t.min_order),
            ("tolerances.doubling_factor", t.doubling_factor),
        ] {
            positive(field, v)?;
        }
        if let Some(v) = t.abort_drift {
            positive("tolerances.abort_drift", v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLOW: &str = "[run]\nmode = \"grid_flow\"\n[grid]\nresolution = 8\n[time]\nt_final = 0.01\n";

    fn field_of(text: &str) -> &'static str {
        match text.parse::<ExperimentConfig>() {
            Err(ConfigError::Invalid { field, .. }) => field,
            other => panic!("expected an invalid field, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = FLOW.parse().unwrap();
        assert_eq!(cfg.run.m, 2);
        assert_eq!(cfg.grid.as_ref().unwrap().period, 3.0);
        assert_eq!(cfg.time.as_ref().unwrap().dt_factor, 0.2);
        assert_eq!(cfg.terminal.kind, TerminalKind::Bump);
        assert_eq!(cfg.tolerances, Tolerances::default());
    }

    #[test]
    fn bad_values_name_their_field() {
        assert_eq!(field_of(&FLOW.replace("0.01", "-0.01")), "time.t_final");
        assert_eq!(field_of(&format!("{FLOW}dt = 0")), "time.dt");
        assert_eq!(field_of(&FLOW.replace("resolution = 8", "resolution = 4")), "grid.resolution");
        assert_eq!(field_of(&FLOW.replace("mode = \"grid_flow\"", "mode = \"grid_flow\"\nm = 3")), "run.m");
        assert_eq!(field_of(&format!("{FLOW}[tolerances]\nfd_rel = -1")), "tolerances.fd_rel");
    }

    #[test]
    fn sections_required_by_the_mode() {
        let err = "[run]\nmode = \"space_form\"\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::MissingSection { section: "space_form", .. }));
        let err = "[run]\nmode = \"grid_flow\"\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::MissingSection { section: "grid", .. }));
        let conv = "[run]\nmode = \"convergence_study\"\n[convergence]\nstudy = \"geometry\"\nlevels = 2\n";
        assert_eq!(field_of(conv), "convergence.levels");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            format!("{FLOW}resoluton = 9").parse::<ExperimentConfig>(),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!("grid_flw".parse::<Mode>(), Err(ConfigError::UnknownMode(_))));
    }

    #[test]
    fn checked_in_configs_are_valid() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                count += 1;
            }
        }
        assert!(count >= 14, "{count}");
    }
}
