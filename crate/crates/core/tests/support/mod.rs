#![allow(dead_code)]

use crf_core::flow::FlowConfig;
use crf_core::grid::GridSpec;
use crf_core::seeds::tt_seed;
use crf_core::tensor::MetricField;
use crf_core::yamabe::{normalize, NormalizerConfig};

/// Seed amplitude used for small-grid flow tests; resolvable at 8³.
pub const A: f64 = 0.5;
pub const B: f64 = 0.3;
pub const L: f64 = 3.0;

pub fn grid(res: usize) -> GridSpec<f64> {
    GridSpec::cubic(3, res, L).unwrap()
}

pub fn seed(res: usize) -> MetricField<f64> {
    tt_seed(&grid(res), A, B).unwrap()
}

/// Seed conformally rescaled to `R = −6`.
pub fn normalized(res: usize) -> MetricField<f64> {
    normalize(&seed(res), &NormalizerConfig::for_dim(3)).unwrap().metric
}

/// Observed order from errors at resolutions `r0 < r1`.
pub fn order(e0: f64, e1: f64, r0: f64, r1: f64) -> f64 {
    (e0 / e1).ln() / (r1 / r0).ln()
}

/// Flow settings that record the constraint drift without aborting on it.
pub fn monitor_only() -> FlowConfig<f64> {
    FlowConfig {
        drift_ceiling: f64::INFINITY,
        ..FlowConfig::default()
    }
}
