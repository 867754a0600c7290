//! What an experiment produces: judged invariants, a summary, convergence
//! orders and tables for the CSV writer.

use serde::Serialize;
use serde_json::{Map, Value};

use crf_core::functionals::ReportRow;

use crate::config::Mode;
use crate::orders::QuantityOrders;
use crate::pipeline::GridRun;

#[derive(Debug, Clone, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// `"<"`, `"<="`, `">="`, `">"` or `"=="` against `threshold`.
    pub relation: &'static str,
    pub threshold: f64,
}

impl Invariant {
    fn new(name: impl Into<String>, value: f64, relation: &'static str, threshold: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            relation,
            threshold,
        }
    }

    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, "<", limit, value < limit)
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, "<=", limit, value <= limit)
    }

    pub fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Self::new(name, value, ">=", min, value >= min)
    }

    pub fn above(name: impl Into<String>, value: f64, min: f64) -> Self {
        Self::new(name, value, ">", min, value > min)
    }

    /// A yes/no property, recorded as 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, "==", 1.0, ok)
    }
}

/// An extra CSV file written next to `run.csv`.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub mode: Mode,
    pub invariants: Vec<Invariant>,
    pub summary: Map<String, Value>,
    pub orders: Vec<QuantityOrders>,
    /// Rows of `run.csv`.
    pub rows: Vec<ReportRow<f64>>,
    pub tables: Vec<Table>,
    /// The flow behind `rows`, kept for checkpointing.
    pub trajectory: Option<std::rc::Rc<GridRun>>,
}

impl Outcome {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            invariants: Vec::new(),
            summary: Map::new(),
            orders: Vec::new(),
            rows: Vec::new(),
            tables: Vec::new(),
            trajectory: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Invariant> {
        self.invariants.iter().filter(|i| !i.passed)
    }

    pub fn invariant(&self, name: &str) -> Option<&Invariant> {
        self.invariants.iter().find(|i| i.name == name)
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn report_json(&self) -> Value {
        serde_json::json!({
            "mode": self.mode.name(),
            "passed": self.passed(),
            "invariants": self.invariants,
            "summary": self.summary,
            "orders": self.orders,
        })
    }
}
